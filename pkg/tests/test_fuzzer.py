"""Mutation engine, corpus scheduling, and the r_fuzz window."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from hyfuzz import fuzz
from hyfuzz.convert import TEST_CAPACITY, build_template, make_testcase
from hyfuzz.coverage import CoverageMap, instrument
import conftest as C


# ----------------------------------------------------------------------
# r_fuzz (Eq. 2) hand values

def test_rfuzz_hand_computed():
    w = fuzz.FuzzWindow(w=3)
    for n, t in ((2, 10), (0, 10), (1, 10)):
        w.push(n, t)
    assert fuzz.rfuzz(w) == 0.1


def test_rfuzz_zero_cases():
    w = fuzz.FuzzWindow(w=3)
    assert fuzz.rfuzz(w) == 0.0
    w.push(0, 10)
    assert fuzz.rfuzz(w) == 0.0  # all n = 0
    w2 = fuzz.FuzzWindow(w=3)
    w2.push(5, 50)
    assert fuzz.rfuzz(w2) == 0.1  # single record


def test_window_underfill_uses_available_records():
    w = fuzz.FuzzWindow(w=100)
    w.push(3, 10)
    w.push(1, 10)
    assert fuzz.rfuzz(w) == 4 / 20


def test_window_evicts_oldest():
    w = fuzz.FuzzWindow(w=2)
    w.push(10, 1)
    w.push(1, 1)
    w.push(1, 1)
    assert len(w) == 2
    assert fuzz.rfuzz(w) == 1.0


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 1000)),
                min_size=1, max_size=400),
       st.integers(1, 64))
@settings(max_examples=25, deadline=None)
def test_window_incremental_equals_bruteforce(updates, width):
    w = fuzz.FuzzWindow(w=width)
    for n, t in updates:
        w.push(n, t)
        assert (w._sum_n, w._sum_t) == w.recompute()


def test_window_bruteforce_ten_thousand_updates():
    rng = random.Random(77)
    w = fuzz.FuzzWindow(w=100)
    for _ in range(10_000):
        w.push(rng.randrange(10), rng.randrange(1000))
        assert (w._sum_n, w._sum_t) == w.recompute()


# ----------------------------------------------------------------------
# mutators

def _template():
    return make_testcase("t0", [0x12345678, 0x9ABCDEF0])


@pytest.mark.parametrize("name", fuzz.MUTATORS)
def test_mutators_preserve_testcase_shape(name):
    rng = random.Random(3)
    tc = _template()
    for _ in range(50):
        out = fuzz.mutate(tc, rng, mutator=name)
        assert out.init_range == tc.init_range
        assert out.test_range == tc.test_range
        assert out.exit_range == tc.exit_range
        assert len(out.words) == len(tc.words)
        a, b = tc.init_range
        assert out.words[a:b] == tc.words[a:b]  # INIT untouched
        a, b = tc.exit_range
        assert out.words[a:b] == tc.words[a:b]  # EXIT untouched


def test_mutate_changes_only_test_section():
    rng = random.Random(4)
    tc = _template()
    out = fuzz.mutate(tc, rng, mutator="byteflip")
    diffs = [i for i, (x, y) in enumerate(zip(tc.words, out.words)) if x != y]
    a, b = tc.test_range
    assert diffs and all(a <= i < b for i in diffs)


def test_mutate_is_deterministic_under_seed():
    tc = _template()
    w1 = fuzz.mutate(tc, random.Random(9)).words
    w2 = fuzz.mutate(tc, random.Random(9)).words
    assert w1 == w2


def test_mutate_rejects_empty_test_section():
    tc = make_testcase("x", [1])
    tc.test_range = (tc.test_range[0], tc.test_range[0])
    with pytest.raises(fuzz.FuzzError):
        fuzz.mutate(tc, random.Random(0))


# ----------------------------------------------------------------------
# corpus and batches

def test_corpus_round_robin():
    corpus = fuzz.Corpus()
    a = make_testcase("a", [1])
    b = make_testcase("b", [2])
    corpus.add(a)
    corpus.add(b)
    picks = [corpus.next_parent().id for _ in range(4)]
    assert picks == ["a", "b", "a", "b"]


def test_run_batch_requires_corpus():
    cd = C.compiled("fsm_demo")
    cmap = CoverageMap(instrument(C.load("fsm_demo")))
    with pytest.raises(fuzz.FuzzError):
        fuzz.run_batch(cd, fuzz.Corpus(), cmap, fuzz.FuzzWindow(), random.Random(0))


def test_run_batch_promotes_interesting_cases():
    cd = C.compiled("fsm_demo")
    cmap = CoverageMap(instrument(C.load("fsm_demo")))
    corpus = fuzz.Corpus()
    fuzz.seed_corpus(corpus)
    window = fuzz.FuzzWindow(w=10)
    rng = random.Random(1)
    results = fuzz.run_batch(cd, corpus, cmap, window, rng, batch_size=20)
    assert len(results) == 20
    assert cmap.covered > 0
    assert len(window) == 10  # capped at w
    promoted = len(corpus) - 1
    assert promoted == sum(1 for r in results if r.new_points > 0)
