"""Instrumentation point allocation and coverage bookkeeping."""

from collections import Counter

import pytest

from hyfuzz.coverage import (ContradictionError, CoverageMap, instrument)
import conftest as C

# frozen instrument totals for the bundled designs
EXPECTED_TOTALS = {
    "fsm_demo": 18,
    "irq_demo": 56,
    "decoder_demo": 198,
    "csr_demo": 222,
    "pipeline_full": 290,
}


@pytest.mark.parametrize("name", C.DESIGN_NAMES)
def test_bundled_instrument_totals(name):
    reg = instrument(C.load(name))
    assert len(reg.points) == EXPECTED_TOTALS[name]


def test_fsm_demo_per_metric_counts(fsm_demo):
    counts = Counter(p.kind for p in instrument(fsm_demo).points)
    assert counts == {"branch": 2, "condition": 8, "expression": 4,
                      "fsm_state": 2, "fsm_transition": 1, "toggle": 1}


def test_metric_subset_selection(fsm_demo):
    reg = instrument(fsm_demo, metrics=("branch", "toggle"))
    assert {p.kind for p in reg.points} == {"branch", "toggle"}


def test_absorb_and_fraction(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    assert cmap.covered == 0
    new = cmap.absorb([0, 1, 2], "tc0", 10)
    assert new == 3
    assert cmap.absorb([1, 2], "tc1", 11) == 0  # already covered
    assert cmap.coverage_fraction() == 3 / 18


def test_unreachable_adjusts_denominator(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    cmap.absorb([0], "tc", 1)
    cmap.mark_unreachable(5)
    assert cmap.coverage_fraction() == 1 / 17
    assert cmap.coverage_fraction(adjusted=False) == 1 / 18


def test_covering_an_unreachable_point_is_a_contradiction(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    cmap.mark_unreachable(4)
    with pytest.raises(ContradictionError):
        cmap.absorb([4], "tc", 1)


def test_deferred_points_leave_the_pool(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    pool = cmap.selectable_points()
    cmap.mark_deferred(pool[0])
    assert pool[0] not in cmap.selectable_points()


def test_retry_requires_full_attempt_sweep(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    cmap.mark_deferred(0)
    assert cmap.retry_deferred_if_exhausted() == 0  # others unattempted
    for pid in cmap.selectable_points():
        cmap.mark_attempted(pid)
    assert cmap.retry_deferred_if_exhausted() == 1
    assert 0 in cmap.selectable_points()


def test_uncovered_by_module_tracks_absorb(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    before = sum(len(v) for v in cmap.uncovered_by_module().values())
    cmap.absorb([0, 1], "tc", 1)
    after = sum(len(v) for v in cmap.uncovered_by_module().values())
    assert before - after == 2


def test_snapshot_lines_stable(fsm_demo):
    cmap = CoverageMap(instrument(fsm_demo))
    cmap.absorb([0], "tc", 1)
    lines = cmap.snapshot_lines()
    assert lines == cmap.snapshot_lines()
    assert sum(1 for ln in lines if not ln.startswith("#")) == 18
