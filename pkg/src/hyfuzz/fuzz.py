"""Coverage-guided mutation fuzzing and the rolling coverage-rate window.

The fuzzer mutates interesting test cases (those that covered at least
one new point), executes them in batches, and maintains the rolling
window behind the r_fuzz rate that drives phase switching.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Tuple

from .convert import TestCase, make_testcase
from .coverage import CoverageMap
from .sim import CompiledDesign, RunRecord

MUTATORS = ("bitflip-1", "bitflip-2", "bitflip-4", "byteflip", "random-8",
            "clone-instruction", "swap-instructions")

DEFAULT_WINDOW = 100
DEFAULT_BATCH = 10


class FuzzError(RuntimeError):
    pass


@dataclass
class FuzzWindow:
    """Ring buffer of the last w per-test-case (new points, time) records."""

    w: int = DEFAULT_WINDOW
    _buf: Deque[Tuple[int, int]] = field(default_factory=deque)
    _sum_n: int = 0
    _sum_t: int = 0

    def push(self, n: int, t: int):
        self._buf.append((n, t))
        self._sum_n += n
        self._sum_t += t
        if len(self._buf) > self.w:
            old_n, old_t = self._buf.popleft()
            self._sum_n -= old_n
            self._sum_t -= old_t

    def __len__(self):
        return len(self._buf)

    @property
    def sums(self) -> Tuple[int, int]:
        return self._sum_n, self._sum_t

    def recompute(self) -> Tuple[int, int]:
        """Brute-force sums, for the incremental-correctness check."""
        return sum(n for n, _ in self._buf), sum(t for _, t in self._buf)

    def rate(self) -> float:
        if not self._buf or self._sum_t == 0 or self._sum_n == 0:
            return 0.0
        return self._sum_n / self._sum_t


def rfuzz(window: FuzzWindow) -> float:
    return window.rate()


@dataclass
class Corpus:
    """Interesting test cases plus a FIFO round-robin mutation queue."""

    entries: List[TestCase] = field(default_factory=list)
    _queue: Deque[int] = field(default_factory=deque)
    _next_id: int = 0

    def __len__(self):
        return len(self.entries)

    def add(self, tc: TestCase):
        self.entries.append(tc)
        self._queue.append(len(self.entries) - 1)

    def next_parent(self) -> TestCase:
        if not self._queue:
            raise FuzzError("corpus is empty; the formal phase must seed it")
        i = self._queue.popleft()
        self._queue.append(i)
        return self.entries[i]

    def fresh_id(self, prefix: str) -> str:
        self._next_id += 1
        return f"{prefix}{self._next_id:06d}"


def seed_corpus(corpus: Corpus) -> TestCase:
    """All-NOP template seed used when no formal seed exists yet."""
    tc = make_testcase(corpus.fresh_id("init"), [],
                       {"kind": "initial-corpus"})
    corpus.add(tc)
    return tc


# ----------------------------------------------------------------------
# mutation operators (TEST section only)

def _test_bytes(tc: TestCase) -> bytearray:
    import struct
    return bytearray(b"".join(struct.pack("<I", w) for w in tc.test_words))


def _write_test_bytes(tc: TestCase, data: bytearray):
    import struct
    for i in range(len(data) // 4):
        tc.set_test_word(i, struct.unpack_from("<I", data, 4 * i)[0])


def mutate(tc: TestCase, rng: random.Random,
           mutator: Optional[str] = None) -> TestCase:
    """One mutation of the TEST section; INIT and EXIT are never touched."""
    a, b = tc.test_range
    if b - a == 0:
        raise FuzzError("cannot mutate an empty TEST section")
    name = mutator if mutator is not None else rng.choice(MUTATORS)
    out = TestCase(id=f"{tc.id}'", words=list(tc.words),
                   init_range=tc.init_range, test_range=tc.test_range,
                   exit_range=tc.exit_range,
                   provenance={"kind": "mutation", "parent": tc.id,
                               "mutator": name})
    n = b - a
    if name in ("bitflip-1", "bitflip-2", "bitflip-4"):
        k = int(name.rsplit("-", 1)[1])
        data = _test_bytes(out)
        bits = len(data) * 8
        pos = rng.randrange(bits - k + 1)
        for i in range(k):
            data[(pos + i) // 8] ^= 1 << ((pos + i) % 8)
        _write_test_bytes(out, data)
    elif name == "byteflip":
        data = _test_bytes(out)
        pos = rng.randrange(len(data))
        data[pos] ^= 0xFF
        _write_test_bytes(out, data)
    elif name == "random-8":
        data = _test_bytes(out)
        pos = rng.randrange(len(data))
        old = data[pos]
        new = rng.randrange(256)
        while new == old:
            new = rng.randrange(256)
        data[pos] = new
        _write_test_bytes(out, data)
    elif name == "clone-instruction":
        src = rng.randrange(n)
        dst = rng.randrange(n)
        words = out.test_words
        words.insert(dst, words[src])
        words.pop()  # drop the last word to stay within capacity
        for i, w in enumerate(words):
            out.set_test_word(i, w)
    elif name == "swap-instructions":
        i, j = rng.randrange(n), rng.randrange(n)
        wi, wj = out.words[a + i], out.words[a + j]
        out.set_test_word(i, wj)
        out.set_test_word(j, wi)
    else:
        raise FuzzError(f"unknown mutator '{name}'")
    return out


# ----------------------------------------------------------------------

@dataclass
class BatchResult:
    testcase: TestCase
    record: RunRecord
    new_points: int


def run_batch(cd: CompiledDesign, corpus: Corpus, cmap: CoverageMap,
              window: FuzzWindow, rng: random.Random,
              batch_size: int = DEFAULT_BATCH) -> List[BatchResult]:
    """Mutate, simulate and absorb one batch; promotes interesting cases."""
    if batch_size <= 0:
        raise FuzzError("batch size must be positive")
    if len(corpus) == 0:
        raise FuzzError("corpus is empty; the formal phase must seed it")
    staged = []
    for _ in range(batch_size):
        parent = corpus.next_parent()
        tc = mutate(parent, rng)
        tc.id = corpus.fresh_id("mut")
        rec = cd.run_words(tc.words, tc.id)
        staged.append((tc, rec))
    # commit in batch order for determinism
    results = []
    for tc, rec in staged:
        new = cmap.absorb(sorted(rec.fired), tc.id, rec.virtual_time)
        if new > 0:
            corpus.add(tc)
        window.push(new, rec.virtual_time)
        results.append(BatchResult(tc, rec, new))
    return results
