"""Trace-to-testcase conversion and the testcase binary format.

A test case is a word-aligned instruction stream in three sections:
INIT (architectural state zeroing), TEST (the payload the fuzzer
mutates), EXIT (breakpoint termination).  Reachability traces become
seeds by extracting the instruction stream and dropping it into the
TEST section of the template.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import isa
from .formal import Trace
from .ir import Design
from .sim import CompiledDesign, compile_design

MAGIC = b"HYTC"
VERSION = 1
HEADER = struct.Struct("<4sHHHHH2x")  # magic, version, init, test, exit, total

TEST_CAPACITY = 64


class ConvertError(ValueError):
    pass


@dataclass
class TestCase:
    id: str
    words: List[int]
    init_range: Tuple[int, int]  # [start, end) word indices
    test_range: Tuple[int, int]
    exit_range: Tuple[int, int]
    provenance: Dict[str, object] = field(default_factory=lambda: {"kind": "initial-corpus"})

    @property
    def test_words(self) -> List[int]:
        a, b = self.test_range
        return self.words[a:b]

    def set_test_word(self, i: int, word: int):
        a, b = self.test_range
        if not 0 <= i < b - a:
            raise ConvertError(f"TEST slot {i} out of range")
        self.words[a + i] = word & 0xFFFFFFFF

    def to_bytes(self) -> bytes:
        hdr = HEADER.pack(MAGIC, VERSION, self.init_range[0], self.test_range[0],
                          self.exit_range[0], len(self.words))
        body = b"".join(struct.pack("<I", w) for w in self.words)
        return hdr + body

    @classmethod
    def from_bytes(cls, data: bytes, tc_id: str = "") -> "TestCase":
        if len(data) < HEADER.size:
            raise ConvertError("truncated testcase header")
        magic, version, init_off, test_off, exit_off, total = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ConvertError("bad testcase magic")
        if version != VERSION:
            raise ConvertError(f"unsupported testcase version {version}")
        body = data[HEADER.size:]
        if len(body) != 4 * total:
            raise ConvertError("testcase length does not match header")
        words = list(struct.unpack(f"<{total}I", body))
        if not init_off <= test_off < exit_off <= total:
            raise ConvertError("testcase sections do not partition the stream")
        return cls(id=tc_id, words=words, init_range=(init_off, test_off),
                   test_range=(test_off, exit_off), exit_range=(exit_off, total))


def build_template() -> List[int]:
    """INIT: enter privileged mode, zero every CSR and GPR, drop back to
    user mode.  The sequence is architecturally neutral: state after INIT
    equals state at reset, so formal traces replay faithfully."""
    init = [
        isa.asm("csrrw", rs2=isa.MSTATUS, imm=isa.FLAG_PRIV),
        isa.asm("csrrw", rs2=isa.MIE, imm=0),
        isa.asm("csrrw", rs2=isa.MIP, imm=0),
        isa.asm("csrrw", rs2=isa.MEPC, imm=0),
    ]
    for r in range(1, isa.GPR_COUNT):
        init.append(isa.asm("ldi", rd=r, imm=0))
    init.append(isa.asm("csrrw", rs2=isa.MSTATUS, imm=0))
    return init


_NOP = 0  # isa.asm("nop") with all fields zero


def make_testcase(tc_id: str, payload: Optional[List[int]] = None,
                  provenance: Optional[dict] = None) -> TestCase:
    init = build_template()
    test = [_NOP] * TEST_CAPACITY
    payload = payload or []
    if len(payload) > TEST_CAPACITY:
        raise ConvertError(
            f"payload of {len(payload)} words exceeds TEST capacity {TEST_CAPACITY}")
    for i, w in enumerate(payload):
        test[i] = w & 0xFFFFFFFF
    words = init + test + [isa.asm("ebreak")]
    n_init, n_test = len(init), len(test)
    tc = TestCase(id=tc_id, words=words, init_range=(0, n_init),
                  test_range=(n_init, n_init + n_test),
                  exit_range=(n_init + n_test, len(words)))
    if provenance is not None:
        tc.provenance = dict(provenance)
    return tc


def extract_instructions(trace: Trace, design: Design,
                         cd: Optional[CompiledDesign] = None) -> List[int]:
    """Instruction words seen on the declared instruction port, one per
    trace cycle, with valid-qualified stall repetitions collapsed."""
    iport = design.meta.get("instruction_port")
    if iport is None:
        raise ConvertError("design lacks an instruction-port declaration")
    try:
        col = trace.input_ids.index(iport)
    except ValueError:
        raise ConvertError(f"trace does not assign '{iport}'")
    words = [xs[col] for xs in trace.inputs]
    if design.meta.get("valid") is None:
        return words
    # read the valid qualifier by replaying the trace
    cd = cd or compile_design(design)
    regs = cd.reset_regs
    out: List[int] = []
    prev_word = None
    for xs in trace.inputs:
        _N, _NP, W, _F, _NT = cd.kernel(regs, None, xs, 0)
        word = xs[col]
        if W[0] or word != prev_word:
            out.append(word)
        prev_word = word
        regs = _N
    return out


def trace_to_testcase(tc_id: str, trace: Trace, design: Design,
                      point_id: int, cd: Optional[CompiledDesign] = None) -> TestCase:
    payload = extract_instructions(trace, design, cd)
    return make_testcase(tc_id, payload,
                         {"kind": "formal-seed", "point": point_id})


def replay_check(design: Design, tc: TestCase, point_id: int,
                 cd: Optional[CompiledDesign] = None) -> bool:
    """True iff simulating the test case fires the target point."""
    cd = cd or compile_design(design)
    rec = cd.run_words(tc.words, tc.id)
    return point_id in rec.fired


# ----------------------------------------------------------------------
# corpus directory layout: corpus/<campaign>/<id>.tc

def save_testcase(directory, tc: TestCase):
    import os
    path = os.path.join(str(directory), f"{tc.id}.tc")
    with open(path, "wb") as fh:
        fh.write(tc.to_bytes())
    return path


def load_testcase(path) -> TestCase:
    import os
    tc_id = os.path.splitext(os.path.basename(str(path)))[0]
    with open(path, "rb") as fh:
        return TestCase.from_bytes(fh.read(), tc_id)
