"""Differential vulnerability detection against the golden ISA model.

Every simulated test case yields the DUT's architectural state; any
divergence from the golden model on the same instruction stream is a
mismatch.  Triage groups mismatches into vulnerability records keyed by
a bug signature so repeated triggers collapse into one report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .convert import TestCase
from .isa import ArchState, run_golden


@dataclass(frozen=True)
class BugInfo:
    bug_id: str
    design: str
    description: str


# Injected bugs available across the bundled designs.
BUG_CATALOG: Dict[str, BugInfo] = {
    "B1": BugInfo("B1", "pipeline_full",
                  "missing exception when accessing an invalid memory address"),
    "B2": BugInfo("B2", "decoder_demo",
                  "MULH decode misses the odd-destination illegal check"),
    "B3": BugInfo("B3", "csr_demo",
                  "unallocated CSR read returns an undefined (poison) value"),
    "B4": BugInfo("B4", "pipeline_full",
                  "carry flag derived from the wrong bit of the adder result"),
    "B5": BugInfo("B5", "csr_demo",
                  "missing privileged-access check on CSR writes"),
}


@dataclass(frozen=True)
class BugInjection:
    bug_id: str
    enabled: bool = True

    def __post_init__(self):
        if self.bug_id not in BUG_CATALOG:
            raise ValueError(f"unknown bug id '{self.bug_id}'")


@dataclass(frozen=True)
class Mismatch:
    kind: str  # gpr | csr | commits | exception | poison
    index: int  # register index, exception ordinal, or 0
    dut: object
    golden: object

    def describe(self) -> str:
        if self.kind == "gpr":
            return f"r{self.index}: dut={self.dut:#x} golden={self.golden:#x}"
        if self.kind == "csr":
            return f"csr{self.index}: dut={self.dut:#x} golden={self.golden:#x}"
        if self.kind == "commits":
            return f"commit count: dut={self.dut} golden={self.golden}"
        if self.kind == "exception":
            return f"exception[{self.index}]: dut={self.dut} golden={self.golden}"
        return "poison value committed to architectural state"


def golden_run(tc: TestCase) -> ArchState:
    return run_golden(tc.words)


def diff(dut: ArchState, golden: ArchState) -> List[Mismatch]:
    out: List[Mismatch] = []
    for i, (a, b) in enumerate(zip(dut.gprs, golden.gprs)):
        if a != b:
            out.append(Mismatch("gpr", i, a, b))
    for i, (a, b) in enumerate(zip(dut.csrs, golden.csrs)):
        if a != b:
            out.append(Mismatch("csr", i, a, b))
    if dut.commits != golden.commits:
        out.append(Mismatch("commits", 0, dut.commits, golden.commits))
    n = max(len(dut.exceptions), len(golden.exceptions))
    for i in range(n):
        a = dut.exceptions[i] if i < len(dut.exceptions) else None
        b = golden.exceptions[i] if i < len(golden.exceptions) else None
        if a != b:
            out.append(Mismatch("exception", i, a, b))
    if dut.poison_observed:
        out.append(Mismatch("poison", 0, True, False))
    return out


def _signature(mismatches: List[Mismatch]) -> Tuple[str, int]:
    """Bug signature: first mismatch kind plus the first divergent
    location (exception pc when available, else field index)."""
    m = mismatches[0]
    if m.kind == "exception":
        ref = m.golden if m.golden is not None else m.dut
        return (m.kind, ref[1] if ref else 0)
    return (m.kind, m.index)


@dataclass
class Witness:
    testcase_id: str
    virtual_time: int
    instructions: int
    provenance: dict


@dataclass
class VulnerabilityRecord:
    signature: Tuple[str, int]
    description: str
    first_time: int
    first_instructions: int
    witnesses: List[Witness] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "signature": list(self.signature),
            "description": self.description,
            "first_time": self.first_time,
            "first_instructions": self.first_instructions,
            "witnesses": len(self.witnesses),
        }


@dataclass
class Triage:
    """Deduplicating collector of mismatch evidence over a campaign."""

    records: Dict[Tuple[str, int], VulnerabilityRecord] = field(default_factory=dict)
    total_instructions: int = 0

    def observe(self, mismatches: List[Mismatch], tc: TestCase,
                virtual_time: int, instructions: int) -> Optional[VulnerabilityRecord]:
        if not mismatches:
            return None
        sig = _signature(mismatches)
        rec = self.records.get(sig)
        if rec is None:
            rec = VulnerabilityRecord(
                signature=sig,
                description="; ".join(m.describe() for m in mismatches[:3]),
                first_time=virtual_time,
                first_instructions=instructions,
            )
            self.records[sig] = rec
        rec.witnesses.append(Witness(tc.id, virtual_time, instructions,
                                     dict(tc.provenance)))
        return rec

    def report(self) -> List[VulnerabilityRecord]:
        return [self.records[k] for k in sorted(self.records)]
