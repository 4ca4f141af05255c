"""Instruction set definition and the golden architectural model.

The golden model executes instruction words independently of any design
and produces the architectural state a correct core must match.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

WORD_BITS = 32
GPR_COUNT = 16
GPR_BITS = 16
CSR_COUNT = 4
MEM_WORDS = 8

# opcodes
NOP = 0x00
ADD = 0x01
SUB = 0x02
AND = 0x03
OR = 0x04
XOR = 0x05
ADDI = 0x06
LDI = 0x07
MUL = 0x08
MULH = 0x09
LW = 0x0A
SW = 0x0B
BEQ = 0x0C
JAL = 0x0D
CSRRW = 0x0E
CSRRS = 0x0F
EBREAK = 0x10

OPCODES = {
    "nop": NOP, "add": ADD, "sub": SUB, "and": AND, "or": OR, "xor": XOR,
    "addi": ADDI, "ldi": LDI, "mul": MUL, "mulh": MULH, "lw": LW, "sw": SW,
    "beq": BEQ, "jal": JAL, "csrrw": CSRRW, "csrrs": CSRRS, "ebreak": EBREAK,
}
MNEMONICS = {v: k for k, v in OPCODES.items()}

# CSR addresses
MSTATUS = 0
MIE = 1
MIP = 2
MEPC = 3

CSR_WIDTH = {MSTATUS: 3, MIE: 3, MIP: 3, MEPC: 8}

# mstatus bits
FLAG_CARRY = 1
FLAG_OVF = 2
FLAG_PRIV = 4

# exception codes (shared with designs)
EXC_ILLEGAL = 1
EXC_ACCESS = 2
EXC_BREAK = 3


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Instr:
    opcode: int
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0

    def __str__(self):
        m = MNEMONICS.get(self.opcode, f"op{self.opcode:#x}")
        return f"{m} rd={self.rd} rs1={self.rs1} rs2={self.rs2} imm={self.imm}"


def encode(instr: Instr) -> int:
    for name, val, bits in (("opcode", instr.opcode, 8), ("rd", instr.rd, 4),
                            ("rs1", instr.rs1, 4), ("rs2", instr.rs2, 4),
                            ("imm", instr.imm, 12)):
        if not 0 <= val < (1 << bits):
            raise EncodingError(f"{name} value {val} out of range")
    return (instr.opcode << 24) | (instr.rd << 20) | (instr.rs1 << 16) | \
        (instr.rs2 << 12) | instr.imm


def decode(word: int) -> Instr:
    if not 0 <= word < (1 << WORD_BITS):
        raise EncodingError(f"word {word:#x} out of range")
    return Instr(opcode=(word >> 24) & 0xFF, rd=(word >> 20) & 0xF,
                 rs1=(word >> 16) & 0xF, rs2=(word >> 12) & 0xF,
                 imm=word & 0xFFF)


def asm(op: str, rd: int = 0, rs1: int = 0, rs2: int = 0, imm: int = 0) -> int:
    """Shorthand used by tests and the test-case template builder."""
    return encode(Instr(OPCODES[op], rd, rs1, rs2, imm))


@dataclass
class ArchState:
    """Architecturally visible state after a run."""

    gprs: List[int] = field(default_factory=lambda: [0] * GPR_COUNT)
    csrs: List[int] = field(default_factory=lambda: [0, 0, 0, 0])
    commits: int = 0
    exceptions: List[Tuple[int, int]] = field(default_factory=list)  # (code, pc)
    poison_observed: bool = False

    def diff(self, other: "ArchState") -> List[str]:
        out = []
        for i, (a, b) in enumerate(zip(self.gprs, other.gprs)):
            if a != b:
                out.append(f"r{i}: {a:#x} != {b:#x}")
        for i, (a, b) in enumerate(zip(self.csrs, other.csrs)):
            if a != b:
                out.append(f"csr{i}: {a:#x} != {b:#x}")
        if self.commits != other.commits:
            out.append(f"commits: {self.commits} != {other.commits}")
        if self.exceptions != other.exceptions:
            out.append(f"exceptions: {self.exceptions} != {other.exceptions}")
        if other.poison_observed:
            out.append("poison value committed to architectural state")
        return out


class GoldenModel:
    """Reference executor for the instruction set."""

    def __init__(self):
        self.gprs = [0] * GPR_COUNT
        self.csrs = [0, 0, 0, 0]
        self.mem = [0] * MEM_WORDS
        self.pc = 0
        self.commits = 0
        self.exceptions: List[Tuple[int, int]] = []
        self.halted = False
        self.skip = 0

    # -- helpers ------------------------------------------------------
    def _wr(self, rd: int, value: int):
        if rd != 0:
            self.gprs[rd] = value & 0xFFFF

    def _flags(self, carry: int, ovf: int):
        ms = self.csrs[MSTATUS] & ~(FLAG_CARRY | FLAG_OVF)
        self.csrs[MSTATUS] = ms | (FLAG_CARRY if carry else 0) | \
            (FLAG_OVF if ovf else 0)

    def _exc(self, code: int):
        self.exceptions.append((code, self.pc & 0x7F))
        if code != EXC_BREAK:
            self.csrs[MEPC] = self.pc & 0x7F

    def step(self, word: int):
        """Execute one instruction word; pc advances by one per word."""
        if self.halted:
            return
        if self.skip:
            self.skip -= 1
            self.pc += 1
            return
        ins = decode(word)
        op = ins.opcode
        a = self.gprs[ins.rs1]
        b = self.gprs[ins.rs2]
        priv = bool(self.csrs[MSTATUS] & FLAG_PRIV)
        committed = True
        if op == NOP:
            pass
        elif op == ADD:
            r = a + b
            sa, sb, sr = a >> 15, b >> 15, (r >> 15) & 1
            self._flags(r >> 16, 1 if sa == sb and sr != sa else 0)
            self._wr(ins.rd, r)
        elif op == SUB:
            r = (a - b) & 0x1FFFF
            sa, sb, sr = a >> 15, b >> 15, (r >> 15) & 1
            self._flags(1 if a < b else 0, 1 if sa != sb and sr != sa else 0)
            self._wr(ins.rd, r)
        elif op == AND:
            self._wr(ins.rd, a & b)
        elif op == OR:
            self._wr(ins.rd, a | b)
        elif op == XOR:
            self._wr(ins.rd, a ^ b)
        elif op == ADDI:
            self._wr(ins.rd, a + ins.imm)
        elif op == LDI:
            self._wr(ins.rd, ins.imm)
        elif op == MUL:
            self._wr(ins.rd, (a * b) & 0xFFFF)
        elif op == MULH:
            # the high half conceptually occupies a register pair, so an
            # odd destination register is an illegal encoding
            if ins.rd & 1:
                committed = False
                self._exc(EXC_ILLEGAL)
            else:
                self._wr(ins.rd, (a * b) >> 16)
        elif op == LW:
            addr = ins.imm & 0xF
            if addr >= MEM_WORDS:
                committed = False
                self._exc(EXC_ACCESS)
            else:
                self._wr(ins.rd, self.mem[addr])
        elif op == SW:
            addr = ins.imm & 0xF
            if addr >= MEM_WORDS:
                committed = False
                self._exc(EXC_ACCESS)
            else:
                self.mem[addr] = b
        elif op == BEQ:
            # toy branch: rs1 names a register to compare against r0, and
            # the comparison is folded at decode time (r0 is hardwired
            # zero, so only the selector matters).  Skips up to three
            # following instructions.
            if ins.rs1 == 0:
                self.skip = ins.imm & 0x3
        elif op == JAL:
            self._wr(ins.rd, (self.pc + 1) & 0x7F)
            self.skip = ins.imm & 0x3
        elif op == CSRRW or op == CSRRS:
            csr = ins.rs2
            if csr != MSTATUS and not priv:
                committed = False
                self._exc(EXC_ILLEGAL)
            elif csr >= CSR_COUNT:
                # unallocated CSR: reads as zero, writes are dropped
                self._wr(ins.rd, 0)
            else:
                self._wr(ins.rd, self.csrs[csr])
                w = CSR_WIDTH[csr]
                v = ins.imm & ((1 << w) - 1)
                if op == CSRRW:
                    self.csrs[csr] = v
                else:
                    self.csrs[csr] |= v
        elif op == EBREAK:
            self._exc(EXC_BREAK)
            self.halted = True
        else:
            committed = False
            self._exc(EXC_ILLEGAL)
        if committed:
            self.commits += 1
        self.pc += 1

    def run(self, words) -> ArchState:
        for w in words:
            if self.halted:
                break
            self.step(w)
        return self.state()

    def state(self) -> ArchState:
        return ArchState(gprs=list(self.gprs), csrs=list(self.csrs),
                         commits=self.commits, exceptions=list(self.exceptions),
                         poison_observed=False)


def run_golden(words) -> ArchState:
    return GoldenModel().run(words)
