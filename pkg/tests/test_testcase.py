"""Testcase binary format, trace extraction, and replay checks."""

import random

import pytest

import conftest as C
from hyfuzz import isa
from hyfuzz.convert import (
    HEADER,
    TEST_CAPACITY,
    ConvertError,
    TestCase,
    build_template,
    extract_instructions,
    load_testcase,
    make_testcase,
    save_testcase,
    trace_to_testcase,
)
from hyfuzz.formal import FormalConfig, FormalStats, prove_point
from hyfuzz.sim import compile_design


def test_template_shape():
    init = build_template()
    # priv enter + 3 CSR clears + 15 GPR clears + priv exit
    assert len(init) == 4 + (isa.GPR_COUNT - 1) + 1
    assert init[0] == isa.asm("csrrw", rs2=isa.MSTATUS, imm=isa.FLAG_PRIV)
    assert init[-1] == isa.asm("csrrw", rs2=isa.MSTATUS, imm=0)


def test_make_testcase_sections():
    tc = make_testcase("t0", [1, 2, 3])
    a, b = tc.test_range
    assert b - a == TEST_CAPACITY
    assert tc.test_words[:3] == [1, 2, 3]
    assert all(w == 0 for w in tc.test_words[3:])
    assert tc.words[tc.exit_range[0]] == isa.asm("ebreak")
    assert tc.init_range[0] == 0 and tc.exit_range[1] == len(tc.words)


def test_capacity_enforced():
    make_testcase("fits", [0] * TEST_CAPACITY)
    with pytest.raises(ConvertError):
        make_testcase("big", [0] * (TEST_CAPACITY + 1))


def test_bytes_round_trip():
    tc = make_testcase("rt", [0xDEADBEEF, 0x12345678])
    blob = tc.to_bytes()
    back = TestCase.from_bytes(blob, "rt")
    assert back.words == tc.words
    assert back.init_range == tc.init_range
    assert back.test_range == tc.test_range
    assert back.exit_range == tc.exit_range


def test_bad_blobs_rejected():
    tc = make_testcase("x")
    blob = tc.to_bytes()
    with pytest.raises(ConvertError):
        TestCase.from_bytes(blob[: HEADER.size - 1])
    with pytest.raises(ConvertError):
        TestCase.from_bytes(b"NOPE" + blob[4:])
    with pytest.raises(ConvertError):
        TestCase.from_bytes(blob + b"\x00\x00\x00\x00")


def test_file_round_trip(tmp_path):
    tc = make_testcase("file-rt", [7, 8, 9], {"kind": "unit"})
    path = save_testcase(tmp_path, tc)
    back = load_testcase(path)
    assert back.id == "file-rt"
    assert back.words == tc.words


def test_init_is_architecturally_neutral():
    """State after executing INIT alone equals the reset state."""
    design = C.load("pipeline_full")
    cd = C.compiled("pipeline_full")
    tc = make_testcase("neutral", [])
    rec = cd.run_words(tc.words, "neutral")
    arch = {s.name: rec.final[cd.reg_index[s.name]]
            for m in design.modules for s in m.signals
            if s.kind == "reg" and s.name in cd.reg_index}
    for name, val in arch.items():
        if name.startswith(("gpr", "mstatus", "mie", "mip", "mepc")):
            assert val == 0, f"{name} left nonzero by INIT"


def _proved_trace(name):
    design = C.load(name)
    cd = C.compiled(name)
    cfg = FormalConfig()
    stats = FormalStats()
    for p in cd.registry.points:
        res = prove_point(design, p, cfg, stats, cd=cd)
        if res.verdict == "reachable":
            return design, cd, p, res.trace
    pytest.skip(f"no reachable point proved on {name}")


def test_extract_and_replay():
    design, cd, point, trace = _proved_trace("irq_demo")
    payload = extract_instructions(trace, design, cd)
    assert payload, "reachable trace must drive at least one instruction"
    tc = trace_to_testcase("seed0", trace, design, point.id, cd)
    assert tc.provenance == {"kind": "formal-seed", "point": point.id}
    rec = cd.run_words(tc.words, "seed0")
    assert point.id in rec.fired


def test_extract_requires_instruction_port():
    design, cd, point, trace = _proved_trace("irq_demo")
    saved = design.meta.pop("instruction_port")
    try:
        with pytest.raises(ConvertError):
            extract_instructions(trace, design, cd)
    finally:
        design.meta["instruction_port"] = saved


def test_random_payload_round_trip():
    rng = random.Random(11)
    for _ in range(25):
        payload = [rng.getrandbits(32) for _ in range(rng.randrange(TEST_CAPACITY))]
        tc = make_testcase("r", payload)
        back = TestCase.from_bytes(tc.to_bytes(), "r")
        assert back.test_words == tc.test_words
