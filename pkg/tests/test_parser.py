"""Design-description parsing, bug regions, and round-tripping."""

import pytest

from hyfuzz.parser import ParseError, design_to_text, load_design
from hyfuzz.ir import walk_nodes
import conftest as C

MINI = """
design mini {
  input w : 8;
  module top {
    input x : 8 <- w;
    output y : 4;
    reg q : 4 = 0;
    assign y = x[3:0];
    q <= q;
    if (y == 1) {
      q <= (q + 1);
    } else { }
  }
}
"""


def test_parse_minimal_design():
    d = load_design(MINI)
    assert d.name == "mini"
    assert [m.name for m in d.modules] == ["top"]
    assert d.signals["top.q"].width == 4


@pytest.mark.parametrize("name", C.DESIGN_NAMES)
def test_round_trip_bundled(name):
    d = C.load(name)
    text = design_to_text(d)
    d2 = load_design(text)
    assert design_to_text(d2) == text


def test_unknown_signal_rejected():
    bad = MINI.replace("assign y = x[3:0];", "assign y = zz[3:0];")
    with pytest.raises(Exception):
        load_design(bad)


def test_unterminated_bug_region():
    bad = MINI.replace("q <= q;", "bug BX { q <= q;")
    with pytest.raises(ParseError):
        load_design(bad)


def test_bug_region_disabled_by_default():
    src = MINI.replace("q <= (q + 1);",
                       "bug BX { q <= 2; } else { q <= (q + 1); }")
    d = load_design(src)
    d_bug = load_design(src, {"BX"})
    assert design_to_text(d) != design_to_text(d_bug)
    assert "BX" not in design_to_text(d)  # regions resolve at load time


def test_unknown_bug_name_is_harmless():
    d = C.load("decoder_demo")
    d2 = load_design(design_to_text(d))
    assert design_to_text(d2) == design_to_text(d)


def test_case_lowers_to_unobserved_nodes(fsm_demo):
    trees = fsm_demo.modules[0].branch_trees
    nodes = [n for t in trees for n in walk_nodes(t)]
    observed = [n for n in nodes if n.observe]
    dispatch = [n for n in nodes if not n.observe]
    assert len(observed) == 1
    assert len(dispatch) == 1
    # the guarded if nests inside the dispatch arm
    assert dispatch[0].then_arm.child is observed[0]


def test_case_round_trip():
    src = MINI.replace(
        "if (y == 1) {\n      q <= (q + 1);\n    } else { }",
        "case (q) { 0: { q <= 1; } 2: { q <= 3; } default: { q <= 0; } }")
    d = load_design(src)
    text = design_to_text(d)
    d2 = load_design(text)
    assert design_to_text(d2) == text
    nodes = [n for t in d.modules[0].branch_trees for n in walk_nodes(t)]
    assert all(not n.observe for n in nodes)
    assert len(nodes) == 2  # two labels chain; default is the final else
