"""IR validation and the module dependence graph."""

import math

import pytest

from hyfuzz.ir import (Design, HwModule, Signal, ValidationError, build_graph,
                       validate)
from hyfuzz.parser import load_design
import conftest as C

CHAIN = """
design chain {
  input w : 8;
  module a {
    input x : 8 <- w;
    output ao : 8;
    output ao2 : 8;
    assign ao = (x + 1);
    assign ao2 = (x + 2);
  }
  module b {
    input y : 8 <- a.ao;
    output bo : 8;
    assign bo = (y + 1);
  }
  module c {
    input z : 8 <- a.ao2;
    input z2 : 8 <- b.bo;
    output co : 8;
    assign co = (z ^ z2);
  }
}
"""


def test_distance_is_hops_from_primary_inputs():
    g = build_graph(load_design(CHAIN))
    # c reads a.ao2 directly, so its shortest path from the inputs is 2
    assert g.distance == {"a": 1, "b": 2, "c": 2}


def test_fanout_coi_counts_transitively_driven_ports():
    g = build_graph(load_design(CHAIN))
    # a drives b.y and c.z directly, and c.z2 through b
    assert g.fanout_coi["a"] == 3
    assert g.fanout_coi["b"] == 1
    assert g.fanout_coi["c"] == 0


def test_unconnected_module_has_infinite_distance():
    src = CHAIN.replace("module c {", "module s {\n    wire sw : 1;\n"
                        "    assign sw = 1'd0;\n  }\n  module c {")
    g = build_graph(load_design(src))
    assert math.isinf(g.distance["s"])


def test_validate_rejects_bad_reset():
    d = Design(name="x", inputs=[Signal("w", 4, "input")],
               modules=[HwModule(name="m", registers=["m.q"],
                                 reg_assigns=[])],
               signals={"w": Signal("w", 4, "input"),
                        "m.q": Signal("m.q", 2, "register", 9)})
    with pytest.raises(ValidationError):
        validate(d)


def test_validate_rejects_combinational_cycle():
    src = """
design loop {
  input w : 4;
  module m {
    input x : 4 <- w;
    wire p : 4;
    wire q : 4;
    assign p = (q + 1);
    assign q = (p + 1);
  }
}
"""
    with pytest.raises(ValidationError):
        load_design(src)


@pytest.mark.parametrize("name", C.DESIGN_NAMES)
def test_bundled_graphs_are_well_formed(name):
    g = build_graph(C.load(name))
    assert g.nodes
    # every module either reads a primary input or is fed by one that does
    assert all(not math.isinf(g.distance[n]) for n in g.nodes)
    assert all(g.fanout_coi[n] >= 0 for n in g.nodes)
