import pathlib

import pytest

from hyfuzz.parser import load_design_file
from hyfuzz.sim import compile_design

DESIGN_DIR = pathlib.Path(__file__).parent.parent / "src" / "hyfuzz" / "designs"
DESIGN_NAMES = ("fsm_demo", "irq_demo", "decoder_demo", "csr_demo",
                "pipeline_full")

_cache = {}


def design_path(name: str) -> pathlib.Path:
    return DESIGN_DIR / f"{name}.hwd"


def load(name: str, bugs=None):
    key = (name, frozenset(bugs or ()))
    if key not in _cache:
        _cache[key] = load_design_file(design_path(name), set(bugs or ()))
    return _cache[key]


def compiled(name: str, bugs=None):
    return compile_design(load(name, bugs))


@pytest.fixture(scope="session")
def fsm_demo():
    return load("fsm_demo")


@pytest.fixture(scope="session")
def irq_demo():
    return load("irq_demo")


@pytest.fixture(scope="session")
def pipeline_full():
    return load("pipeline_full")
