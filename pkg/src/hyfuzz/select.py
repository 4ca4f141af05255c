"""Uncovered-point selection strategies for the formal phase.

Four strategies: uniform random over all points (randsel), deepest
module first by distance from the primary inputs (bottop), most
uncovered points first (maxuncovd, the default), and largest fanout
cone of influence first (moddep).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Dict, List, Optional

from .coverage import CoverageMap
from .ir import ModuleGraph

STRATEGIES = ("randsel", "bottop", "maxuncovd", "moddep")
DEFAULT_STRATEGY = "maxuncovd"


class SelectError(ValueError):
    pass


class Exhausted(Exception):
    """No selectable point remains; the formal phase must end."""


def rank_moddep(graph: ModuleGraph) -> List[str]:
    """Modules ordered max-to-min by fanout COI, ties by name."""
    return sorted(graph.nodes, key=lambda m: (-graph.fanout_coi[m], m))


def rank_bottop(graph: ModuleGraph) -> List[str]:
    """Modules ordered deepest-first by distance from primary inputs."""
    def key(m):
        d = graph.distance[m]
        return (-d, m)
    return sorted(graph.nodes, key=key)


@dataclass
class SelectorState:
    strategy: str
    priority: Optional[List[str]] = None  # static order (bottop / moddep)


def make_selector(strategy: str, graph: ModuleGraph) -> SelectorState:
    if strategy not in STRATEGIES:
        raise SelectError(f"unknown strategy '{strategy}'")
    priority = None
    if strategy == "bottop":
        priority = rank_bottop(graph)
    elif strategy == "moddep":
        priority = rank_moddep(graph)
    return SelectorState(strategy=strategy, priority=priority)


def select(state: SelectorState, cmap: CoverageMap, graph: ModuleGraph,
           rng: random.Random) -> int:
    pool = cmap.selectable_points()
    if not pool:
        raise Exhausted()
    if state.strategy == "randsel":
        return rng.choice(pool)
    per_module = cmap.uncovered_by_module()
    if state.strategy == "maxuncovd":
        # recomputed on every invocation: coverage shifts the maximum
        order = sorted(per_module, key=lambda m: (-len(per_module[m]), m))
    else:
        order = state.priority or sorted(per_module)
    for mod in order:
        pts = per_module.get(mod, [])
        if pts:
            return rng.choice(pts)
    # points can live in modules absent from the graph ordering
    return rng.choice(pool)
