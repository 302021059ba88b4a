"""Scribble-seeded region fusion: class-agnostic region growing that keeps
every labeled region connected by construction.

The hot loop lives in ``cseg._kernels`` (compiled extension with a
pure-Python fallback); this module owns the public types, the merge rule in
its documented group form, and the preparation of seeds from scribbles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NonConvergenceError, UnseededRegionError
from .labels import NO_INSTANCE, LabelState
from .rag import RagGraph, scribble_nodes
from .scribble import ScribbleSet

MERGE_ORDERS = ("min-node-id",)


@dataclass
class HeuristicConfig:
    """Growth parameter and loop budget of the fusion heuristic."""

    eta: float
    max_outer_loops: int = 1000
    merge_order: str = "min-node-id"
    force_finish: bool = True

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.merge_order not in MERGE_ORDERS:
            raise ValueError(f"merge_order must be one of {MERGE_ORDERS}")


def beta_schedule(iteration: int, eta: float) -> float:
    """Regularization level for one outer loop: (iteration/50)^2.2 * eta."""
    if iteration < 1:
        raise ValueError("iteration starts at 1")
    return (iteration / 50.0) ** 2.2 * eta


@dataclass
class FusionGroup:
    """One fusion group: connected member nodes with pooled statistics.

    Documented reference form of the kernel's internal state; handy for unit
    tests and small traces.
    """

    member_nodes: set
    size: int
    mean_feature: np.ndarray
    region_id: int | None = None
    class_id: int | None = None
    instance_id: int | None = None
    neighbor_links: dict = field(default_factory=dict)  # group key -> gamma


def merge_test(gi: FusionGroup, gj: FusionGroup, beta: float, gamma: int | None = None) -> bool:
    """Merge criterion: region rule first, then the size/feature inequality.

    Groups with two different region ids never merge; otherwise merge iff
    size_i * size_j * ||mean_i - mean_j|| <= beta * gamma * (size_i + size_j).
    """
    if (
        gi.region_id is not None
        and gj.region_id is not None
        and gi.region_id != gj.region_id
    ):
        return False
    if gamma is None:
        gamma = gi.neighbor_links[min(gj.member_nodes)]
    dist = float(np.linalg.norm(gi.mean_feature - gj.mean_feature))
    lhs = float(gi.size * gj.size) * dist
    rhs = (beta * float(gamma)) * float(gi.size + gj.size)
    return lhs <= rhs


def merge(gi: FusionGroup, gj: FusionGroup) -> FusionGroup:
    """Pool two groups: sizes add, means combine size-weighted, and the
    merged group inherits whichever labels exist."""
    total = gi.size + gj.size
    mean = (gi.size * gi.mean_feature + gj.size * gj.mean_feature) / total
    labeled = gi if gi.region_id is not None else gj
    links = dict(gi.neighbor_links)
    own = gi.member_nodes | gj.member_nodes
    for key, gamma in gj.neighbor_links.items():
        links[key] = links.get(key, 0) + gamma
    for key in [k for k in links if k in own]:
        del links[key]
    return FusionGroup(
        member_nodes=own,
        size=total,
        mean_feature=mean,
        region_id=labeled.region_id,
        class_id=labeled.class_id,
        instance_id=labeled.instance_id,
        neighbor_links=links,
    )


@dataclass
class Seed:
    """One scribble's covered nodes plus the ids it propagates."""

    nodes: list
    class_id: int
    region_id: int
    instance_id: int | None = None


def seeds_from_scribbles(g: RagGraph, scribbles: ScribbleSet) -> list:
    if g.sp is None:
        raise ValueError("graph carries no superpixel map")
    seeds = []
    for s in scribbles.scribbles:
        nodes = [int(v) for v in scribble_nodes(g.sp, s)]
        seeds.append(Seed(nodes, s.class_id, s.region_id, s.instance_id))
    return seeds


def run_seeded(g: RagGraph, seeds: list, cfg: HeuristicConfig) -> LabelState:
    """Fuse the graph from explicit seeds; every node ends up labeled and
    every region's node set stays connected."""
    n = g.node_count
    seed_map = np.full(n, -1, dtype=np.int64)
    for idx, seed in enumerate(seeds):
        if not seed.nodes:
            raise UnseededRegionError(f"region {seed.region_id} covers no node")
        for node in seed.nodes:
            if seed_map[node] >= 0 and seed_map[node] != idx:
                raise UnseededRegionError(
                    f"node {node} seeded by scribbles {seed_map[node]} and {idx}"
                )
            seed_map[node] = idx
    u, v, gamma = g.real_edge_arrays()
    labels, iters, merges, status, _, _, _ = _kernels.fuse(
        np.ascontiguousarray(g.features, dtype=np.float64),
        np.ascontiguousarray(g.sizes, dtype=np.int64),
        u, v, gamma, seed_map,
        float(cfg.eta), int(cfg.max_outer_loops), bool(cfg.force_finish),
    )
    if status == _kernels.STATUS_BUDGET:
        raise NonConvergenceError(
            f"unlabeled groups left after {cfg.max_outer_loops} outer loops"
        )
    if status == _kernels.STATUS_STRANDED:
        raise NonConvergenceError("graph has groups unreachable from any seed")
    class_ids = np.array([seeds[s].class_id for s in labels], dtype=np.int64)
    region_ids = np.array([seeds[s].region_id for s in labels], dtype=np.int64)
    instance_ids = np.array(
        [
            NO_INSTANCE if seeds[s].instance_id is None else seeds[s].instance_id
            for s in labels
        ],
        dtype=np.int64,
    )
    return LabelState(class_ids, region_ids, instance_ids)


def run(g: RagGraph, scribbles: ScribbleSet, cfg: HeuristicConfig) -> LabelState:
    """Fuse the graph seeded by a scribble set."""
    return run_seeded(g, seeds_from_scribbles(g, scribbles), cfg)
