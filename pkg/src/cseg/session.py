"""One annotation episode: ingest inputs, rebuild the graph per round as
scribbles split superpixels, run the chosen algorithm with warm starts, and
render per-pixel outputs."""

from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PolicyViolationError
from .fusion import HeuristicConfig, run as run_fusion
from .labels import NO_INSTANCE, LabelState
from .metrics import EvalReport, miou, panoptic_quality
from .milp import SolveBudget
from .mrf import (
    MrfProblem,
    VARIANT_PANOPTIC,
    VARIANT_UNCONSTRAINED,
    region_roots_from_scribbles,
    solve_mrf,
)
from .rag import (
    CostTable,
    build_rag,
    freeze_scribbled,
    pairwise_weights,
    split_by_scribbles,
    unary_from_probability,
    unary_from_scribbles,
)
from .raster import DenseFieldMap, ImagePlane, SuperpixelMap, save_image, save_index_png
from .scribble import Scribble, ScribbleSet, override_maps, validate_policy

ALGORITHMS = ("l0h", "ilp-u", "ilp-p")

ETA_DEFAULTS = {"rgb": 0.1, "layer1": 20.0, "layer3": 100.0, "prob": 0.3}


def default_eta(features) -> float:
    """Growth parameter defaults keyed by the feature source."""
    if isinstance(features, ImagePlane):
        return ETA_DEFAULTS["rgb"]
    if getattr(features, "probability", False):
        return ETA_DEFAULTS["prob"]
    if features.depth <= 64:
        return ETA_DEFAULTS["layer1"]
    return ETA_DEFAULTS["layer3"]


@dataclass
class SessionConfig:
    algorithm: str = "l0h"
    lam: float = 100.0
    eta: float | None = None  # None resolves per feature source
    time_limit: float | None = None
    node_limit: int | None = None
    cut_k: int = 3
    superpixel_target: int = 600
    max_outer_loops: int = 1000

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")

    def budget(self) -> SolveBudget:
        return SolveBudget(
            time_limit_seconds=self.time_limit, node_limit=self.node_limit
        )


@dataclass
class RoundRecord:
    round_index: int
    added: Scribble | None
    labels: LabelState
    sp: SuperpixelMap
    scribbles: ScribbleSet
    policy_violations: list
    conflicts: list
    objective: float | None
    status: str
    timings: dict
    report: EvalReport | None = None


class Session:
    """Single-writer annotation session over one image."""

    def __init__(
        self,
        features,
        base_sp: SuperpixelMap,
        image: ImagePlane | None = None,
        probmap: DenseFieldMap | None = None,
        truth=None,
        config: SessionConfig | None = None,
    ):
        self.features = features
        self.image = image
        self.base_sp = base_sp
        self.probmap = probmap
        self.truth = truth
        self.config = config or SessionConfig()
        self.base_graph = build_rag(base_sp, features)
        self.scribbles = ScribbleSet()
        self.history: list = []
        self.eta = (
            self.config.eta if self.config.eta is not None else default_eta(features)
        )

    @property
    def rounds_run(self) -> int:
        return len(self.history)

    def _merge(self, scribble_set, new_scribble) -> ScribbleSet:
        if scribble_set is not None:
            current_regions = set(self.scribbles.region_ids())
            if not current_regions <= set(scribble_set.region_ids()):
                raise ValueError("scribble set must extend the previous rounds' set")
            return scribble_set
        if new_scribble is not None:
            return self.scribbles.with_added(new_scribble)
        return self.scribbles

    def run_round(
        self,
        new_scribble: Scribble | None = None,
        scribble_set: ScribbleSet | None = None,
        strict_policy: bool = False,
    ) -> RoundRecord:
        """Merge scribbles, rebuild the graph, run the configured algorithm.

        Policy violations are recorded (and panoptic scoring skipped); with
        ``strict_policy`` they raise PolicyViolationError instead.
        """
        merged = self._merge(scribble_set, new_scribble)
        if not merged.scribbles:
            raise ValueError("a round needs at least one scribble")
        w, h = self.base_sp.width, self.base_sp.height
        policy = validate_policy(merged, w, h)
        if strict_policy and not policy.ok:
            raise PolicyViolationError(policy)

        t0 = time.perf_counter()
        graph, sp = split_by_scribbles(
            self.base_graph, self.base_sp, merged, self.features
        )
        pairwise_weights(graph)
        freeze = freeze_scribbled(graph, merged, on_conflict="newest")
        build_seconds = time.perf_counter() - t0

        t1 = time.perf_counter()
        algorithm = self.config.algorithm
        objective = None
        status = "ok"
        if algorithm == "l0h":
            labels = run_fusion(
                graph,
                merged,
                HeuristicConfig(eta=self.eta, max_outer_loops=self.config.max_outer_loops),
            )
        else:
            variant = (
                VARIANT_PANOPTIC if algorithm == "ilp-p" else VARIANT_UNCONSTRAINED
            )
            problem = self._build_problem(graph, sp, merged, freeze, variant)
            warm = None
            if variant == VARIANT_PANOPTIC:
                warm = run_fusion(
                    graph,
                    merged,
                    HeuristicConfig(
                        eta=self.eta, max_outer_loops=self.config.max_outer_loops
                    ),
                )
            result = solve_mrf(
                problem,
                warm_start=warm,
                budget=self.config.budget(),
                cut_k=self.config.cut_k,
                recovery_eta=self.eta,
            )
            if result.labels is None:
                raise RuntimeError(f"solver returned no labeling: {result.solution.status}")
            labels = result.labels
            objective = result.objective
            status = result.solution.status
        solve_seconds = time.perf_counter() - t1

        record = RoundRecord(
            round_index=len(self.history),
            added=new_scribble,
            labels=labels,
            sp=sp,
            scribbles=merged,
            policy_violations=list(policy.violations),
            conflicts=list(freeze.conflicts),
            objective=objective,
            status=status,
            timings={
                "build_seconds": build_seconds,
                "solve_seconds": solve_seconds,
                "total_seconds": build_seconds + solve_seconds,
            },
        )
        if self.truth is not None:
            record.report = self.evaluate(record)
        self.scribbles = merged
        self.history.append(record)
        return record

    def _build_problem(self, graph, sp, scribbles, freeze, variant) -> MrfProblem:
        region_roots = region_roots_from_scribbles(graph, scribbles)
        if self.probmap is not None:
            costs = unary_from_probability(self.probmap, sp)
            if variant == VARIANT_PANOPTIC:
                keep = sorted(region_roots)
                cols = [costs.class_ids.index(c) for c in keep]
                costs = CostTable(costs.unary[:, cols], keep)
        else:
            costs = unary_from_scribbles(graph, scribbles)
            if variant == VARIANT_PANOPTIC:
                keep = sorted(region_roots)
                cols = [costs.class_ids.index(c) for c in keep]
                costs = CostTable(costs.unary[:, cols], keep)
        fixed = {node: ids[0] for node, ids in freeze.assignments.items()}
        return MrfProblem(
            graph,
            costs,
            lam=self.config.lam,
            fixed=fixed,
            region_roots=region_roots,
            variant=variant,
            scribbles=scribbles,
        )

    def evaluate(self, record: RoundRecord) -> EvalReport:
        # semantic-only scoring for the unconstrained variant (it has no
        # instance notion) and for policy-violating scribble sets
        class_map, instance_map = render(record.labels, record.sp, record.scribbles)
        if self.config.algorithm == "ilp-u" or record.policy_violations:
            per_class, mean = miou(class_map, self.truth)
            return EvalReport(per_class_iou=per_class, miou=mean)
        return panoptic_quality(class_map, instance_map, self.truth)

    def save_snapshot(self, out_dir) -> None:
        """Serialize the session to a directory: inputs, per-round scribbles
        and rendered maps, and a summary report."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.image is not None:
            save_image(self.image, out / "image.png")
        save_index_png(self.base_sp.ids, out / "superpixels.png")
        rounds = []
        for record in self.history:
            tag = f"round{record.round_index}"
            record.scribbles.save(out / f"scribbles_{tag}.json")
            class_map, instance_map = render(record.labels, record.sp, record.scribbles)
            save_index_png(class_map, out / f"class_{tag}.png")
            save_index_png(instance_map, out / f"instance_{tag}.png")
            entry = {
                "round": record.round_index,
                "objective": record.objective,
                "status": record.status,
                "policy_violations": record.policy_violations,
                "conflicts": record.conflicts,
                "timings": record.timings,
            }
            if record.report is not None:
                entry["metrics"] = record.report.to_dict()
            rounds.append(entry)
        (out / "report.json").write_text(
            json.dumps({"algorithm": self.config.algorithm, "rounds": rounds},
                       sort_keys=True, indent=2)
            + "\n"
        )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render(ls: LabelState, sp: SuperpixelMap, scribbles: ScribbleSet | None = None):
    """Per-pixel class and instance maps: pixels inherit their superpixel's
    ids, and scribbled pixels are forced to their scribble's ids."""
    if ls.node_count != sp.count:
        raise ValueError("label state does not match the superpixel map")
    class_map = ls.class_ids[sp.ids].astype(np.int32)
    inst = np.where(ls.instance_ids == NO_INSTANCE, 0, ls.instance_ids)
    instance_map = inst[sp.ids].astype(np.int32)
    if scribbles is not None and scribbles.scribbles:
        over_cls, _, over_inst = override_maps(scribbles, sp.width, sp.height)
        keep = over_cls >= 0
        class_map[keep] = over_cls[keep]
        instance_map[keep] = np.where(over_inst[keep] < 0, 0, over_inst[keep])
    return class_map, instance_map


def render_regions(ls: LabelState, sp: SuperpixelMap) -> np.ndarray:
    return ls.region_ids[sp.ids].astype(np.int32)


def aggregate_majority(class_map: np.ndarray, sp: SuperpixelMap) -> np.ndarray:
    """Majority class per superpixel; the inverse of render for clean maps."""
    n = sp.count
    flat_ids = sp.ids.ravel()
    flat_cls = np.asarray(class_map).ravel()
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        values, counts = np.unique(flat_cls[flat_ids == i], return_counts=True)
        out[i] = values[np.argmax(counts)]
    return out
