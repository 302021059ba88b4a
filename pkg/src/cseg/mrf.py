"""Class-aware segmentation as a 0-1 program over the region graph, with
optional global connectivity: pseudo edges link same-class regions and
violated root-connectivity cuts are generated lazily from vertex separators."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingRootError
from .fusion import HeuristicConfig, Seed, run_seeded
from .labels import NO_INSTANCE, LabelState
from .milp import (
    EQUAL,
    LESS_EQUAL,
    Constraint,
    MilpModel,
    MilpSolution,
    SolveBudget,
    solve,
)
from .rag import RagGraph, scribble_nodes

VARIANT_UNCONSTRAINED = "U"
VARIANT_PANOPTIC = "P"


@dataclass
class MrfProblem:
    """One labeling problem: graph, unary costs, pairwise weight lam, hard
    fixings, per-class region roots, and the connectivity variant."""

    graph: RagGraph
    costs: object  # CostTable
    lam: float = 100.0
    fixed: dict = field(default_factory=dict)  # node -> class_id
    region_roots: dict = field(default_factory=dict)  # class_id -> [nodes]
    variant: str = VARIANT_UNCONSTRAINED
    scribbles: object = None  # ScribbleSet, needed for instance recovery

    def __post_init__(self):
        if self.variant not in (VARIANT_UNCONSTRAINED, VARIANT_PANOPTIC):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def class_ids(self) -> list:
        return list(self.costs.class_ids)

    @property
    def roots(self) -> dict:
        return {c: nodes[0] for c, nodes in self.region_roots.items() if nodes}

    def free_nodes(self) -> list:
        return [i for i in range(self.graph.node_count) if i not in self.fixed]


@dataclass
class SeparatorCut:
    """Root-connectivity cut: x_i <= sum over the separator of x_s."""

    target_node: int
    class_id: int
    separator: tuple


def region_roots_from_scribbles(g: RagGraph, scribbles) -> dict:
    """First covered node of each region's scribble, grouped per class in
    scribble order."""
    if g.sp is None:
        raise ValueError("graph carries no superpixel map")
    roots = {}
    for s in scribbles.scribbles:
        x, y = s.points[0]
        x = min(max(x, 0), g.sp.width - 1)
        y = min(max(y, 0), g.sp.height - 1)
        roots.setdefault(s.class_id, []).append(int(g.sp.ids[y, x]))
    return roots


def add_pseudo_edges(p: MrfProblem) -> list:
    """Chain each class's region roots with pseudo edges (m-1 per class with
    m regions); returns the added (u, v) pairs."""
    if p.variant != VARIANT_PANOPTIC:
        raise ValueError("pseudo edges belong to the connectivity variant")
    added = []
    for c in sorted(p.region_roots):
        roots = p.region_roots[c]
        for a, b in zip(roots, roots[1:]):
            if p.graph.add_pseudo_edge(a, b):
                added.append((min(a, b), max(a, b)))
    return added


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------


@dataclass
class MrfVarMap:
    free: list
    class_ids: list
    free_index: dict
    z_offset: int
    z_edges: list  # (u, v, weight) for both-free real edges

    def x_var(self, node: int, class_id: int) -> int:
        return self.free_index[node] * len(self.class_ids) + self.class_ids.index(class_id)

    def labeling_from(self, p: MrfProblem, assignment) -> np.ndarray:
        k = len(self.class_ids)
        labeling = np.empty(p.graph.node_count, dtype=np.int64)
        for node, cls in p.fixed.items():
            labeling[node] = cls
        for pos, node in enumerate(self.free):
            slice_ = np.asarray(assignment[pos * k : (pos + 1) * k])
            labeling[node] = self.class_ids[int(np.argmax(slice_))]
        return labeling


def build_model(p: MrfProblem):
    """Linearize the labeling objective over the free nodes.

    Fixed nodes are substituted out: their unary cost and their edges'
    pairwise terms land in the objective offset or in the free endpoint's
    coefficients. Returns (MilpModel, MrfVarMap); the lazy connectivity
    generator is installed by solve_mrf for the panoptic variant.
    """
    class_ids = p.class_ids
    k = len(class_ids)
    col = {c: j for j, c in enumerate(class_ids)}
    unary = p.costs.unary
    if not np.isfinite(unary).all() or (unary < 0).any():
        raise ValueError("unary costs must be finite and non-negative")
    free = p.free_nodes()
    if p.variant == VARIANT_PANOPTIC and free:
        for c in class_ids:
            if not p.region_roots.get(c):
                raise MissingRootError(f"class {c} has free nodes but no root")
    free_index = {node: pos for pos, node in enumerate(free)}

    n_x = len(free) * k
    offset_terms = [float(unary[i, col[c]]) for i, c in sorted(p.fixed.items())]
    objective = np.zeros(n_x)
    for pos, node in enumerate(free):
        for j in range(k):
            objective[pos * k + j] = unary[node, j]

    z_edges = []
    for e in p.graph.edges:
        if e.pseudo:
            continue
        u_fixed, v_fixed = e.u in p.fixed, e.v in p.fixed
        lam_d = p.lam * e.weight
        if u_fixed and v_fixed:
            if p.fixed[e.u] != p.fixed[e.v]:
                offset_terms.append(lam_d)
                offset_terms.append(lam_d)
        elif u_fixed or v_fixed:
            fixed_cls = p.fixed[e.u] if u_fixed else p.fixed[e.v]
            free_node = e.v if u_fixed else e.u
            pos = free_index[free_node]
            for j, c in enumerate(class_ids):
                if c == fixed_cls:
                    # lam_d * (1 - x): constant into the offset
                    objective[pos * k + j] -= lam_d
                    offset_terms.append(lam_d)
                else:
                    objective[pos * k + j] += lam_d
        elif p.lam > 0.0:
            z_edges.append((e.u, e.v, e.weight))

    n_z = len(z_edges) * k
    model_obj = np.concatenate([objective, np.zeros(n_z)])
    for t, (u, v, weight) in enumerate(z_edges):
        for j in range(k):
            model_obj[n_x + t * k + j] = p.lam * weight
    model = MilpModel(
        var_count=n_x + n_z,
        objective=model_obj,
        objective_offset=math.fsum(offset_terms),
    )
    for pos, node in enumerate(free):
        model.add_constraint(
            {pos * k + j: 1.0 for j in range(k)}, EQUAL, 1.0
        )
    vmap = MrfVarMap(free, class_ids, free_index, n_x, z_edges)
    for t, (u, v, weight) in enumerate(z_edges):
        for j in range(k):
            z = n_x + t * k + j
            xu = free_index[u] * k + j
            xv = free_index[v] * k + j
            model.add_constraint({xu: 1.0, xv: -1.0, z: -1.0}, LESS_EQUAL, 0.0)
            model.add_constraint({xv: 1.0, xu: -1.0, z: -1.0}, LESS_EQUAL, 0.0)
    return model, vmap


# ---------------------------------------------------------------------------
# Connectivity checking and separator cuts
# ---------------------------------------------------------------------------


def _augmented_adjacency(g: RagGraph) -> list:
    adj = [[] for _ in range(g.node_count)]
    for e in g.edges:
        adj[e.u].append(e.v)
        adj[e.v].append(e.u)
    return [sorted(set(a)) for a in adj]


def check_connectivity(labeling, p: MrfProblem) -> list:
    """Components of each class's labeled node set (pseudo edges count) that
    do not contain the class root; empty when the labeling is connected."""
    labeling = np.asarray(labeling)
    adj = _augmented_adjacency(p.graph)
    offending = []
    for c in sorted(p.roots):
        root = p.roots[c]
        nodes = set(np.nonzero(labeling == c)[0].tolist())
        if not nodes:
            continue
        remaining = set(nodes)
        comps = []
        while remaining:
            start = min(remaining)
            comp = {start}
            queue = deque([start])
            while queue:
                cur = queue.popleft()
                for nb in adj[cur]:
                    if nb in remaining and nb not in comp:
                        comp.add(nb)
                        queue.append(nb)
            remaining -= comp
            comps.append(comp)
        for comp in sorted(comps, key=min):
            if root not in comp:
                offending.append((c, sorted(comp)))
    return offending


def _bfs_dist(adj, sources) -> np.ndarray:
    dist = np.full(len(adj), -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    while queue:
        cur = queue.popleft()
        for nb in adj[cur]:
            if dist[nb] < 0:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    return dist


def _separates(adj, i, r, separator) -> bool:
    blocked = set(separator)
    seen = {i}
    queue = deque([i])
    while queue:
        cur = queue.popleft()
        if cur == r:
            return False
        for nb in adj[cur]:
            if nb not in blocked and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return True


def generate_cuts(component, class_id: int, p: MrfProblem, k_cuts: int = 3) -> list:
    """Separator cuts detaching one offending component from its class root.

    Cut 1 uses the component's full neighborhood; further cuts walk BFS rings
    toward the root along shortest paths, each verified by flood fill before
    emission. The bound variable is the free component node nearest the root
    among those not adjacent to it.
    """
    adj = _augmented_adjacency(p.graph)
    root = p.roots[class_id]
    comp = sorted(int(v) for v in component)
    comp_set = set(comp)
    dist_r = _bfs_dist(adj, [root])
    candidates = [v for v in comp if v not in p.fixed and root not in adj[v]]
    if not candidates:
        return []
    far = 10 ** 9  # nodes unreachable from the root sort last
    target = min(candidates, key=lambda v: (dist_r[v] if dist_r[v] >= 0 else far, v))

    cuts = []
    seen_separators = set()

    def try_emit(separator):
        separator = tuple(sorted(set(int(s) for s in separator) - comp_set - {root}))
        if separator in seen_separators:
            return
        if not _separates(adj, target, root, separator):
            return
        seen_separators.add(separator)
        cuts.append(SeparatorCut(target, class_id, separator))

    neighborhood = set()
    for v in comp:
        neighborhood.update(adj[v])
    try_emit(neighborhood)

    dist_c = _bfs_dist(adj, comp)
    span = dist_c[root]
    for t in range(1, int(span)):
        if len(cuts) >= k_cuts:
            break
        ring = [
            v
            for v in range(p.graph.node_count)
            if dist_c[v] == t and dist_r[v] >= 0 and dist_c[v] + dist_r[v] == span
        ]
        if ring:
            try_emit(ring)
    return cuts[:k_cuts]


def cut_to_constraint(cut: SeparatorCut, p: MrfProblem, vmap: MrfVarMap) -> Constraint:
    """x_target <= sum of separator x's, with fixed separator nodes folded
    into the right-hand side."""
    coeffs = {vmap.x_var(cut.target_node, cut.class_id): 1.0}
    rhs = 0.0
    for s in cut.separator:
        if s in p.fixed:
            if p.fixed[s] == cut.class_id:
                rhs += 1.0
        else:
            coeffs[vmap.x_var(s, cut.class_id)] = (
                coeffs.get(vmap.x_var(s, cut.class_id), 0.0) - 1.0
            )
    return Constraint(coeffs, LESS_EQUAL, rhs)


# ---------------------------------------------------------------------------
# Canonical objective and the solve loop
# ---------------------------------------------------------------------------


def labeling_objective(p: MrfProblem, labeling) -> float:
    """Exactly-rounded objective of a complete labeling: unary costs plus
    lam * d_ij once per class copy on every cut edge."""
    labeling = np.asarray(labeling)
    col = {c: j for j, c in enumerate(p.class_ids)}
    terms = [float(p.costs.unary[i, col[int(labeling[i])]]) for i in range(len(labeling))]
    for e in p.graph.edges:
        if e.pseudo:
            continue
        if labeling[e.u] != labeling[e.v]:
            lam_d = p.lam * e.weight
            terms.append(lam_d)
            terms.append(lam_d)
    return math.fsum(terms)


@dataclass
class MrfResult:
    labels: LabelState | None
    objective: float | None
    solution: MilpSolution
    labeling: np.ndarray | None = None  # class id per node


def _warm_vector(p: MrfProblem, vmap: MrfVarMap, labeling) -> np.ndarray:
    k = len(vmap.class_ids)
    x = np.zeros(vmap.z_offset + len(vmap.z_edges) * k, dtype=np.int8)
    for pos, node in enumerate(vmap.free):
        x[pos * k + vmap.class_ids.index(int(labeling[node]))] = 1
    for t, (u, v, _) in enumerate(vmap.z_edges):
        for j, c in enumerate(vmap.class_ids):
            zu = 1 if int(labeling[u]) == c else 0
            zv = 1 if int(labeling[v]) == c else 0
            x[vmap.z_offset + t * k + j] = abs(zu - zv)
    return x


def solve_mrf(
    p: MrfProblem,
    warm_start=None,
    budget: SolveBudget | None = None,
    cut_k: int = 3,
    recovery_eta: float = 0.3,
    cut_pool: list | None = None,
    node_hook=None,
    cut_observer=None,
) -> MrfResult:
    """Solve the labeling problem; the panoptic variant loops lazy
    connectivity cuts until every class region hangs off its root.

    ``warm_start`` is a LabelState or class array; it must satisfy the
    fixings (and connectivity under the panoptic variant).
    ``cut_observer`` receives every SeparatorCut as it is generated.
    """
    if p.variant == VARIANT_PANOPTIC:
        add_pseudo_edges(p)
    model, vmap = build_model(p)

    if p.variant == VARIANT_PANOPTIC:

        def lazy(assignment):
            labeling = vmap.labeling_from(p, assignment)
            cuts = []
            for class_id, comp in check_connectivity(labeling, p):
                cuts.extend(generate_cuts(comp, class_id, p, cut_k))
            if cut_observer is not None:
                for cut in cuts:
                    cut_observer(cut)
            return [cut_to_constraint(c, p, vmap) for c in cuts]

        model.lazy_generator = lazy

    warm_vec = None
    if warm_start is not None:
        labeling = (
            warm_start.class_ids if isinstance(warm_start, LabelState) else warm_start
        )
        warm_vec = _warm_vector(p, vmap, labeling)

    solution = solve(model, warm_start=warm_vec, budget=budget, cut_pool=cut_pool,
                     node_hook=node_hook)
    if solution.assignment is None:
        return MrfResult(None, None, solution)

    labeling = vmap.labeling_from(p, solution.assignment)
    objective = labeling_objective(p, labeling)
    if p.variant == VARIANT_PANOPTIC and p.scribbles is not None:
        labels = recover_instances(p, labeling, recovery_eta)
    else:
        labels = LabelState.from_classes(labeling)
    return MrfResult(labels, objective, solution, labeling)


def recover_instances(p: MrfProblem, labeling, eta: float) -> LabelState:
    """Split each class's labeled subgraph into scribble-seeded regions by
    running the fusion heuristic per connected component."""
    labeling = np.asarray(labeling)
    n = p.graph.node_count
    class_ids = np.asarray(labeling, dtype=np.int64).copy()
    region_ids = np.full(n, -1, dtype=np.int64)
    instance_ids = np.full(n, NO_INSTANCE, dtype=np.int64)

    covered = []
    for s in p.scribbles.scribbles:
        covered.append((s, [int(v) for v in scribble_nodes(p.graph.sp, s)]))

    real_adj = p.graph.neighbors(include_pseudo=False)
    for c in sorted(set(labeling.tolist())):
        nodes = sorted(np.nonzero(labeling == c)[0].tolist())
        remaining = set(nodes)
        while remaining:
            start = min(remaining)
            comp = {start}
            queue = deque([start])
            while queue:
                cur = queue.popleft()
                for nb in real_adj[cur]:
                    if nb in remaining and nb not in comp:
                        comp.add(nb)
                        queue.append(nb)
            remaining -= comp
            comp_sorted = sorted(comp)
            local = {node: idx for idx, node in enumerate(comp_sorted)}
            seeds = []
            for s, nodes_cov in covered:
                if s.class_id != c:
                    continue
                inside = [local[v] for v in nodes_cov if v in comp]
                if inside:
                    seeds.append(Seed(inside, s.class_id, s.region_id, s.instance_id))
            if not seeds:
                raise ValueError(
                    f"class {c} component {comp_sorted[:4]}... has no scribble seed"
                )
            sizes = p.graph.sizes[comp_sorted]
            features = p.graph.features[comp_sorted]
            from .rag import RagEdge

            edges = [
                RagEdge(local[e.u], local[e.v], e.boundary_len, e.weight)
                for e in p.graph.edges
                if not e.pseudo and e.u in comp and e.v in comp
            ]
            sub = RagGraph(sizes, features, edges)
            sub_labels = run_seeded(sub, seeds, HeuristicConfig(eta=eta))
            for node, idx in local.items():
                region_ids[node] = sub_labels.region_ids[idx]
                instance_ids[node] = sub_labels.instance_ids[idx]
    return LabelState(class_ids, region_ids, instance_ids)
