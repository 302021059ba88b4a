"""Region adjacency graph over superpixels: construction, scribble-driven
splitting, fixed-label extraction, and unary/pairwise cost tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ClassWithoutScribbleError,
    ConflictingScribblesError,
    DepthMismatchError,
    DimensionMismatchError,
)
from .raster import DenseFieldMap, ImagePlane, SuperpixelMap, check_probability, normalize_superpixels
from .scribble import ScribbleSet, rasterize


@dataclass
class RagEdge:
    u: int
    v: int
    boundary_len: int  # count of 4-adjacent pixel pairs across the boundary
    weight: float = 0.0  # pairwise cost weight, exp(-feature distance)
    pseudo: bool = False


@dataclass
class RagGraph:
    """Superpixel graph: per-node pixel counts and mean features, plus the
    weighted adjacency structure. Nodes are indexed by superpixel id."""

    sizes: np.ndarray  # (n,) int64
    features: np.ndarray  # (n, d) float64
    edges: list
    sp: SuperpixelMap | None = None
    _neighbors: list | None = field(default=None, repr=False, compare=False)

    @property
    def node_count(self) -> int:
        return len(self.sizes)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def neighbors(self, include_pseudo: bool = True) -> list:
        """Per-node sorted neighbor id lists."""
        out = [[] for _ in range(self.node_count)]
        for e in self.edges:
            if e.pseudo and not include_pseudo:
                continue
            out[e.u].append(e.v)
            out[e.v].append(e.u)
        return [sorted(adj) for adj in out]

    def real_edge_arrays(self):
        """(u, v, gamma) arrays over real edges, for the fusion kernels."""
        real = [e for e in self.edges if not e.pseudo]
        u = np.array([e.u for e in real], dtype=np.int64)
        v = np.array([e.v for e in real], dtype=np.int64)
        gamma = np.array([e.boundary_len for e in real], dtype=np.int64)
        return u, v, gamma

    def add_pseudo_edge(self, u: int, v: int) -> bool:
        """Add a pseudo edge unless the pair is already adjacent."""
        if u == v:
            return False
        a, b = min(u, v), max(u, v)
        for e in self.edges:
            if (e.u, e.v) == (a, b):
                return False
        self.edges.append(RagEdge(a, b, 0, 0.0, True))
        return True

    def to_debug_json(self) -> str:
        return json.dumps(
            {
                "sizes": self.sizes.tolist(),
                "means": self.features.tolist(),
                "edges": [
                    [e.u, e.v, e.boundary_len, e.weight, e.pseudo] for e in self.edges
                ],
            },
            sort_keys=True,
        )


@dataclass
class CostTable:
    """Per-node unary assignment costs; column j belongs to class_ids[j]."""

    unary: np.ndarray  # (n, k) float64, finite, >= 0
    class_ids: list

    @property
    def class_count(self) -> int:
        return self.unary.shape[1]

    def column(self, class_id: int) -> int:
        return self.class_ids.index(class_id)


@dataclass
class FixedLabels:
    """Scribble-derived hard assignments: node -> (class, region, instance)."""

    assignments: dict  # node -> (class_id, region_id, instance_id | None)
    conflicts: list = field(default_factory=list)  # (node, old_region, new_region)


def _feature_pixels(feat) -> np.ndarray:
    if isinstance(feat, (ImagePlane, DenseFieldMap)):
        return feat.pixel_matrix()
    raise TypeError("feat must be an ImagePlane or DenseFieldMap")


def build_rag(sp: SuperpixelMap, feat) -> RagGraph:
    """Build the region adjacency graph of a superpixel map.

    Node features are arithmetic means of the member pixels' vectors; edge
    boundary lengths count 4-adjacent pixel pairs with distinct ids.
    """
    pix = _feature_pixels(feat)
    if pix.shape[0] != sp.width * sp.height:
        raise DimensionMismatchError(
            f"feature grid {pix.shape[0]} px, superpixel grid "
            f"{sp.width * sp.height} px"
        )
    n = sp.count
    flat = sp.ids.ravel().astype(np.int64)
    sizes = np.bincount(flat, minlength=n).astype(np.int64)
    d = pix.shape[1]
    features = np.empty((n, d), dtype=np.float64)
    for j in range(d):
        features[:, j] = np.bincount(flat, weights=pix[:, j], minlength=n) / sizes

    ids = sp.ids.astype(np.int64)
    pairs = []
    for a, b in ((ids[:, :-1], ids[:, 1:]), (ids[:-1, :], ids[1:, :])):
        diff = a != b
        if diff.any():
            lo = np.minimum(a[diff], b[diff])
            hi = np.maximum(a[diff], b[diff])
            pairs.append(lo * n + hi)
    edges = []
    if pairs:
        keys, counts = np.unique(np.concatenate(pairs), return_counts=True)
        edges = [
            RagEdge(int(k // n), int(k % n), int(c)) for k, c in zip(keys, counts)
        ]
    return RagGraph(sizes, features, edges, sp=sp)


# ---------------------------------------------------------------------------
# Scribble-driven superpixel splitting
# ---------------------------------------------------------------------------


def _region_raster(scribbles: ScribbleSet, width: int, height: int) -> np.ndarray:
    out = np.full((height, width), -1, dtype=np.int64)
    for s in scribbles.scribbles:
        out[rasterize(s, width, height, clip=True)] = s.region_id
    return out


def _grow_regions(sp_mask: np.ndarray, region_px: np.ndarray) -> np.ndarray:
    """Assign every pixel of one superpixel to its geodesically nearest
    scribble region, lower region id winning ties. Returns a region map."""
    h, w = sp_mask.shape
    assign = np.where(sp_mask, region_px, -2)  # -2 outside, -1 unassigned
    regions = sorted(int(r) for r in np.unique(region_px[sp_mask]) if r >= 0)
    frontiers = {r: list(zip(*np.nonzero(assign == r))) for r in regions}
    while any(frontiers.values()):
        claimed = {}
        for r in regions:
            nxt = []
            for y, x in frontiers[r]:
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and assign[ny, nx] == -1:
                        if (ny, nx) not in claimed:
                            claimed[ny, nx] = r
                            nxt.append((ny, nx))
            frontiers[r] = nxt
        for (y, x), r in claimed.items():
            assign[y, x] = r
    return assign


def split_by_scribbles(g: RagGraph, sp: SuperpixelMap, scribbles: ScribbleSet, feat=None):
    """Split superpixels touched by scribbles of multiple regions.

    Each scribble's pixels seed a region grown geodesically inside the old
    superpixel; the graph is rebuilt over the refined map, from the original
    per-pixel field when supplied. Returns the new (RagGraph, SuperpixelMap).
    """
    region_px = _region_raster(scribbles, sp.width, sp.height)
    ids = sp.ids
    new_ids = np.empty_like(ids)
    next_id = 0
    for old in range(sp.count):
        mask = ids == old
        present = np.unique(region_px[mask])
        present = present[present >= 0]
        if len(present) < 2:
            new_ids[mask] = next_id
            next_id += 1
            continue
        grown = _grow_regions(mask, region_px)
        for r in sorted(int(r) for r in present):
            new_ids[(grown == r) & mask] = next_id
            next_id += 1
    new_sp = normalize_superpixels(new_ids)
    if feat is None:
        feat = _node_feature_field(g, sp)
    return build_rag(new_sp, feat), new_sp


def _node_feature_field(g: RagGraph, sp: SuperpixelMap) -> DenseFieldMap:
    """Reconstitute a per-pixel field from the graph's node features.

    Splitting re-aggregates means from this field; pixels of one old node all
    carry its mean, so sub-node means equal the old node mean, which is the
    best available stand-in when the original per-pixel field is not kept.
    """
    per_pixel = g.features[sp.ids.ravel()]
    return DenseFieldMap(
        sp.width, sp.height, g.feature_dim,
        per_pixel.reshape(sp.height, sp.width, g.feature_dim),
    )


def scribble_nodes(sp: SuperpixelMap, scribble) -> np.ndarray:
    """Sorted node ids covered by one scribble's raster."""
    mask = rasterize(scribble, sp.width, sp.height, clip=True)
    return np.unique(sp.ids[mask])


def freeze_scribbled(
    g: RagGraph, scribbles: ScribbleSet, on_conflict: str = "error"
) -> FixedLabels:
    """Fix every scribble-covered node to its scribble's ids, then fix nodes
    whose neighbors all carry one fixed region.

    ``on_conflict`` selects between raising ConflictingScribblesError and
    letting the newest scribble win (recorded in the conflict list).
    """
    if g.sp is None:
        raise ValueError("graph carries no superpixel map")
    fixed = {}
    conflicts = []
    for s in scribbles.scribbles:
        ids = (s.class_id, s.region_id, s.instance_id)
        for node in scribble_nodes(g.sp, s):
            node = int(node)
            old = fixed.get(node)
            if old is not None and old[1] != s.region_id:
                if on_conflict == "error":
                    raise ConflictingScribblesError(
                        f"node {node} covered by regions {old[1]} and {s.region_id}"
                    )
                conflicts.append((node, old[1], s.region_id))
            fixed[node] = ids
    region_ids = {}
    for s in scribbles.scribbles:
        region_ids.setdefault(s.region_id, (s.class_id, s.region_id, s.instance_id))
    neighbors = g.neighbors(include_pseudo=False)
    changed = True
    while changed:
        changed = False
        for node in range(g.node_count):
            if node in fixed or not neighbors[node]:
                continue
            around = [fixed.get(nb) for nb in neighbors[node]]
            regions = {ids[1] for ids in around} if None not in around else set()
            if len(regions) != 1:
                continue
            region = regions.pop()
            fixed[node] = region_ids.get(region, around[0])
            changed = True
    return FixedLabels(fixed, conflicts)


# ---------------------------------------------------------------------------
# Cost tables and pairwise weights
# ---------------------------------------------------------------------------


def unary_from_probability(
    prob: DenseFieldMap, sp: SuperpixelMap, class_count: int | None = None
) -> CostTable:
    """Unary costs from a probability map: the Euclidean distance between the
    node's mean probability vector and each one-hot class vector."""
    if prob.width != sp.width or prob.height != sp.height:
        raise DimensionMismatchError("probability map and superpixels differ in size")
    if class_count is not None and class_count != prob.depth:
        raise DepthMismatchError(f"probability depth {prob.depth} != classes {class_count}")
    if not prob.probability:
        check_probability(prob.values)
    n = sp.count
    flat = sp.ids.ravel()
    sizes = np.bincount(flat, minlength=n)
    pix = prob.pixel_matrix()
    p = np.empty((n, prob.depth))
    for j in range(prob.depth):
        p[:, j] = np.bincount(flat, weights=pix[:, j], minlength=n) / sizes
    unary = np.linalg.norm(p[:, None, :] - np.eye(prob.depth)[None, :, :], axis=2)
    return CostTable(unary, list(range(prob.depth)))


def unary_from_scribbles(g: RagGraph, scribbles: ScribbleSet, class_ids=None) -> CostTable:
    """Unary costs from scribbled nodes: distance of each node's feature to
    the pixel-count-weighted mean feature of its class's scribbled nodes.

    The class set defaults to the classes appearing in the scribbles; an
    explicit ``class_ids`` list may name classes that turn out unscribbled,
    which raises ClassWithoutScribbleError.
    """
    if g.sp is None:
        raise ValueError("graph carries no superpixel map")
    if class_ids is None:
        class_ids = sorted({s.class_id for s in scribbles.scribbles})
    else:
        class_ids = sorted(class_ids)
    covered = {c: set() for c in class_ids}
    for s in scribbles.scribbles:
        covered[s.class_id].update(int(v) for v in scribble_nodes(g.sp, s))
    centers = np.empty((len(class_ids), g.feature_dim))
    for j, c in enumerate(class_ids):
        nodes = sorted(covered[c])
        if not nodes:
            raise ClassWithoutScribbleError(f"class {c} has no scribbled node")
        wts = g.sizes[nodes].astype(np.float64)
        centers[j] = (g.features[nodes] * wts[:, None]).sum(axis=0) / wts.sum()
    unary = np.linalg.norm(g.features[:, None, :] - centers[None, :, :], axis=2)
    return CostTable(unary, class_ids)


def pairwise_weights(g: RagGraph) -> RagGraph:
    """Set every real edge's weight to exp(-feature distance); pseudo stay 0."""
    for e in g.edges:
        if e.pseudo:
            e.weight = 0.0
        else:
            e.weight = float(np.exp(-np.linalg.norm(g.features[e.u] - g.features[e.v])))
    return g
