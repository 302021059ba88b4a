"""Scribble data model, drawing policy, rasterization, and the correction
simulator used for interactive experiments."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .errors import NothingToCorrectError, OutOfBoundsError
from .raster import CROSS, PanopticTruth

THING = "thing"
STUFF = "stuff"


@dataclass
class Scribble:
    """One polyline annotation carrying class, region and optional instance."""

    points: list  # [(x, y), ...] pixel coordinates
    class_id: int
    region_id: int
    instance_id: int | None = None
    thickness: int = 3

    def __post_init__(self):
        if not self.points:
            raise ValueError("scribble polyline must be non-empty")
        self.points = [(int(x), int(y)) for x, y in self.points]


@dataclass
class ScribbleSet:
    """All scribbles of one annotation session plus the thing/stuff map."""

    scribbles: list = field(default_factory=list)
    class_map: dict = field(default_factory=dict)  # class_id -> "thing"|"stuff"

    def region_ids(self):
        return [s.region_id for s in self.scribbles]

    def class_ids(self):
        return sorted({s.class_id for s in self.scribbles})

    def with_added(self, scribble: Scribble) -> "ScribbleSet":
        return ScribbleSet(self.scribbles + [scribble], dict(self.class_map))

    def is_thing(self, class_id: int) -> bool:
        return self.class_map.get(class_id, STUFF) == THING

    def to_json(self) -> str:
        doc = {
            "scribbles": [
                {
                    "class_id": s.class_id,
                    "region_id": s.region_id,
                    "instance_id": s.instance_id,
                    "thickness": s.thickness,
                    "points": [[x, y] for x, y in s.points],
                }
                for s in self.scribbles
            ],
            "class_map": {str(k): v for k, v in self.class_map.items()},
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScribbleSet":
        doc = json.loads(text)
        scribbles = [
            Scribble(
                points=[(p[0], p[1]) for p in entry["points"]],
                class_id=int(entry["class_id"]),
                region_id=int(entry["region_id"]),
                instance_id=(
                    None if entry.get("instance_id") is None else int(entry["instance_id"])
                ),
                thickness=int(entry.get("thickness", 3)),
            )
            for entry in doc["scribbles"]
        ]
        class_map = {int(k): v for k, v in doc.get("class_map", {}).items()}
        return cls(scribbles, class_map)

    @classmethod
    def load(cls, path) -> "ScribbleSet":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------


def _bresenham(x0, y0, x1, y1):
    """Integer line pixels with extra corner pixels, so the path is 4-connected."""
    pixels = [(x0, y0)]
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    err = dx - dy
    x, y = x0, y0
    while (x, y) != (x1, y1):
        e2 = 2 * err
        stepped_x = stepped_y = False
        if e2 > -dy:
            err -= dy
            x += sx
            stepped_x = True
        if e2 < dx:
            err += dx
            y += sy
            stepped_y = True
        if stepped_x and stepped_y:
            pixels.append((x, y - sy))  # fill the corner of a diagonal step
        pixels.append((x, y))
    return pixels


def rasterize(scribble: Scribble, width: int, height: int, clip: bool = False) -> np.ndarray:
    """Rasterize one scribble to a boolean mask.

    The stroke is a thick Bresenham polyline; the result is deterministic and
    4-connected. Out-of-bounds polyline points raise OutOfBoundsError unless
    ``clip`` is set, in which case they are dropped (which may split the
    stroke; the policy validator relies on that).
    """
    if not clip:
        for x, y in scribble.points:
            if not (0 <= x < width and 0 <= y < height):
                raise OutOfBoundsError(f"point ({x}, {y}) outside {width}x{height}")
    mask = np.zeros((height, width), dtype=bool)
    t = max(int(scribble.thickness), 1)
    offsets = range(-(t // 2), t - t // 2)
    path = []
    pts = scribble.points
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        path.extend(_bresenham(x0, y0, x1, y1)[1:] if path else _bresenham(x0, y0, x1, y1))
    if not path:
        path = [pts[0]]
    for x, y in path:
        if clip and not (0 <= x < width and 0 <= y < height):
            continue
        ylo, yhi = max(y + offsets.start, 0), min(y + offsets.stop, height)
        xlo, xhi = max(x + offsets.start, 0), min(x + offsets.stop, width)
        mask[ylo:yhi, xlo:xhi] = True
    return mask


def raster_union(scribbles, width: int, height: int) -> np.ndarray:
    """Union of all scribble masks, clipped."""
    out = np.zeros((height, width), dtype=bool)
    for s in scribbles:
        out |= rasterize(s, width, height, clip=True)
    return out


def override_maps(ss: ScribbleSet, width: int, height: int):
    """Per-pixel (class, region, instance) maps of the scribbles, -1 where none.

    Later scribbles win on overlap, matching the newest-annotation-wins rule.
    """
    class_map = np.full((height, width), -1, dtype=np.int32)
    region_map = np.full((height, width), -1, dtype=np.int32)
    inst_map = np.full((height, width), -1, dtype=np.int32)
    for s in ss.scribbles:
        mask = rasterize(s, width, height, clip=True)
        class_map[mask] = s.class_id
        region_map[mask] = s.region_id
        inst_map[mask] = -1 if s.instance_id is None else s.instance_id
    return class_map, region_map, inst_map


# ---------------------------------------------------------------------------
# Policy validation
# ---------------------------------------------------------------------------


@dataclass
class PolicyReport:
    violations: list  # (kind, detail) pairs

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_policy(ss: ScribbleSet, width: int, height: int) -> PolicyReport:
    """Check the drawing policy: connected strokes, unique regions, no overlap."""
    violations = []
    seen_regions = {}
    overlap_owner = np.full((height, width), -1, dtype=np.int64)
    for idx, s in enumerate(ss.scribbles):
        mask = rasterize(s, width, height, clip=True)
        _, ncomp = ndimage.label(mask, structure=CROSS)
        if ncomp != 1:
            violations.append(
                ("disconnected", f"scribble {idx} rasterizes to {ncomp} components")
            )
        if s.region_id in seen_regions:
            violations.append(
                ("duplicate_region", f"region {s.region_id} on scribbles "
                 f"{seen_regions[s.region_id]} and {idx}")
            )
        else:
            seen_regions[s.region_id] = idx
        clash = mask & (overlap_owner >= 0) & (overlap_owner != s.region_id)
        if clash.any():
            other = int(overlap_owner[clash][0])
            violations.append(
                ("overlap", f"regions {other} and {s.region_id} share pixels")
            )
        overlap_owner[mask] = s.region_id
    return PolicyReport(violations)


# ---------------------------------------------------------------------------
# Correction simulator
# ---------------------------------------------------------------------------

_NEIGH8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
_NEIGH4 = [(-1, 0), (0, -1), (0, 1), (1, 0)]


def _bfs_farthest(start, pixels):
    """BFS over an 8-connected pixel set; returns (farthest pixel, parents)."""
    dist = {start: 0}
    parent = {start: None}
    queue = deque([start])
    far = start
    while queue:
        y, x = queue.popleft()
        for dy, dx in _NEIGH8:
            nxt = (y + dy, x + dx)
            if nxt in pixels and nxt not in dist:
                dist[nxt] = dist[y, x] + 1
                parent[nxt] = (y, x)
                queue.append(nxt)
                if dist[nxt] > dist[far] or (dist[nxt] == dist[far] and nxt < far):
                    far = nxt
    return far, parent


def _bfs_path4(src, dst, inside):
    """Shortest 4-connected path within a mask; both endpoints inclusive."""
    parent = {src: None}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        if cur == dst:
            break
        y, x = cur
        for dy, dx in _NEIGH4:
            nxt = (y + dy, x + dx)
            if nxt in inside and nxt not in parent:
                parent[nxt] = cur
                queue.append(nxt)
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _bfs_farthest4(start, pixels):
    """BFS over a 4-connected pixel set; returns the farthest pixel."""
    dist = {start: 0}
    queue = deque([start])
    far = start
    while queue:
        y, x = queue.popleft()
        for dy, dx in _NEIGH4:
            nxt = (y + dy, x + dx)
            if nxt in pixels and nxt not in dist:
                dist[nxt] = dist[y, x] + 1
                queue.append(nxt)
                if dist[nxt] > dist[far] or (dist[nxt] == dist[far] and nxt < far):
                    far = nxt
    return far


def _largest_component(mask: np.ndarray) -> np.ndarray:
    labeled, n = ndimage.label(mask, structure=CROSS)
    if n == 0:
        return mask
    sizes = np.bincount(labeled.ravel())
    sizes[0] = 0
    return labeled == int(np.argmax(sizes))


def _stroke_path(target: np.ndarray) -> list:
    """Longest skeleton path through a 4-connected region, as 4-connected
    (y, x) pixels inside the region, eroded down to >= 5 pixels."""
    skel = skeletonize(target)
    if not skel.any():
        skel = np.zeros_like(target)
        ys, xs = np.nonzero(target)
        skel[ys[0], xs[0]] = True
    pixels = set(zip(*np.nonzero(skel)))
    inside = set(zip(*np.nonzero(target)))
    start = min(pixels)
    end_a, _ = _bfs_farthest(start, pixels)
    end_b, parent = _bfs_farthest(end_a, pixels)
    rough = [end_b]
    while parent[rough[-1]] is not None:
        rough.append(parent[rough[-1]])
    rough.reverse()
    path = [rough[0]]
    for cur in rough[1:]:
        prev = path[-1]
        if abs(cur[0] - prev[0]) + abs(cur[1] - prev[1]) > 1:
            corner_a = (prev[0], cur[1])
            corner_b = (cur[0], prev[1])
            if corner_a in inside:
                path.append(corner_a)
            elif corner_b in inside:
                path.append(corner_b)
            else:
                path.extend(_bfs_path4(prev, cur, inside)[1:-1])
        path.append(cur)
    if len(path) < 5:
        # blocky regions skeletonize to almost nothing; fall back to the
        # region's geodesic diameter path
        end_a = _bfs_farthest4(min(inside), inside)
        end_b = _bfs_farthest4(end_a, inside)
        alt = _bfs_path4(end_a, end_b, inside)
        if len(alt) > len(path):
            path = alt
    interior = ndimage.binary_erosion(target, structure=CROSS, border_value=0)
    while len(path) > 5:
        if not interior[path[0]]:
            path.pop(0)
        elif not interior[path[-1]]:
            path.pop()
        else:
            break
    return path


def simulate_correction(
    pred_class: np.ndarray, truth: PanopticTruth, existing: ScribbleSet
) -> Scribble:
    """Produce one correction scribble inside the largest mislabeled region.

    The target is the largest 4-connected erroneous component, narrowed to
    the ground-truth segment it overlaps most; the stroke follows the longest
    path of that region's morphological skeleton and gets the segment's class
    and instance plus a fresh region id. Corrections of an already-scribbled
    segment share its instance id, never its region id, so region ids stay
    unique across the set.
    """
    h, w = truth.class_ids.shape
    if pred_class.shape != (h, w):
        raise ValueError("prediction and truth shapes differ")
    errors = (pred_class != truth.class_ids) & truth.valid_mask()
    errors &= ~raster_union(existing.scribbles, w, h)
    if not errors.any():
        raise NothingToCorrectError("prediction matches truth everywhere")

    labeled, n = ndimage.label(errors, structure=CROSS)
    sizes = np.bincount(labeled.ravel())
    sizes[0] = 0
    blob = labeled == int(np.argmax(sizes))

    keys = truth.class_ids.astype(np.int64) * (truth.instance_ids.max() + 2) + (
        truth.instance_ids + 1
    )
    seg_keys, counts = np.unique(keys[blob], return_counts=True)
    best_key = int(seg_keys[np.lexsort((seg_keys, -counts))[0]])
    target = _largest_component(blob & (keys == best_key))

    ys, xs = np.nonzero(target)
    cls = int(truth.class_ids[ys[0], xs[0]])
    inst = int(truth.instance_ids[ys[0], xs[0]])

    path = _stroke_path(target)
    points = [(int(x), int(y)) for y, x in path]

    is_thing = existing.is_thing(cls) if cls in existing.class_map else inst > 0
    instance_id = inst if is_thing else None

    region_id = max(existing.region_ids(), default=-1) + 1

    return Scribble(
        points=points,
        class_id=cls,
        region_id=region_id,
        instance_id=instance_id,
        thickness=1,
    )
