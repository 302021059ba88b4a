"""Raster ingestion: images, superpixel maps, dense fields, panoptic truth.

All loaders validate their invariants up front and return immutable
numpy-backed containers. Pixel adjacency is 4-connected everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import (
    CorruptFileError,
    NotNormalizedError,
    ShapeMismatchError,
    UnsupportedFormatError,
)

IGNORE_CLASS = 255

RAW_MAGIC = b"CSEG1"

# 4-connectivity structuring element for component labeling
CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class ImagePlane:
    """Multi-channel image with values normalized to [0, 1]."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # (H, W, C) float64

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, self.channels):
            raise ShapeMismatchError(
                f"image data shape {self.data.shape} != "
                f"({self.height}, {self.width}, {self.channels})"
            )
        if self.channels < 1:
            raise ShapeMismatchError("channels must be >= 1")

    def pixel_matrix(self) -> np.ndarray:
        """Row-major (H*W, C) view of the per-pixel vectors."""
        return self.data.reshape(-1, self.channels)


@dataclass(frozen=True)
class SuperpixelMap:
    """Dense superpixel index map; every id region is 4-connected."""

    width: int
    height: int
    ids: np.ndarray  # (H, W) int32

    def __post_init__(self):
        if self.ids.shape != (self.height, self.width):
            raise ShapeMismatchError("superpixel id map shape mismatch")

    @property
    def count(self) -> int:
        return int(self.ids.max()) + 1

    def sizes(self) -> np.ndarray:
        return np.bincount(self.ids.ravel(), minlength=self.count)


@dataclass(frozen=True)
class DenseFieldMap:
    """Per-pixel feature or probability field of fixed depth."""

    width: int
    height: int
    depth: int
    values: np.ndarray  # (H, W, D) float64
    probability: bool = False

    def __post_init__(self):
        if self.values.shape != (self.height, self.width, self.depth):
            raise ShapeMismatchError("field shape mismatch")
        if self.probability:
            check_probability(self.values)

    def pixel_matrix(self) -> np.ndarray:
        return self.values.reshape(-1, self.depth)


@dataclass(frozen=True)
class PanopticTruth:
    """Ground-truth class and instance indices per pixel.

    Pixels whose class equals IGNORE_CLASS are excluded from all metrics.
    Instance id 0 marks stuff.
    """

    width: int
    height: int
    class_ids: np.ndarray  # (H, W) int32
    instance_ids: np.ndarray  # (H, W) int32

    def __post_init__(self):
        shape = (self.height, self.width)
        if self.class_ids.shape != shape or self.instance_ids.shape != shape:
            raise ShapeMismatchError("truth map shape mismatch")

    def valid_mask(self) -> np.ndarray:
        return self.class_ids != IGNORE_CLASS


def check_probability(values: np.ndarray, tol: float = 1e-4) -> None:
    """Raise NotNormalizedError unless per-pixel slices sum to 1 within tol."""
    if values.min() < -tol or values.max() > 1 + tol:
        raise NotNormalizedError("probability entries outside [0, 1]")
    sums = values.sum(axis=-1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > tol:
        raise NotNormalizedError(f"per-pixel probability sum off by {worst:.2e}")


# ---------------------------------------------------------------------------
# Images (PNG 8-bit 1/3 channel, PPM P6)
# ---------------------------------------------------------------------------


def load_image(path) -> ImagePlane:
    """Load a PNG or PPM image, normalizing 8-bit values by v/255 exactly."""
    path = Path(path)
    try:
        head = path.open("rb").read(8)
    except OSError as exc:
        raise CorruptFileError(f"cannot read {path}: {exc}") from exc
    if head.startswith(b"\x89PNG"):
        return _load_png_image(path)
    if head.startswith(b"P6"):
        return _load_ppm(path)
    raise UnsupportedFormatError(f"{path}: not a PNG or P6 PPM file")


def _load_png_image(path: Path) -> ImagePlane:
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptFileError(f"{path}: {exc}") from exc
    if mode == "L":
        arr = arr[:, :, None]
    elif mode != "RGB":
        raise UnsupportedFormatError(f"{path}: unsupported PNG mode {mode}")
    h, w, c = arr.shape
    return ImagePlane(w, h, c, arr.astype(np.float64) / 255.0)


def _load_ppm(path: Path) -> ImagePlane:
    raw = path.read_bytes()
    fields, offset = [], 2  # past "P6"
    while len(fields) < 3:
        while offset < len(raw) and raw[offset : offset + 1].isspace():
            offset += 1
        if offset < len(raw) and raw[offset : offset + 1] == b"#":
            while offset < len(raw) and raw[offset] != 0x0A:
                offset += 1
            continue
        start = offset
        while offset < len(raw) and not raw[offset : offset + 1].isspace():
            offset += 1
        if start == offset:
            raise CorruptFileError(f"{path}: truncated PPM header")
        fields.append(raw[start:offset])
    offset += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise CorruptFileError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only 8-bit PPM supported")
    payload = raw[offset : offset + w * h * 3]
    if len(payload) != w * h * 3:
        raise CorruptFileError(f"{path}: PPM payload truncated")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return ImagePlane(w, h, 3, arr.astype(np.float64) / 255.0)


def save_image(plane: ImagePlane, path) -> None:
    """Write a canonical PNG or PPM; loading it back reproduces the bytes."""
    path = Path(path)
    arr = np.round(plane.data * 255.0).astype(np.uint8)
    if path.suffix.lower() in (".ppm", ".pnm"):
        if plane.channels != 3:
            raise UnsupportedFormatError("PPM requires 3 channels")
        header = f"P6\n{plane.width} {plane.height}\n255\n".encode()
        path.write_bytes(header + arr.tobytes())
        return
    if plane.channels == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    elif plane.channels == 3:
        img = Image.fromarray(arr, mode="RGB")
    else:
        raise UnsupportedFormatError("PNG supports 1 or 3 channels")
    img.save(path, format="PNG")


# ---------------------------------------------------------------------------
# Raw tensor format: b"CSEG1" + JSON header line + little-endian payload
# ---------------------------------------------------------------------------

_DTYPES = {"f32": np.dtype("<f4"), "u16": np.dtype("<u2")}


def save_field(path, values: np.ndarray, dtype: str = "f32", probability: bool = False) -> None:
    """Write an (H, W, D) array in the raw tensor format."""
    if values.ndim == 2:
        values = values[:, :, None]
    h, w, d = values.shape
    header = json.dumps(
        {"dims": [h, w, d], "dtype": dtype, "probability": bool(probability)},
        separators=(",", ":"),
    )
    payload = np.ascontiguousarray(values.astype(_DTYPES[dtype])).tobytes()
    Path(path).write_bytes(RAW_MAGIC + header.encode() + b"\n" + payload)


def _read_raw_tensor(path: Path):
    raw = path.read_bytes()
    if not raw.startswith(RAW_MAGIC):
        raise UnsupportedFormatError(f"{path}: missing tensor magic")
    nl = raw.find(b"\n", len(RAW_MAGIC))
    if nl < 0:
        raise CorruptFileError(f"{path}: missing header terminator")
    try:
        header = json.loads(raw[len(RAW_MAGIC) : nl].decode("utf-8"))
        h, w, d = (int(v) for v in header["dims"])
        dtype = _DTYPES[header["dtype"]]
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{path}: bad tensor header") from exc
    payload = raw[nl + 1 :]
    if len(payload) != h * w * d * dtype.itemsize:
        raise ShapeMismatchError(
            f"{path}: payload holds {len(payload)} bytes, header implies "
            f"{h * w * d * dtype.itemsize}"
        )
    values = np.frombuffer(payload, dtype=dtype).reshape(h, w, d)
    return values, bool(header.get("probability", False))


def load_field(path, expect_probability: bool = False) -> DenseFieldMap:
    """Load a raw tensor; verify the probability invariant when flagged."""
    values, _ = _read_raw_tensor(Path(path))
    values = values.astype(np.float64)
    h, w, d = values.shape
    return DenseFieldMap(w, h, d, values, probability=expect_probability)


# ---------------------------------------------------------------------------
# Superpixel maps and panoptic truth
# ---------------------------------------------------------------------------


def _read_index_raster(path: Path, depth: int) -> np.ndarray:
    """Read an integer raster from 16-bit PNG or the raw tensor format."""
    head = path.open("rb").read(8)
    if head.startswith(RAW_MAGIC):
        values, _ = _read_raw_tensor(path)
        if values.shape[2] != depth:
            raise ShapeMismatchError(f"{path}: expected depth {depth}")
        return values.astype(np.int32)
    if head.startswith(b"\x89PNG"):
        if depth != 1:
            raise ShapeMismatchError(f"{path}: PNG holds a single plane")
        try:
            with Image.open(path) as img:
                img.load()
                if img.mode not in ("I", "I;16", "L"):
                    raise UnsupportedFormatError(
                        f"{path}: index PNG must be grayscale, got {img.mode}"
                    )
                return np.asarray(img).astype(np.int32)[:, :, None]
        except (UnidentifiedImageError, OSError, SyntaxError) as exc:
            raise CorruptFileError(f"{path}: {exc}") from exc
    raise UnsupportedFormatError(f"{path}: not a PNG or raw tensor file")


def load_index_plane(path) -> np.ndarray:
    """Read one integer plane (16-bit PNG or depth-1 raw tensor)."""
    return _read_index_raster(Path(path), depth=1)[:, :, 0]


def save_index_png(values: np.ndarray, path) -> None:
    """Write an integer plane as 16-bit grayscale PNG."""
    if values.min() < 0 or values.max() > 0xFFFF:
        raise ShapeMismatchError("index plane out of uint16 range")
    Image.fromarray(values.astype(np.uint16)).save(path, format="PNG")


def normalize_superpixels(ids: np.ndarray) -> SuperpixelMap:
    """Build a SuperpixelMap, splitting non-connected ids and re-indexing.

    New ids are assigned sequentially over (old id ascending, component in
    scan order), so an already dense and connected map is left unchanged.
    """
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ShapeMismatchError("superpixel ids must be a 2-D map")
    if ids.min() < 0:
        raise ShapeMismatchError("superpixel ids must be non-negative")
    h, w = ids.shape
    out = np.empty((h, w), dtype=np.int32)
    next_id = 0
    for old in np.unique(ids):
        mask = ids == old
        labeled, n = ndimage.label(mask, structure=CROSS)
        for comp in range(1, n + 1):
            out[labeled == comp] = next_id
            next_id += 1
    return SuperpixelMap(w, h, out)


def load_superpixels(path) -> SuperpixelMap:
    """Load a superpixel map and enforce the dense/4-connected invariant."""
    plane = _read_index_raster(Path(path), depth=1)[:, :, 0]
    return normalize_superpixels(plane)


def load_truth(path, instance_path=None) -> PanopticTruth:
    """Load panoptic truth from a depth-2 raw tensor or PNG plane(s)."""
    path = Path(path)
    head = path.open("rb").read(8)
    if head.startswith(RAW_MAGIC):
        values, _ = _read_raw_tensor(path)
        if values.shape[2] != 2:
            raise ShapeMismatchError(f"{path}: truth tensor must have depth 2")
        class_ids = values[:, :, 0].astype(np.int32)
        inst_ids = values[:, :, 1].astype(np.int32)
    else:
        class_ids = _read_index_raster(path, depth=1)[:, :, 0]
        if instance_path is not None:
            inst_ids = _read_index_raster(Path(instance_path), depth=1)[:, :, 0]
        else:
            inst_ids = np.zeros_like(class_ids)
    if class_ids.shape != inst_ids.shape:
        raise ShapeMismatchError("class and instance planes differ in shape")
    h, w = class_ids.shape
    return PanopticTruth(w, h, class_ids, inst_ids)


def save_truth(truth: PanopticTruth, path) -> None:
    """Write panoptic truth as a depth-2 u16 raw tensor."""
    stacked = np.stack([truth.class_ids, truth.instance_ids], axis=-1)
    save_field(path, stacked, dtype="u16")


# ---------------------------------------------------------------------------
# Grid fallback
# ---------------------------------------------------------------------------


def grid_superpixels(width: int, height: int, target_count: int) -> SuperpixelMap:
    """Tile the grid into near-square 4-connected superpixels.

    The tile count lands in [target_count, 2 * target_count] except when the
    image is too small to hold that many tiles, in which case it clamps.
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    ny = int(round(np.sqrt(target_count * height / max(width, 1))))
    ny = min(max(ny, 1), height, target_count)
    nx = min(max(-(-target_count // ny), 1), width)
    row_edges = np.linspace(0, height, ny + 1).round().astype(int)
    col_edges = np.linspace(0, width, nx + 1).round().astype(int)
    ids = np.empty((height, width), dtype=np.int32)
    for ty in range(ny):
        for tx in range(nx):
            ids[row_edges[ty] : row_edges[ty + 1], col_edges[tx] : col_edges[tx + 1]] = (
                ty * nx + tx
            )
    return SuperpixelMap(width, height, ids)
