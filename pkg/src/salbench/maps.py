"""Saliency-map and fixation primitives shared by every other module.

A saliency map is a plain 2-D float64 ndarray indexed [row, col] with
non-negative finite intensities. Fixations are 0-based (x=col, y=row)
pixel coordinates with the origin at the top-left corner.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    AllZeroMap,
    DimensionMismatch,
    EmptyFixations,
    MalformedFile,
    OutOfBounds,
)

HIST_EQ_BINS = 256


def as_map(values) -> np.ndarray:
    """Validate and return a 2-D float64 saliency map."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"saliency map must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("saliency map contains non-finite values")
    return arr


@dataclass(frozen=True)
class FixationSet:
    """Fixated pixel locations for one image.

    points is an (N, 2) int array of (x, y) pairs; duplicates are allowed
    until dedup() is called.
    """

    image_id: str
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def dedup(self) -> "FixationSet":
        """Drop duplicate points, preserving first-seen order."""
        if len(self) == 0:
            return self
        _, idx = np.unique(self.points, axis=0, return_index=True)
        return FixationSet(self.image_id, self.points[np.sort(idx)])

    def check_bounds(self, width: int, height: int) -> "FixationSet":
        x, y = self.points[:, 0], self.points[:, 1]
        bad = (x < 0) | (x >= width) | (y < 0) | (y >= height)
        if np.any(bad):
            p = self.points[bad][0]
            raise OutOfBounds(
                f"fixation ({p[0]},{p[1]}) outside {width}x{height} image '{self.image_id}'"
            )
        return self


class MapPair(NamedTuple):
    """An (ESM, GSM) pair on a common grid, both min-max normalized."""

    esm: np.ndarray
    gsm: np.ndarray


def resize_bilinear(map_: np.ndarray, w: int, h: int) -> np.ndarray:
    """Resample to (h, w) with pixel-center-aligned bilinear interpolation.

    Target pixel centers are mapped into source coordinates and edge-clamped;
    identical dimensions return an exact copy.
    """
    src = as_map(map_)
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be >= 1")
    sh, sw = src.shape
    if (sw, sh) == (w, h):
        return src.copy()

    xs = np.clip((np.arange(w) + 0.5) * (sw / w) - 0.5, 0.0, sw - 1.0)
    ys = np.clip((np.arange(h) + 0.5) * (sh / h) - 0.5, 0.0, sh - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = xs - x0
    fy = ys - y0

    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def minmax_normalize(map_: np.ndarray) -> np.ndarray:
    """Rescale to min 0 / max 1; a constant map becomes all zeros."""
    arr = as_map(map_)
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def to_distribution(map_: np.ndarray) -> np.ndarray:
    """Normalize non-negative intensities to sum to one."""
    arr = as_map(map_)
    if np.any(arr < 0):
        raise ValueError("distribution normalization needs non-negative values")
    total = arr.sum()
    if total == 0:
        raise AllZeroMap("cannot normalize an all-zero map to a distribution")
    return arr / total


def hist_equalize(map_: np.ndarray) -> np.ndarray:
    """Remap values in [0,1] through the 256-bin cumulative histogram.

    Preserves the weak ordering of pixel values (ties may merge) and keeps
    the output in [0,1]; used for the display renditions in subjective tests.
    """
    arr = as_map(map_)
    if arr.min() < 0 or arr.max() > 1:
        raise ValueError("hist_equalize expects values in [0,1]")
    bins = np.minimum((arr * HIST_EQ_BINS).astype(np.int64), HIST_EQ_BINS - 1)
    counts = np.bincount(bins.ravel(), minlength=HIST_EQ_BINS)
    cdf = np.cumsum(counts) / arr.size
    return cdf[bins]


def prepare_pair(esm: np.ndarray, gsm: np.ndarray) -> MapPair:
    """Resize the ESM onto the GSM grid, then min-max normalize both."""
    g = as_map(gsm)
    e = resize_bilinear(esm, g.shape[1], g.shape[0])
    return MapPair(minmax_normalize(e), minmax_normalize(g))


# ---------------------------------------------------------------------------
# File formats: PGM binary (P5, maxval 255) and FR32 float-raw + JSON sidecar.
# ---------------------------------------------------------------------------


def save_map(map_: np.ndarray, path) -> None:
    """Write a map as .pgm (8-bit, values must be in [0,1]) or .fr32."""
    path = Path(path)
    arr = as_map(map_)
    if path.suffix == ".pgm":
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("PGM storage expects values in [0,1]; use .fr32 for raw maps")
        quant = np.round(arr * 255).astype(np.uint8)
        h, w = arr.shape
        with open(path, "wb") as f:
            f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            f.write(quant.tobytes())
    elif path.suffix == ".fr32":
        h, w = arr.shape
        with open(path, "wb") as f:
            f.write(arr.astype("<f4").tobytes())
        sidecar = path.with_suffix(".fr32.json")
        sidecar.write_text(json.dumps({"width": w, "height": h}))
    else:
        raise ValueError(f"unsupported map extension: {path.suffix}")


def load_map(path) -> np.ndarray:
    """Read a .pgm or .fr32 map back into a float64 grid."""
    path = Path(path)
    if path.suffix == ".pgm":
        return _load_pgm(path)
    if path.suffix == ".fr32":
        return _load_fr32(path)
    raise ValueError(f"unsupported map extension: {path.suffix}")


def _load_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    fields: list[bytes] = []
    pos = 0
    # header = magic, width, height, maxval; '#' comments allowed between tokens
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedFile(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0] != b"P5":
        raise MalformedFile(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    except ValueError as e:
        raise MalformedFile(f"{path}: bad PGM header") from e
    if maxval != 255 or w < 1 or h < 1:
        raise MalformedFile(f"{path}: unsupported PGM header {w}x{h} maxval={maxval}")
    body = data[pos : pos + w * h]
    if len(body) != w * h:
        raise MalformedFile(f"{path}: expected {w * h} pixels, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def _load_fr32(path: Path) -> np.ndarray:
    sidecar = path.with_suffix(".fr32.json")
    try:
        meta = json.loads(sidecar.read_text())
        w, h = int(meta["width"]), int(meta["height"])
    except (OSError, ValueError, KeyError) as e:
        raise MalformedFile(f"{path}: missing or invalid sidecar {sidecar.name}") from e
    raw = path.read_bytes()
    if len(raw) != 4 * w * h:
        raise DimensionMismatch(f"{path}: {len(raw)} bytes does not match {w}x{h} float32 grid")
    arr = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise MalformedFile(f"{path}: non-finite values")
    return arr


def save_fixations(fix: FixationSet, path) -> None:
    """Write fixations as headerless 'x,y' CSV lines."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for x, y in fix.points:
            writer.writerow([int(x), int(y)])


def load_fixations(path, image_id: str | None = None, bounds: tuple[int, int] | None = None) -> FixationSet:
    """Read 'x,y' CSV fixations; rejects out-of-bounds points when bounds=(w,h) given."""
    path = Path(path)
    points = []
    try:
        with open(path, newline="") as f:
            for ln, row in enumerate(csv.reader(f), start=1):
                if not row:
                    continue
                if len(row) != 2:
                    raise MalformedFile(f"{path}:{ln}: expected 'x,y', got {row!r}")
                try:
                    points.append((int(row[0]), int(row[1])))
                except ValueError as e:
                    raise MalformedFile(f"{path}:{ln}: non-integer coordinate {row!r}") from e
    except OSError as e:
        raise MalformedFile(f"{path}: {e}") from e
    fix = FixationSet(image_id if image_id is not None else path.stem, np.array(points, dtype=np.int64).reshape(-1, 2))
    if bounds is not None:
        fix.check_bounds(*bounds)
    return fix


def require_fixations(fix: FixationSet) -> FixationSet:
    """Dedup and reject empty fixation sets (shared precondition of φ1-φ5)."""
    fix = fix.dedup()
    if len(fix) == 0:
        raise EmptyFixations(f"image '{fix.image_id}' has no fixations")
    return fix
