"""Land-cover maps: majority-vote cell labels, map agreement, rendering.

Grid row 0 is the southernmost row. Rendered images put north at the top.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import CoverageError, DimensionError
from .geodata.types import DEFAULT_CLASSES, Bounds, GridGeometry, LandCoverClass, check_classes

PROVENANCES = ("ground-truth", "ground-images", "cgan-features", "interpolated")
DEFAULT_PALETTE = {"urban": (139, 69, 19), "rural": (34, 139, 34)}


def _id(label) -> int:
    return int(getattr(label, "id", label))


def majority_vote(labels: Iterable) -> int:
    """Modal class id; ties go to the lowest id."""
    counts = Counter(_id(l) for l in labels)
    if not counts:
        raise ValueError("majority vote over an empty label list")
    best = max(counts.values())
    return min(k for k, v in counts.items() if v == best)


@dataclass(frozen=True, eq=False)
class LandCoverMap:
    grid: np.ndarray
    geometry: Optional[GridGeometry] = None
    classes: tuple = DEFAULT_CLASSES
    provenance: str = "ground-truth"

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise DimensionError(f"map grid must be a non-empty 2D array, got shape {g.shape}")
        if not np.issubdtype(g.dtype, np.integer):
            raise DimensionError("map grid must hold integer class ids")
        classes = check_classes(self.classes)
        if g.min() < 0 or g.max() >= len(classes):
            raise ValueError(f"map holds class ids outside 0..{len(classes) - 1}")
        if self.geometry is not None and (self.geometry.rows, self.geometry.cols) != g.shape:
            raise DimensionError("map grid shape does not match its geometry")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "grid", g.astype(np.int64))
        object.__setattr__(self, "classes", classes)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def extent(self) -> Optional[Bounds]:
        return self.geometry.extent if self.geometry is not None else None

    def __eq__(self, other):
        if not isinstance(other, LandCoverMap):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and self.geometry == other.geometry
            and self.classes == other.classes
            and np.array_equal(self.grid, other.grid)
        )


def labels_by_cell(cells: Sequence[tuple[int, int]], labels: Sequence) -> dict:
    """Group per-location labels by their (row, col) cell."""
    if len(cells) != len(labels):
        raise DimensionError("one cell per label is required")
    out: dict = {}
    for rc, lab in zip(cells, labels):
        out.setdefault((int(rc[0]), int(rc[1])), []).append(_id(lab))
    return out


def build_map(
    shape: tuple[int, int],
    per_cell_labels: Mapping,
    provenance: str,
    geometry: Optional[GridGeometry] = None,
    classes=DEFAULT_CLASSES,
) -> LandCoverMap:
    rows, cols = shape
    missing = [(r, c) for r in range(rows) for c in range(cols) if not per_cell_labels.get((r, c))]
    if missing:
        shown = ", ".join(f"({r},{c})" for r, c in missing[:20])
        more = f" and {len(missing) - 20} more" if len(missing) > 20 else ""
        raise CoverageError(f"{len(missing)} cells have no labels: {shown}{more}")
    grid = np.zeros((rows, cols), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            grid[r, c] = majority_vote(per_cell_labels[(r, c)])
    return LandCoverMap(grid, geometry, tuple(classes), provenance)


def map_accuracy(pred: LandCoverMap, truth: LandCoverMap) -> float:
    if pred.shape != truth.shape:
        raise DimensionError(f"map shapes differ: {pred.shape} vs {truth.shape}")
    return float(np.count_nonzero(pred.grid == truth.grid)) / pred.grid.size


def palette_for(classes: Sequence[LandCoverClass], palette: Optional[Mapping] = None) -> dict:
    """Class id -> RGB. ``palette`` may be keyed by class name or id."""
    palette = DEFAULT_PALETTE if palette is None else palette
    out = {}
    for c in classes:
        color = palette.get(c.id, palette.get(c.name))
        if color is None:
            raise KeyError(f"palette has no color for class {c.id} ({c.name})")
        out[c.id] = tuple(int(v) for v in color)
    return out


def render_array(m: LandCoverMap, palette: Optional[Mapping] = None, block: int = 16) -> np.ndarray:
    colors = palette_for(m.classes, palette)
    lut = np.zeros((max(colors) + 1, 3), dtype=np.uint8)
    for k, rgb in colors.items():
        lut[k] = rgb
    img = lut[m.grid[::-1]]  # north up
    return np.repeat(np.repeat(img, block, axis=0), block, axis=1)


def render_map(m: LandCoverMap, palette: Optional[Mapping] = None, block: int = 16) -> bytes:
    """PNG bytes with one ``block`` x ``block`` square per cell."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(render_array(m, palette, block)).save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------- persistence


def write_map_csv(path, m: LandCoverMap) -> None:
    g = m.geometry
    geo = "-" if g is None else ",".join(repr(v) for v in (g.min_lat, g.min_lon, g.cell_lat, g.cell_lon)) + f",{g.rows},{g.cols}"
    classes = ";".join(f"{c.id}:{c.name}" for c in m.classes)
    lines = [f"# provenance={m.provenance} geometry={geo} classes={classes} row0=south"]
    lines += [",".join(str(int(v)) for v in row) for row in m.grid]
    Path(path).write_text("\n".join(lines) + "\n")


def read_map_csv(path) -> LandCoverMap:
    text = Path(path).read_text().splitlines()
    meta = dict(item.split("=", 1) for item in text[0].lstrip("# ").split(" "))
    grid = np.array([[int(v) for v in line.split(",")] for line in text[1:] if line.strip()], dtype=np.int64)
    geometry = None
    if meta["geometry"] != "-":
        vals = meta["geometry"].split(",")
        geometry = GridGeometry(*(float(v) for v in vals[:4]), int(vals[4]), int(vals[5]))
    classes = tuple(LandCoverClass(int(k), n) for k, n in (c.split(":", 1) for c in meta["classes"].split(";")))
    return LandCoverMap(grid, geometry, classes, meta["provenance"])
