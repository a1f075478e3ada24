from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import DimensionError, OutOfBoundsError

GROUND_SIZE = 64


@dataclass(frozen=True)
class GeoLocation:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or math.isnan(self.lat):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0) or math.isnan(self.lon):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class LandCoverClass:
    id: int
    name: str


URBAN = LandCoverClass(0, "urban")
RURAL = LandCoverClass(1, "rural")
DEFAULT_CLASSES = (URBAN, RURAL)


def check_classes(classes: Sequence[LandCoverClass]) -> tuple[LandCoverClass, ...]:
    classes = tuple(sorted(classes, key=lambda c: c.id))
    if [c.id for c in classes] != list(range(len(classes))):
        raise ValueError("class ids must be dense 0..K-1")
    if len({c.name for c in classes}) != len(classes):
        raise ValueError("class names must be unique")
    return classes


@dataclass(frozen=True)
class Bounds:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ValueError(f"degenerate bounds {self}")

    def contains(self, loc: GeoLocation) -> bool:
        # closed test; ownership of shared edges is settled by GridGeometry
        return self.min_lat <= loc.lat <= self.max_lat and self.min_lon <= loc.lon <= self.max_lon


@dataclass(frozen=True)
class GridCell:
    row: int
    col: int
    label: LandCoverClass
    bounds: Bounds


@dataclass(frozen=True)
class GridGeometry:
    """Equirectangular cell grid; row 0 is the southernmost row.

    Cells own the half-open box [min, max) on both axes, except that the
    global maximum edge on each axis belongs to the last row/column.
    """

    min_lat: float
    min_lon: float
    cell_lat: float
    cell_lon: float
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if self.cell_lat <= 0 or self.cell_lon <= 0:
            raise ValueError("cell size must be positive")

    @property
    def max_lat(self) -> float:
        return self.min_lat + self.rows * self.cell_lat

    @property
    def max_lon(self) -> float:
        return self.min_lon + self.cols * self.cell_lon

    @property
    def extent(self) -> Bounds:
        return Bounds(self.min_lat, self.max_lat, self.min_lon, self.max_lon)

    def bounds(self, row: int, col: int) -> Bounds:
        return Bounds(
            self.min_lat + row * self.cell_lat,
            self.min_lat + (row + 1) * self.cell_lat,
            self.min_lon + col * self.cell_lon,
            self.min_lon + (col + 1) * self.cell_lon,
        )

    def center(self, row: int, col: int) -> GeoLocation:
        b = self.bounds(row, col)
        return GeoLocation((b.min_lat + b.max_lat) / 2, (b.min_lon + b.max_lon) / 2)

    def _axis_index(self, value: float, lo: float, step: float, n: int) -> int:
        i = math.floor((value - lo) / step)
        # the floor can land one off when value sits on an edge; settle it
        # against the same edge arithmetic used by bounds()
        if i > 0 and value < lo + i * step:
            i -= 1
        elif i < n - 1 and value >= lo + (i + 1) * step:
            i += 1
        return min(max(i, 0), n - 1)

    def locate(self, loc: GeoLocation) -> tuple[int, int]:
        if not (self.min_lat <= loc.lat <= self.max_lat and self.min_lon <= loc.lon <= self.max_lon):
            raise OutOfBoundsError(loc, self.extent)
        r = self._axis_index(loc.lat, self.min_lat, self.cell_lat, self.rows)
        c = self._axis_index(loc.lon, self.min_lon, self.cell_lon, self.cols)
        return r, c


@dataclass(frozen=True, eq=False)
class OverheadPatch:
    pixels: np.ndarray
    center: GeoLocation
    patch_size: int = 10

    def __post_init__(self):
        p = self.pixels
        if p.shape != (self.patch_size, self.patch_size, 3):
            raise DimensionError(
                f"overhead patch must be {self.patch_size}x{self.patch_size}x3, got {p.shape}"
            )
        if p.dtype != np.uint8:
            raise DimensionError(f"overhead patch must be uint8, got {p.dtype}")

    def __eq__(self, other):
        if not isinstance(other, OverheadPatch):
            return NotImplemented
        return (
            self.center == other.center
            and self.patch_size == other.patch_size
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True, eq=False)
class GroundImage:
    pixels: np.ndarray
    location: GeoLocation
    label: Optional[LandCoverClass] = None

    def __post_init__(self):
        if self.pixels.shape != (GROUND_SIZE, GROUND_SIZE, 3):
            raise DimensionError(f"ground image must be 64x64x3, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise DimensionError(f"ground image must be uint8, got {self.pixels.dtype}")

    def __eq__(self, other):
        if not isinstance(other, GroundImage):
            return NotImplemented
        return (
            self.location == other.location
            and self.label == other.label
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class PairedSample:
    ground: GroundImage
    overhead: OverheadPatch
    cell: GridCell

    def __post_init__(self):
        if not self.cell.bounds.contains(self.overhead.center):
            raise ValueError("overhead patch center lies outside its cell")
        if not self.cell.bounds.contains(self.ground.location):
            raise ValueError("ground image location lies outside its cell")


@dataclass(frozen=True)
class SyntheticWorldSpec:
    grid_h: int
    grid_w: int
    layout: str = "checkerboard"
    images_per_cell: int = 10
    seed: int = 0
    # ~1 km cells around London
    origin_lat: float = 51.28
    origin_lon: float = -0.51
    cell_lat: float = 0.009
    cell_lon: float = 0.0144
    cell_px: int = 20
    patch_size: int = 10
    classes: tuple = field(default=DEFAULT_CLASSES)

    def __post_init__(self):
        if self.grid_h < 2 or self.grid_w < 2:
            raise ValueError("synthetic grid must be at least 2x2")
        if self.images_per_cell < 1:
            raise ValueError("images_per_cell must be >= 1")
        if self.layout not in ("checkerboard", "halves", "random"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.cell_px < self.patch_size:
            raise ValueError("cell_px must be at least patch_size")

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(
            self.origin_lat, self.origin_lon, self.cell_lat, self.cell_lon, self.grid_h, self.grid_w
        )
