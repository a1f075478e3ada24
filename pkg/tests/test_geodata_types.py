import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from groundview.errors import DimensionError, OutOfBoundsError
from groundview.geodata import (
    RURAL,
    URBAN,
    Bounds,
    GeoLocation,
    GridGeometry,
    GroundImage,
    OverheadPatch,
    propagate_labels,
)
from groundview.mapping import LandCoverMap

GEOM = GridGeometry(51.0, -0.5, 0.009, 0.0144, 3, 4)


def _map(grid):
    return LandCoverMap(np.array(grid), GridGeometry(51.0, -0.5, 0.009, 0.0144, *np.shape(grid)))


def test_location_validation():
    GeoLocation(90.0, -180.0)
    with pytest.raises(ValueError):
        GeoLocation(90.5, 0.0)
    with pytest.raises(ValueError):
        GeoLocation(0.0, 181.0)
    with pytest.raises(ValueError):
        GeoLocation(math.nan, 0.0)


def test_center_of_urban_cell_is_urban():
    m = _map([[0, 1], [1, 0]])
    assert propagate_labels(m, [m.geometry.center(0, 0)]) == [URBAN]


def test_ten_locations_in_rural_cell():
    m = _map([[0, 1], [1, 0]])
    b = m.geometry.bounds(0, 1)
    locs = [GeoLocation(b.min_lat + (i + 0.5) * (b.max_lat - b.min_lat) / 10, b.min_lon + 0.001) for i in range(10)]
    assert propagate_labels(m, locs) == [RURAL] * 10


def test_outside_extent_raises():
    with pytest.raises(OutOfBoundsError):
        GEOM.locate(GeoLocation(50.0, 0.0))


def _brute_force_owner(geom: GridGeometry, loc: GeoLocation):
    """Point-in-rectangle scan with half-open [min, max) boxes, the global
    max edge belonging to the last row/column."""
    owners = []
    for r in range(geom.rows):
        for c in range(geom.cols):
            b = geom.bounds(r, c)
            in_lat = b.min_lat <= loc.lat < b.max_lat or (r == geom.rows - 1 and loc.lat == b.max_lat)
            in_lon = b.min_lon <= loc.lon < b.max_lon or (c == geom.cols - 1 and loc.lon == b.max_lon)
            if in_lat and in_lon:
                owners.append((r, c))
    return owners


def test_shared_edges_match_brute_force_scan():
    for r in range(GEOM.rows + 1):
        for c in range(GEOM.cols + 1):
            lat = GEOM.min_lat + r * GEOM.cell_lat
            lon = GEOM.min_lon + c * GEOM.cell_lon
            lat, lon = min(lat, GEOM.max_lat), min(lon, GEOM.max_lon)
            loc = GeoLocation(lat, lon)
            owners = _brute_force_owner(GEOM, loc)
            assert len(owners) == 1
            assert GEOM.locate(loc) == owners[0]


@given(st.floats(0, 1), st.floats(0, 1))
def test_locate_matches_brute_force(u, v):
    loc = GeoLocation(GEOM.min_lat + u * (GEOM.max_lat - GEOM.min_lat), GEOM.min_lon + v * (GEOM.max_lon - GEOM.min_lon))
    owners = _brute_force_owner(GEOM, loc)
    assert owners == [GEOM.locate(loc)]


def test_bounds_reject_degenerate():
    with pytest.raises(ValueError):
        Bounds(1.0, 1.0, 0.0, 1.0)


def test_image_type_checks():
    loc = GeoLocation(0.0, 0.0)
    with pytest.raises(DimensionError):
        GroundImage(np.zeros((32, 32, 3), np.uint8), loc)
    with pytest.raises(DimensionError):
        GroundImage(np.zeros((64, 64, 3), np.float32), loc)
    with pytest.raises(DimensionError):
        OverheadPatch(np.zeros((9, 10, 3), np.uint8), loc)
    a = GroundImage(np.zeros((64, 64, 3), np.uint8), loc, URBAN)
    assert a == GroundImage(np.zeros((64, 64, 3), np.uint8), loc, URBAN)
