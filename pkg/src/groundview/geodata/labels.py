from __future__ import annotations

from typing import Iterable

from .types import GeoLocation, LandCoverClass


def propagate_labels(label_map, locations: Iterable[GeoLocation]) -> list[LandCoverClass]:
    """Give each location the class of the grid cell that contains it.

    ``label_map`` is anything exposing ``geometry`` (a GridGeometry),
    ``grid`` (rows x cols array of class ids) and ``classes``.
    Raises OutOfBoundsError for a location outside the grid extent.
    """
    geometry = label_map.geometry
    classes = {c.id: c for c in label_map.classes}
    out = []
    for loc in locations:
        r, c = geometry.locate(loc)
        out.append(classes[int(label_map.grid[r, c])])
    return out
