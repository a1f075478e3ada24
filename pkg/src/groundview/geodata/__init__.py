"""Geospatial data model, label propagation, datasets, imagery access and
the synthetic desk-scale world."""

from .dataset import load_dataset, save_dataset
from .labels import propagate_labels
from .synthetic import SyntheticWorld, generate_synthetic_world
from .tiles import Mosaic, TileClient, TileClientConfig, WorldFile, fetch_overhead_patch
from .types import (
    DEFAULT_CLASSES,
    RURAL,
    URBAN,
    Bounds,
    GeoLocation,
    GridCell,
    GridGeometry,
    GroundImage,
    LandCoverClass,
    OverheadPatch,
    PairedSample,
    SyntheticWorldSpec,
)
