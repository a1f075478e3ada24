"""Interpolate-then-classify baseline.

Features observed at sparse anchor locations are spread to query
locations with a normalized Gaussian kernel over distance in km, then
handed to an already-trained classifier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError
from .geodata.types import GeoLocation

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
DEFAULT_SIGMA_KM = 2.0
# below this log-weight exp() underflows to zero in float64
LOG_TINY = float(np.log(np.finfo(np.float64).tiny))


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in km; broadcasts over array inputs (degrees)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def planar_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Equirectangular approximation, adequate for small synthetic worlds."""
    mean_lat = np.radians((np.asarray(lat1) + np.asarray(lat2)) / 2)
    dx = np.radians(np.asarray(lon2) - np.asarray(lon1)) * np.cos(mean_lat)
    dy = np.radians(np.asarray(lat2) - np.asarray(lat1))
    return EARTH_RADIUS_KM * np.hypot(dx, dy)


METRICS = {"haversine": haversine_km, "planar": planar_km}


def _coords(locations) -> np.ndarray:
    if isinstance(locations, np.ndarray):
        arr = np.asarray(locations, dtype=np.float64)
    else:
        arr = np.array([[l.lat, l.lon] for l in locations], dtype=np.float64)
    return arr.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class SparseFeatureField:
    """Anchor coordinates (A, 2) in degrees with their features (A, d)."""

    coords: np.ndarray
    features: np.ndarray
    sigma_km: float = DEFAULT_SIGMA_KM
    metric: str = "haversine"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if len(coords) < 1:
            raise ValueError("a feature field needs at least one anchor")
        if feats.ndim != 2 or len(feats) != len(coords):
            raise DimensionError(f"expected one feature row per anchor, got {feats.shape} for {len(coords)} anchors")
        if not self.sigma_km > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma_km}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown distance metric {self.metric!r}")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", feats)

    @classmethod
    def from_anchors(cls, anchors: Sequence, sigma_km: float = DEFAULT_SIGMA_KM, metric: str = "haversine"):
        """``anchors`` is a list of (GeoLocation, vector or FeatureVector)."""
        if not anchors:
            raise ValueError("a feature field needs at least one anchor")
        vecs = [np.asarray(getattr(f, "values", f), dtype=np.float64) for _, f in anchors]
        if len({v.shape for v in vecs}) != 1:
            raise DimensionError("all anchor features must have the same dimension")
        return cls(_coords([loc for loc, _ in anchors]), np.stack(vecs), sigma_km, metric)

    @classmethod
    def from_csv(cls, path, sigma_km: float = DEFAULT_SIGMA_KM, metric: str = "haversine"):
        from .features import read_features_csv

        feats, locs = read_features_csv(path)
        return cls(_coords(locs), feats, sigma_km, metric)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_sigma(self, sigma_km: float) -> "SparseFeatureField":
        return SparseFeatureField(self.coords, self.features, sigma_km, self.metric)

    def distances(self, queries) -> np.ndarray:
        q = _coords(queries)
        return METRICS[self.metric](q[:, :1], q[:, 1:], self.coords[None, :, 0], self.coords[None, :, 1])

    def weights(self, queries) -> np.ndarray:
        """Normalized kernel weights (Q, A). Rows whose every raw weight
        underflows fall back to a one-hot on the nearest anchor."""
        d = self.distances(queries)
        logw = -(d**2) / (2 * self.sigma_km**2)
        top = logw.max(axis=1, keepdims=True)
        w = np.exp(logw - top)
        w /= w.sum(axis=1, keepdims=True)
        under = top[:, 0] < LOG_TINY
        if under.any():
            log.warning("%d of %d queries are beyond kernel reach; using the nearest anchor", int(under.sum()), len(d))
            w[under] = 0.0
            w[under, np.argmin(d[under], axis=1)] = 1.0
        return w


def interpolate(field: SparseFeatureField, query: GeoLocation) -> np.ndarray:
    return interpolate_many(field, [query])[0]


def interpolate_many(field: SparseFeatureField, queries, chunk: int = 1024) -> np.ndarray:
    q = _coords(queries)
    out = np.empty((len(q), field.dim))
    for i in range(0, len(q), chunk):
        out[i : i + chunk] = field.weights(q[i : i + chunk]) @ field.features
    return out


def interpolate_then_classify(field: SparseFeatureField, probe, queries) -> np.ndarray:
    if probe.dim != field.dim:
        raise DimensionError(f"probe expects {probe.dim}D features, field holds {field.dim}D")
    return probe.predict(interpolate_many(field, queries))


def sigma_sweep(
    field: SparseFeatureField,
    probe,
    queries,
    labels,
    sigmas: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0),
) -> list[tuple[float, float]]:
    """(sigma, accuracy) for each bandwidth, so the baseline can be given
    its best bandwidth rather than an arbitrary one."""
    y = np.array([getattr(l, "id", l) for l in labels], dtype=np.int64)
    rows = []
    for s in sigmas:
        pred = interpolate_then_classify(field.with_sigma(s), probe, queries)
        rows.append((float(s), float(np.mean(pred == y))))
    return rows


def sample_anchors(n: int, fraction: float, seed: int, minimum: Optional[int] = 2) -> np.ndarray:
    """Uniform random subset of ``round(fraction * n)`` indices, sorted."""
    from .seeding import rng

    k = max(int(round(fraction * n)), minimum or 1)
    k = min(k, n)
    return np.sort(rng(seed).choice(n, size=k, replace=False))
