"""Discriminator features: drop the sigmoid head, average-pool the last
hidden activation map into a ``feature_dim`` vector.

A bare overhead patch is featurized by generating a ground-level view
from it and feeding (view, embedding) to the headless discriminator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .cgan.models import Discriminator, Generator
from .cgan.train import images_to_tensor
from .embeddings import Embedding
from .errors import ConfigError, DimensionError
from .geodata.types import GeoLocation


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    location: Optional[GeoLocation] = None

    def __post_init__(self):
        if self.values.ndim != 1:
            raise DimensionError("feature vector must be 1D")
        if not np.isfinite(self.values).all():
            raise ValueError("feature vector has non-finite values")

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.location == other.location and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class ZPolicy:
    """How noise is chosen when featurizing overhead patches.

    ``fixed-zero`` uses z = 0; ``fixed-seed`` one standard-normal draw
    from ``seed``; ``average-of-k`` averages features over draws seeded
    ``seed, seed+1, ..., seed+k-1``. The same draws serve every location.
    """

    kind: str = "average-of-k"
    k: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("fixed-zero", "fixed-seed", "average-of-k"):
            raise ConfigError(f"unknown z policy {self.kind!r}")
        if self.k < 1:
            raise ConfigError("z policy needs k >= 1")

    def noises(self, noise_dim: int) -> list[torch.Tensor]:
        if self.kind == "fixed-zero":
            return [torch.zeros(noise_dim)]
        count = 1 if self.kind == "fixed-seed" else self.k
        return [torch.randn(noise_dim, generator=torch.Generator().manual_seed(self.seed + j)) for j in range(count)]


def pool(feature_map: torch.Tensor) -> torch.Tensor:
    """Spatial average pooling (B, C, H, W) -> (B, C)."""
    return feature_map.mean(dim=(2, 3))


def _as_image_tensor(img) -> torch.Tensor:
    if isinstance(img, torch.Tensor):
        t = img
    else:
        arr = np.asarray(img)
        if arr.dtype == np.uint8:
            return images_to_tensor([arr])
        t = torch.from_numpy(arr.astype(np.float32))
    return t[None] if t.dim() == 3 else t


def _as_embedding_tensor(e) -> torch.Tensor:
    vals = e.values if isinstance(e, Embedding) else e
    t = vals if isinstance(vals, torch.Tensor) else torch.from_numpy(np.asarray(vals, dtype=np.float32))
    return t.float()[None] if t.dim() == 1 else t.float()


@torch.no_grad()
def extract_feature(d: Discriminator, img, e, location: Optional[GeoLocation] = None) -> FeatureVector:
    d.eval()
    x, emb = _as_image_tensor(img), _as_embedding_tensor(e)
    if x.shape[0] != 1:
        raise DimensionError("extract_feature takes one image; use extract_features for batches")
    return FeatureVector(pool(d.feature_map(x, emb))[0].double().numpy(), location)


@torch.no_grad()
def extract_features(d: Discriminator, images: torch.Tensor, emb: torch.Tensor, batch_size: int = 256) -> np.ndarray:
    d.eval()
    out = [pool(d.feature_map(images[i : i + batch_size], emb[i : i + batch_size])) for i in range(0, images.shape[0], batch_size)]
    if not out:
        return np.zeros((0, d.feature_dim))
    return torch.cat(out).double().numpy()


@torch.no_grad()
def featurize_overhead(
    g: Generator,
    d: Discriminator,
    emb: torch.Tensor,
    policy: ZPolicy = ZPolicy(),
    batch_size: int = 256,
) -> np.ndarray:
    """Features for N embeddings via G -> fake view -> headless D."""
    if g.nef != d.nef or emb.shape[1] != g.nef:
        raise DimensionError(f"embedding size {emb.shape[1]} does not match models (G {g.nef}, D {d.nef})")
    g.eval()
    d.eval()
    total = None
    noises = policy.noises(g.noise_dim)
    for z in noises:
        parts = []
        for i in range(0, emb.shape[0], batch_size):
            e = emb[i : i + batch_size]
            fake = g(z.expand(e.shape[0], -1), e)
            parts.append(pool(d.feature_map(fake, e)).double())
        feats = torch.cat(parts) if parts else torch.zeros(0, d.feature_dim, dtype=torch.float64)
        total = feats if total is None else total + feats
    return (total / len(noises)).numpy()


def extract_feature_from_overhead(g: Generator, d: Discriminator, patch, embed_fn, z_policy: ZPolicy = ZPolicy()) -> FeatureVector:
    e = embed_fn(patch)
    emb = _as_embedding_tensor(e)
    values = featurize_overhead(g, d, emb, z_policy)[0]
    return FeatureVector(values, getattr(patch, "center", None))


# ---------------------------------------------------------------- export


def write_features_csv(path, features: np.ndarray, locations: Sequence[GeoLocation]) -> None:
    if len(features) != len(locations):
        raise DimensionError("one location per feature row is required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lat", "lon", *(f"f{i}" for i in range(features.shape[1] if len(features) else 0))])
        for loc, row in zip(locations, features):
            w.writerow([repr(loc.lat), repr(loc.lon), *(repr(float(v)) for v in row)])


def read_features_csv(path) -> tuple[np.ndarray, list[GeoLocation]]:
    locs, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for rec in reader:
            locs.append(GeoLocation(float(rec[0]), float(rec[1])))
            rows.append([float(v) for v in rec[2:]])
    dim = len(header) - 2
    return (np.array(rows, dtype=np.float64) if rows else np.zeros((0, dim))), locs


def write_features_bin(path, features: np.ndarray, locations: Sequence[GeoLocation]) -> None:
    n, dim = features.shape
    header = f"groundview-features v1\nrows {n}\ndim {dim}\nlayout float64-le lat lon values\nend\n"
    coords = np.array([[l.lat, l.lon] for l in locations], dtype="<f8").reshape(n, 2)
    body = np.ascontiguousarray(np.hstack([coords, features]), dtype="<f8").tobytes()
    Path(path).write_bytes(header.encode("ascii") + body)


def read_features_bin(path) -> tuple[np.ndarray, list[GeoLocation]]:
    raw = Path(path).read_bytes()
    end = raw.index(b"end\n") + 4
    meta = dict(line.split(" ", 1) for line in raw[:end].decode("ascii").splitlines()[1:-1])
    n, dim = int(meta["rows"]), int(meta["dim"])
    table = np.frombuffer(raw[end:], dtype="<f8").reshape(n, dim + 2).astype(np.float64)
    return table[:, 2:].copy(), [GeoLocation(float(a), float(b)) for a, b in table[:, :2]]
