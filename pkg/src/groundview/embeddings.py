"""Overhead-patch embeddings used as the cGAN conditioning vector.

Three encoders map a 10x10 RGB patch to a 1D vector in [-1, 1]:
grayscale (100D), HSV (300D) and a CNN descriptor reduced to 25D by PCA.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DependencyError, DimensionError, InsufficientSamplesError, NotFittedError
from .geodata.types import OverheadPatch

log = logging.getLogger(__name__)

PATCH_SIZE = 10
NEF = {"grayscale": 100, "hsv": 300, "cnn": 25}
DESCRIPTOR_DIM = 1024


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    kind: str
    nef: int

    def __post_init__(self):
        if self.values.shape != (self.nef,):
            raise DimensionError(f"{self.kind} embedding must have {self.nef} values, got {self.values.shape}")

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.values, other.values)


def _pixels(patch) -> np.ndarray:
    px = patch.pixels if isinstance(patch, OverheadPatch) else np.asarray(patch)
    if px.shape != (PATCH_SIZE, PATCH_SIZE, 3):
        raise DimensionError(f"embedding needs a {PATCH_SIZE}x{PATCH_SIZE}x3 patch, got {px.shape}")
    return px


def grayscale_values(pixels: np.ndarray) -> np.ndarray:
    """Vectorized core of ``embed_grayscale``; works on (..., 10, 10, 3)."""
    g = pixels.astype(np.float64).mean(axis=-1)
    return (2.0 * g / 255.0 - 1.0).reshape(*pixels.shape[:-3], -1)


def rgb_to_hsv(pixels: np.ndarray) -> np.ndarray:
    """RGB uint8 -> HSV with H in degrees [0, 360) and S, V in [0, 1].

    Achromatic pixels (max == min) get H = 0; black gets S = 0.
    """
    rgb = pixels.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    chromatic = delta > 0
    safe = np.where(chromatic, delta, 1.0)
    h = np.zeros_like(mx)
    h = np.where(mx == r, ((g - b) / safe) % 6.0, h)
    h = np.where((mx == g) & (mx != r), (b - r) / safe + 2.0, h)
    h = np.where((mx == b) & (mx != r) & (mx != g), (r - g) / safe + 4.0, h)
    h = np.where(chromatic, 60.0 * h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=-1)


def hsv_values(pixels: np.ndarray) -> np.ndarray:
    hsv = rgb_to_hsv(pixels)
    scaled = np.empty_like(hsv)
    scaled[..., 0] = 2.0 * hsv[..., 0] / 360.0 - 1.0
    scaled[..., 1:] = 2.0 * hsv[..., 1:] - 1.0
    return scaled.reshape(*pixels.shape[:-3], -1)


def embed_grayscale(patch) -> Embedding:
    return Embedding(grayscale_values(_pixels(patch)), "grayscale", NEF["grayscale"])


def embed_hsv(patch) -> Embedding:
    return Embedding(hsv_values(_pixels(patch)), "hsv", NEF["hsv"])


# ---------------------------------------------------------------- PCA


@dataclass(frozen=True, eq=False)
class PcaProjection:
    """Mean-centred principal axes plus the per-coordinate range of the
    projected training set, used to rescale projections to [-1, 1].

    Sign convention: in every component row the entry of largest
    magnitude is positive (first such entry on ties).
    """

    mean: np.ndarray
    components: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    fitted_on: str
    sign_convention: str = "largest-abs-positive"
    encoder_recipe: str = ""

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def project(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.mean.shape[0]:
            raise DimensionError(f"PCA expects {self.mean.shape[0]}D input, got {features.shape[-1]}D")
        # row by row so a vector projects identically alone or in a batch
        rows = np.atleast_2d(features)
        out = np.stack([self.components @ (row - self.mean) for row in rows]) if len(rows) else np.zeros((0, self.n_components))
        return out[0] if features.ndim == 1 else out

    def rescale(self, projected: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, 2.0 * (projected - self.lo) / safe - 1.0, 0.0)
        outside = (out < -1.0) | (out > 1.0)
        if outside.any():
            log.info("clamped %d of %d CNN-embedding values to [-1, 1]", int(outside.sum()), out.size)
        return np.clip(out, -1.0, 1.0)

    def save(self, path) -> None:
        d, k = self.mean.shape[0], self.n_components
        header = (
            "groundview-pca v1\n"
            f"dims {d} {k}\n"
            f"sign {self.sign_convention}\n"
            f"fitted_on {self.fitted_on}\n"
            f"encoder {self.encoder_recipe or '-'}\n"
            "layout float64-le mean components lo hi\n"
            "end\n"
        )
        body = b"".join(
            np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (self.mean, self.components, self.lo, self.hi)
        )
        Path(path).write_bytes(header.encode("ascii") + body)

    @classmethod
    def load(cls, path) -> "PcaProjection":
        raw = Path(path).read_bytes()
        end = raw.index(b"end\n") + 4
        meta = {}
        for line in raw[:end].decode("ascii").splitlines()[1:-1]:
            key, _, value = line.partition(" ")
            meta[key] = value
        d, k = (int(x) for x in meta["dims"].split())
        flat = np.frombuffer(raw[end:], dtype="<f8").astype(np.float64)
        if flat.size != d + k * d + 2 * k:
            raise ValueError(f"{path}: PCA payload has {flat.size} values, expected {d + k * d + 2 * k}")
        mean, rest = flat[:d], flat[d:]
        comps, rest = rest[: k * d].reshape(k, d), rest[k * d :]
        enc = meta.get("encoder", "-")
        return cls(mean, comps, rest[:k], rest[k:], meta["fitted_on"], meta["sign"], "" if enc == "-" else enc)


def fit_pca(features: np.ndarray, n_components: int = NEF["cnn"], encoder_recipe: str = "") -> PcaProjection:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("fit_pca expects an N x d matrix")
    if x.shape[0] < n_components:
        raise InsufficientSamplesError(f"PCA to {n_components}D needs at least {n_components} samples, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite values")
    mean = x.mean(axis=0)
    centered = x - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:n_components].copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(n_components), pivot])
    signs[signs == 0] = 1.0
    comps *= signs[:, None]
    fingerprint = hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()[:16]
    zero = np.zeros(n_components)
    pca = PcaProjection(mean, comps, zero, zero, fingerprint, encoder_recipe=encoder_recipe)
    proj = pca.project(x)
    return PcaProjection(mean, comps, proj.min(axis=0), proj.max(axis=0), fingerprint, encoder_recipe=encoder_recipe)


# ---------------------------------------------------------------- CNN encoders


class RandomConvEncoder:
    """Frozen, seeded convolutional encoder producing 1024D descriptors.

    Offline stand-in for an ImageNet-pretrained network: three 3x3 conv
    layers with He-normal weights, then global average and global max
    pooling of the final 512 channels, concatenated.
    """

    def __init__(self, seed: int = 0):
        import torch
        from torch import nn

        gen = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, 64, 3, padding=1), nn.ReLU(),
            nn.Conv2d(64, 128, 3, padding=1), nn.ReLU(),
            nn.Conv2d(128, 512, 3, padding=1), nn.ReLU(),
        ).double()
        with torch.no_grad():
            for m in self.net:
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * 9
                    m.weight.copy_(torch.randn(m.weight.shape, generator=gen, dtype=torch.float64) * (2.0 / fan_in) ** 0.5)
                    m.bias.zero_()
        self.net.eval()
        self.recipe = f"random-conv seed={seed} 3x3conv(64,128,512)+relu gap||gmp"

    def __call__(self, pixels: np.ndarray) -> np.ndarray:
        import torch

        px = np.asarray(pixels, dtype=np.float64)
        batch = px[None] if px.ndim == 3 else px
        x = torch.from_numpy(batch / 127.5 - 1.0).permute(0, 3, 1, 2)
        rows = []
        with torch.no_grad():
            # one image at a time: descriptors must not depend on batch makeup
            for i in range(x.shape[0]):
                fmap = self.net(x[i : i + 1])
                rows.append(torch.cat([fmap.mean(dim=(2, 3)), fmap.amax(dim=(2, 3))], dim=1).numpy()[0])
        out = np.stack(rows)
        return out[0] if px.ndim == 3 else out


class VGG16Encoder:
    """ImageNet VGG-16 descriptor: the patch is upsampled to 64x64, run
    through the convolutional trunk up to relu4_3, and the 512 channels
    are reduced by global average and global max pooling (1024D)."""

    TAP = 23  # index just past relu4_3 in torchvision's vgg16.features

    def __init__(self, weights_path: Optional[str] = None, pretrained: bool = True, seed: int = 0):
        try:
            import torch
            from torchvision.models import vgg
        except ImportError as exc:
            raise DependencyError(
                "VGG-16 encoder needs torchvision; use the grayscale or hsv embedding instead"
            ) from exc
        torch.manual_seed(seed)
        trunk = vgg.make_layers(vgg.cfgs["D"], batch_norm=False)
        if pretrained:
            try:
                if weights_path is not None:
                    state = torch.load(weights_path, map_location="cpu", weights_only=True)
                else:
                    state = vgg.VGG16_Weights.IMAGENET1K_V1.get_state_dict(progress=False)
                trunk.load_state_dict({k[len("features."):]: v for k, v in state.items() if k.startswith("features.")})
            except Exception as exc:
                raise DependencyError(
                    f"pretrained VGG-16 weights unavailable ({exc}); use the grayscale or hsv embedding instead"
                ) from exc
        self.trunk = trunk[: self.TAP].eval()
        self.recipe = f"vgg16 relu4_3 gap||gmp upsample64 pretrained={pretrained}"

    def __call__(self, pixels: np.ndarray) -> np.ndarray:
        import torch
        import torch.nn.functional as F

        px = np.asarray(pixels, dtype=np.float32)
        batch = px[None] if px.ndim == 3 else px
        x = torch.from_numpy(batch / 255.0).permute(0, 3, 1, 2)
        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        x = F.interpolate((x - mean) / std, size=(64, 64), mode="bilinear", align_corners=False)
        rows = []
        with torch.no_grad():
            for i in range(x.shape[0]):
                fmap = self.trunk(x[i : i + 1])
                rows.append(torch.cat([fmap.mean(dim=(2, 3)), fmap.amax(dim=(2, 3))], dim=1).double().numpy()[0])
        out = np.stack(rows)
        return out[0] if px.ndim == 3 else out


def make_encoder(name: str, seed: int = 0, weights_path: Optional[str] = None):
    if name == "random-conv":
        return RandomConvEncoder(seed)
    if name == "vgg16":
        return VGG16Encoder(weights_path=weights_path, seed=seed)
    raise ValueError(f"unknown encoder {name!r}")


def embed_cnn(patch, encoder: Callable[[np.ndarray], np.ndarray], pca: Optional[PcaProjection]) -> Embedding:
    if pca is None:
        raise NotFittedError("CNN embedding needs a fitted PcaProjection")
    if encoder is None:
        raise DependencyError("no CNN encoder available; use the grayscale or hsv embedding instead")
    desc = np.asarray(encoder(_pixels(patch)), dtype=np.float64)
    if desc.shape != pca.mean.shape:
        raise DimensionError(f"encoder produced {desc.shape} descriptor, PCA expects {pca.mean.shape}")
    return Embedding(pca.rescale(pca.project(desc)), "cnn", pca.n_components)


@dataclass
class Embedder:
    """Batch embedding of patches for one embedding kind.

    For ``cnn`` the encoder and PCA must be set; ``fit`` builds the PCA
    from training patches.
    """

    kind: str
    encoder: Optional[Callable] = None
    pca: Optional[PcaProjection] = None

    def __post_init__(self):
        if self.kind not in NEF:
            raise ValueError(f"unknown embedding kind {self.kind!r}; choose from {sorted(NEF)}")

    @property
    def nef(self) -> int:
        return NEF[self.kind]

    def fit(self, patches: Sequence) -> "Embedder":
        if self.kind == "cnn":
            if self.encoder is None:
                raise DependencyError("no CNN encoder configured; use the grayscale or hsv embedding instead")
            desc = self._describe(patches)
            self.pca = fit_pca(desc, NEF["cnn"], getattr(self.encoder, "recipe", ""))
        return self

    def _describe(self, patches: Sequence, chunk: int = 256) -> np.ndarray:
        stack = np.stack([_pixels(p) for p in patches])
        return np.concatenate([np.asarray(self.encoder(stack[i : i + chunk])) for i in range(0, len(stack), chunk)])

    def values(self, patches: Sequence) -> np.ndarray:
        """N x nef matrix of embedding values."""
        if len(patches) == 0:
            return np.zeros((0, self.nef))
        if self.kind == "grayscale":
            return grayscale_values(np.stack([_pixels(p) for p in patches]))
        if self.kind == "hsv":
            return hsv_values(np.stack([_pixels(p) for p in patches]))
        if self.pca is None:
            raise NotFittedError("CNN embedding needs a fitted PcaProjection")
        return self.pca.rescale(self.pca.project(self._describe(patches)))

    def __call__(self, patch) -> Embedding:
        if self.kind == "grayscale":
            return embed_grayscale(patch)
        if self.kind == "hsv":
            return embed_hsv(patch)
        return embed_cnn(patch, self.encoder, self.pca)
