"""Deterministic desk-scale world: a labeled cell grid, an overhead mosaic
and co-located ground-level views.

Urban cells render as gray, blocky, high-frequency textures from both
viewpoints; rural cells as smooth green ones. A smooth vegetation field
spans the whole mosaic, so a small fraction of urban patches look leafy
and vice versa. Ground views always show their cell's class.

All randomness comes from PCG64 streams keyed by (seed, purpose, row,
col[, k]), so the output is a pure function of the world spec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..seeding import rng
from .preprocess import resize_ground_image
from .tiles import Mosaic, WorldFile, crop_centered
from .types import (
    GeoLocation,
    GridCell,
    GridGeometry,
    GroundImage,
    OverheadPatch,
    PairedSample,
    SyntheticWorldSpec,
)

URBAN_VEG = 0.28
RURAL_VEG = 0.74
VEG_NOISE = 0.18
VEG_NOISE_STEP = 8  # pixels between coarse noise knots
RAW_GROUND = 80


@dataclass
class SyntheticWorld:
    spec: SyntheticWorldSpec
    geometry: GridGeometry
    grid: np.ndarray
    classes: tuple
    cells: list
    samples: list
    mosaic: Mosaic
    vegetation: np.ndarray

    def __iter__(self):
        # (cells, samples) unpacking
        yield self.cells
        yield self.samples


def _layout(spec: SyntheticWorldSpec) -> np.ndarray:
    r, c = np.indices((spec.grid_h, spec.grid_w))
    if spec.layout == "checkerboard":
        return ((r + c) % 2).astype(np.int64)
    if spec.layout == "halves":
        return (c >= spec.grid_w // 2).astype(np.int64)
    return rng(spec.seed, 9).integers(0, 2, size=(spec.grid_h, spec.grid_w)).astype(np.int64)


def _smooth_noise(gen: np.random.Generator, h: int, w: int, step: int) -> np.ndarray:
    kh, kw = h // step + 2, w // step + 2
    knots = gen.standard_normal((kh, kw)).astype(np.float32)
    im = Image.fromarray(knots, "F").resize((kw * step, kh * step), Image.Resampling.BILINEAR)
    up = np.asarray(im, dtype=np.float64)
    return up[step // 2 : step // 2 + h, step // 2 : step // 2 + w]


def _render_mosaic(spec: SyntheticWorldSpec, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    px = spec.cell_px
    H, W = spec.grid_h * px, spec.grid_w * px
    gen = rng(spec.seed, 0)
    # mosaic row 0 is north, grid row 0 is south
    cls = np.repeat(np.repeat(grid[::-1], px, axis=0), px, axis=1)
    urban = cls == 0
    base = np.where(urban, URBAN_VEG, RURAL_VEG)
    veg_field = np.clip(base + VEG_NOISE * _smooth_noise(gen, H, W, VEG_NOISE_STEP), 0.0, 1.0)

    # urban decisions are made per 2x2 block to look blocky
    block_u = gen.random((H // 2 + 1, W // 2 + 1))
    u_blocky = np.repeat(np.repeat(block_u, 2, 0), 2, 1)[:H, :W]
    u_fine = gen.random((H, W))
    is_veg = np.where(urban, u_blocky, u_fine) < veg_field

    out = np.zeros((H, W, 3), dtype=np.float64)
    green = np.array([70.0, 135.0, 55.0])
    shade = 18.0 * _smooth_noise(gen, H, W, 4)
    out[:] = green + shade[..., None] * np.array([0.6, 1.0, 0.5])

    roofs = gen.integers(85, 205, size=(H // 3 + 1, W // 3 + 1)).astype(np.float64)
    roof = np.repeat(np.repeat(roofs, 3, 0), 3, 1)[:H, :W]
    gray = np.stack([roof, roof, roof + 6.0], axis=-1)
    soil = np.array([145.0, 145.0, 151.0]) + 10.0 * _smooth_noise(gen, H, W, 8)[..., None]
    nonveg = np.where(urban[..., None], gray, soil)
    out = np.where(is_veg[..., None], out, nonveg)
    out += gen.normal(0.0, 4.0, size=out.shape)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8), veg_field


def _sky(gen, h, w):
    top = np.array([105.0, 160.0, 225.0]) + gen.normal(0, 8, 3)
    bottom = np.array([190.0, 212.0, 238.0]) + gen.normal(0, 6, 3)
    t = np.linspace(0.0, 1.0, max(h, 1))[:, None, None]
    return np.broadcast_to(top * (1 - t) + bottom * t, (h, w, 3)).copy()


def _blobs(img, gen, n, y_lo, y_hi, color, r_lo, r_hi):
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(n):
        cy, cx = gen.uniform(y_lo, y_hi), gen.uniform(0, w)
        r = gen.uniform(r_lo, r_hi)
        mask = (yy - cy) ** 2 + ((xx - cx) * 0.9) ** 2 < r * r
        img[mask] = color + gen.normal(0, 6, 3)


def _render_rural(gen: np.random.Generator, veg: float) -> np.ndarray:
    S = RAW_GROUND
    horizon = int(gen.uniform(0.30, 0.45) * S)
    img = np.zeros((S, S, 3))
    img[:horizon] = _sky(gen, horizon, S)
    field = np.array([85.0, 150.0, 60.0]) + gen.normal(0, 10, 3)
    t = np.linspace(0, 1, S - horizon)[:, None, None]
    img[horizon:] = field * (0.85 + 0.3 * t)
    if gen.random() < 0.4:
        # a dirt track
        x0, x1 = gen.uniform(0.3, 0.7) * S, gen.uniform(0.1, 0.9) * S
        for i, y in enumerate(range(horizon, S)):
            f = i / max(S - horizon - 1, 1)
            xc = x0 + (x1 - x0) * f
            half = 1 + 6 * f
            img[y, max(int(xc - half), 0) : int(xc + half) + 1] = (150, 125, 90)
    _blobs(img, gen, int(2 + 5 * veg), horizon - 6, horizon + 4, np.array([40.0, 90.0, 35.0]), 3, 8)
    img += gen.normal(0, 3, img.shape)
    return img


def _render_urban(gen: np.random.Generator, veg: float) -> np.ndarray:
    S = RAW_GROUND
    sky_h = int(gen.uniform(0.08, 0.25) * S)
    road_top = int(gen.uniform(0.78, 0.88) * S)
    img = np.zeros((S, S, 3))
    img[:] = _sky(gen, S, S)
    x = 0
    while x < S:
        bw = int(gen.integers(8, 22))
        top = int(gen.uniform(sky_h * 0.4, sky_h * 1.8))
        g = gen.uniform(70, 190)
        facade = np.array([g, g * gen.uniform(0.92, 1.05), g * gen.uniform(0.9, 1.1)])
        img[top:road_top, x : x + bw] = facade
        win = facade * 0.35
        for wy in range(top + 2, road_top - 3, 4):
            for wx in range(x + 2, min(x + bw - 1, S), 4):
                img[wy : wy + 2, wx : wx + 2] = win
        x += bw
    img[road_top:] = np.array([60.0, 60.0, 64.0])
    lane = (road_top + S) // 2
    for dx in range(0, S, 10):
        img[lane : lane + 1, dx : dx + 5] = (220, 220, 210)
    _blobs(img, gen, int(round(3 * veg)), road_top - 12, road_top - 2, np.array([45.0, 100.0, 40.0]), 3, 6)
    img += gen.normal(0, 5, img.shape)
    return img


def render_ground(class_id: int, veg: float, gen: np.random.Generator) -> np.ndarray:
    raw = _render_urban(gen, veg) if class_id == 0 else _render_rural(gen, veg)
    raw = np.clip(np.rint(raw), 0, 255).astype(np.uint8)
    return resize_ground_image(raw)


def generate_synthetic_world(spec: SyntheticWorldSpec) -> SyntheticWorld:
    geometry = spec.geometry
    grid = _layout(spec)
    classes = {c.id: c for c in spec.classes}
    pixels, veg_field = _render_mosaic(spec, grid)
    px = spec.cell_px
    a = spec.cell_lon / px
    e = -spec.cell_lat / px
    transform = WorldFile(a, 0.0, 0.0, e, geometry.min_lon + a / 2, geometry.max_lat + e / 2)
    mosaic = Mosaic(pixels, transform)

    half = spec.patch_size // 2
    lo, hi = half, px - (spec.patch_size - half)  # inclusive offsets keeping the patch in-cell
    cells = []
    samples = []
    for r in range(spec.grid_h):
        row_cells = []
        for c in range(spec.grid_w):
            label = classes[int(grid[r, c])]
            cell = GridCell(r, c, label, geometry.bounds(r, c))
            row_cells.append(cell)
            gen = rng(spec.seed, 1, r, c)
            y0 = (spec.grid_h - 1 - r) * px
            x0 = c * px
            offs = gen.integers(lo, hi + 1, size=(spec.images_per_cell, 2))
            for k, (dy, dx) in enumerate(offs):
                y, x = y0 + int(dy), x0 + int(dx)
                loc = transform.center_of(y, x)
                patch = crop_centered(pixels, y, x, spec.patch_size)
                local_veg = float(veg_field[y - half : y - half + spec.patch_size, x - half : x - half + spec.patch_size].mean())
                ground = render_ground(label.id, local_veg, rng(spec.seed, 2, r, c, k))
                samples.append(
                    PairedSample(
                        GroundImage(ground, loc, label),
                        OverheadPatch(patch, loc, spec.patch_size),
                        cell,
                    )
                )
        cells.append(row_cells)
    return SyntheticWorld(spec, geometry, grid, tuple(spec.classes), cells, samples, mosaic, veg_field)
