"""Overhead imagery access: an HTTP tile endpoint with an on-disk cache,
or an offline georeferenced PNG mosaic with an ESRI world file."""

from __future__ import annotations

import hashlib
import io
import logging
import math
import os
import tempfile
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image

from ..errors import CoverageError, DependencyError, RetryableFetchError
from .types import GeoLocation, OverheadPatch

log = logging.getLogger(__name__)

WORLD_FILE_SUFFIXES = (".pgw", ".pngw", ".wld")


@dataclass(frozen=True)
class WorldFile:
    """Six-parameter affine pixel-to-map transform (ESRI world file).

    ``c``/``f`` are the map coordinates (lon/lat) of the *center* of the
    upper-left pixel; ``a`` is the pixel width, ``e`` the (negative)
    pixel height. Rotation terms must be zero.
    """

    a: float
    d: float
    b: float
    e: float
    c: float
    f: float

    def __post_init__(self):
        if self.d != 0.0 or self.b != 0.0:
            raise ValueError("rotated world files are not supported")
        if self.a <= 0 or self.e >= 0:
            raise ValueError("world file must have positive x step and negative y step")

    @classmethod
    def read(cls, path) -> "WorldFile":
        values = [float(line) for line in Path(path).read_text().split()]
        if len(values) != 6:
            raise ValueError(f"{path}: world file needs 6 values, found {len(values)}")
        return cls(*values)

    def write(self, path) -> None:
        Path(path).write_text(
            "\n".join(repr(float(v)) for v in (self.a, self.d, self.b, self.e, self.c, self.f)) + "\n"
        )

    def pixel_of(self, loc: GeoLocation) -> tuple[int, int]:
        col = math.floor((loc.lon - (self.c - self.a / 2)) / self.a)
        row = math.floor((loc.lat - (self.f - self.e / 2)) / self.e)
        return row, col

    def center_of(self, row: int, col: int) -> GeoLocation:
        return GeoLocation(self.f + row * self.e, self.c + col * self.a)


def crop_centered(pixels: np.ndarray, row: int, col: int, size: int) -> Optional[np.ndarray]:
    """Return the ``size``x``size`` window whose pixel (size//2, size//2)
    is (row, col), or None when the window leaves the array."""
    r0, c0 = row - size // 2, col - size // 2
    if r0 < 0 or c0 < 0 or r0 + size > pixels.shape[0] or c0 + size > pixels.shape[1]:
        return None
    return pixels[r0 : r0 + size, c0 : c0 + size].copy()


@dataclass
class Mosaic:
    pixels: np.ndarray
    transform: WorldFile

    @classmethod
    def load(cls, png_path) -> "Mosaic":
        png_path = Path(png_path)
        for suffix in WORLD_FILE_SUFFIXES:
            wf = png_path.with_suffix(suffix)
            if wf.exists():
                break
        else:
            raise FileNotFoundError(f"no world file next to {png_path}")
        with Image.open(png_path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
        return cls(pixels, WorldFile.read(wf))

    def save(self, png_path) -> None:
        png_path = Path(png_path)
        Image.fromarray(self.pixels, "RGB").save(png_path, format="PNG")
        self.transform.write(png_path.with_suffix(".pgw"))

    def crop(self, loc: GeoLocation, size: int) -> np.ndarray:
        row, col = self.transform.pixel_of(loc)
        out = crop_centered(self.pixels, row, col, size)
        if out is None:
            raise CoverageError(f"{size}px patch at {loc} is not covered by the mosaic")
        return out


def _urllib_get(url: str, timeout: float) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code >= 500 or exc.code == 429:
            raise RetryableFetchError(f"HTTP {exc.code} from tile endpoint") from exc
        raise
    except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
        raise RetryableFetchError(f"tile request failed: {exc}") from exc


@dataclass
class TileClientConfig:
    url_template: Optional[str] = None
    api_key_env: str = "GROUNDVIEW_TILE_API_KEY"
    zoom: int = 19
    cache_dir: Optional[Path] = None
    mosaic_path: Optional[Path] = None
    timeout: float = 10.0


class TileClient:
    """Fetches overhead patches.

    ``url_template`` may use ``{lat}``, ``{lon}``, ``{zoom}``, ``{size}``
    and ``{key}``; the key is read from the environment variable named by
    ``api_key_env`` and never enters the cache key.
    """

    def __init__(self, config: TileClientConfig, http_get: Optional[Callable[[str], bytes]] = None):
        if config.url_template is None and config.mosaic_path is None:
            raise DependencyError("tile client needs either url_template or mosaic_path")
        self.config = config
        self._http_get = http_get or (lambda url: _urllib_get(url, config.timeout))
        self._mosaic: Optional[Mosaic] = None
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def mosaic(self) -> Mosaic:
        if self._mosaic is None:
            self._mosaic = Mosaic.load(self.config.mosaic_path)
        return self._mosaic

    def _url(self, loc: GeoLocation, size: int, key: str) -> str:
        return self.config.url_template.format(
            lat=loc.lat, lon=loc.lon, zoom=self.config.zoom, size=size, key=key
        )

    def cache_key(self, loc: GeoLocation, size: int) -> str:
        return hashlib.sha256(self._url(loc, size, "").encode("utf-8")).hexdigest()

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    def _fetch_bytes(self, loc: GeoLocation, size: int) -> bytes:
        key = self.cache_key(loc, size)
        cache_dir = self.config.cache_dir
        path = Path(cache_dir) / f"{key}.png" if cache_dir is not None else None
        if path is not None and path.exists():
            self.hits += 1
            return path.read_bytes()
        with self._lock_for(key):
            if path is not None and path.exists():
                self.hits += 1
                return path.read_bytes()
            self.misses += 1
            data = self._http_get(self._url(loc, size, os.environ.get(self.config.api_key_env, "")))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.replace(tmp, path)
            return data

    def fetch(self, loc: GeoLocation, patch_size: int = 10) -> OverheadPatch:
        if self.config.mosaic_path is not None:
            return OverheadPatch(self.mosaic.crop(loc, patch_size), loc, patch_size)
        data = self._fetch_bytes(loc, patch_size)
        with Image.open(io.BytesIO(data)) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
        h, w = pixels.shape[:2]
        if h < patch_size or w < patch_size:
            raise CoverageError(f"endpoint returned {w}x{h} image, smaller than {patch_size}px")
        crop = crop_centered(pixels, h // 2, w // 2, patch_size)
        return OverheadPatch(crop, loc, patch_size)


def fetch_overhead_patch(client_config: TileClientConfig, location: GeoLocation, patch_size: int = 10) -> OverheadPatch:
    return TileClient(client_config).fetch(location, patch_size)
