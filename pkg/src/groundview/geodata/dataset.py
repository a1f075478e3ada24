"""On-disk paired-sample datasets.

A dataset is a directory holding ``manifest.tsv`` plus PNG files under
``ground/`` and ``overhead/``. The manifest is tab separated, one sample
per line, preceded by ``#`` comment lines that declare the class set::

    # groundview-manifest v1
    # class <id> <name>
    ground  overhead  lat  lon  patch_lat  patch_lon  ground_label  row  col  cell_label  min_lat  max_lat  min_lon  max_lon

Floats are written with ``repr`` so they round-trip exactly; an absent
ground label is written as ``-``.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from ..errors import DatasetFileError, ManifestParseError
from .types import (
    DEFAULT_CLASSES,
    Bounds,
    GeoLocation,
    GridCell,
    GroundImage,
    LandCoverClass,
    OverheadPatch,
    PairedSample,
    check_classes,
)

MANIFEST = "manifest.tsv"
MAGIC = "# groundview-manifest v1"
COLUMNS = (
    "ground", "overhead", "lat", "lon", "patch_lat", "patch_lon", "ground_label",
    "row", "col", "cell_label", "min_lat", "max_lat", "min_lon", "max_lon",
)


def _write_png(path: Path, pixels: np.ndarray) -> None:
    Image.fromarray(pixels, "RGB").save(path, format="PNG")


def _read_png(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetFileError(f"manifest references missing image file: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_dataset(samples: Sequence[PairedSample], path, classes: Optional[Iterable[LandCoverClass]] = None) -> Path:
    root = Path(path)
    (root / "ground").mkdir(parents=True, exist_ok=True)
    (root / "overhead").mkdir(parents=True, exist_ok=True)
    if classes is None:
        by_id = {c.id: c for c in DEFAULT_CLASSES}
        for s in samples:
            by_id[s.cell.label.id] = s.cell.label
            if s.ground.label is not None:
                by_id[s.ground.label.id] = s.ground.label
        classes = by_id.values()
    classes = check_classes(classes)

    lines = [MAGIC]
    lines += [f"# class {c.id} {c.name}" for c in classes]
    lines.append("\t".join(COLUMNS))
    for i, s in enumerate(samples):
        g_rel, o_rel = f"ground/{i:06d}.png", f"overhead/{i:06d}.png"
        _write_png(root / g_rel, s.ground.pixels)
        _write_png(root / o_rel, s.overhead.pixels)
        b = s.cell.bounds
        fields = [
            g_rel, o_rel,
            repr(s.ground.location.lat), repr(s.ground.location.lon),
            repr(s.overhead.center.lat), repr(s.overhead.center.lon),
            "-" if s.ground.label is None else str(s.ground.label.id),
            str(s.cell.row), str(s.cell.col), str(s.cell.label.id),
            repr(b.min_lat), repr(b.max_lat), repr(b.min_lon), repr(b.max_lon),
        ]
        lines.append("\t".join(fields))
    (root / MANIFEST).write_text("\n".join(lines) + "\n")
    return root


def load_dataset(path) -> list[PairedSample]:
    root = Path(path)
    manifest = root / MANIFEST if root.is_dir() else root
    root = manifest.parent
    if not manifest.exists():
        raise DatasetFileError(f"no manifest at {manifest}")
    classes: dict[int, LandCoverClass] = {}
    samples = []
    header_seen = False
    for lineno, raw in enumerate(manifest.read_text().splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["class"]:
                if len(parts) != 3:
                    raise ManifestParseError(manifest, lineno, "class line needs '<id> <name>'")
                try:
                    cid = int(parts[1])
                except ValueError:
                    raise ManifestParseError(manifest, lineno, f"bad class id {parts[1]!r}") from None
                classes[cid] = LandCoverClass(cid, parts[2])
            continue
        fields = line.split("\t")
        if not header_seen:
            if tuple(fields) != COLUMNS:
                raise ManifestParseError(manifest, lineno, "missing or malformed column header")
            header_seen = True
            continue
        if len(fields) != len(COLUMNS):
            raise ManifestParseError(manifest, lineno, f"expected {len(COLUMNS)} fields, found {len(fields)}")
        rec = dict(zip(COLUMNS, fields))
        try:
            lat, lon = float(rec["lat"]), float(rec["lon"])
            plat, plon = float(rec["patch_lat"]), float(rec["patch_lon"])
            row, col = int(rec["row"]), int(rec["col"])
            cell_label = classes[int(rec["cell_label"])]
            ground_label = None if rec["ground_label"] == "-" else classes[int(rec["ground_label"])]
            bounds = Bounds(*(float(rec[k]) for k in ("min_lat", "max_lat", "min_lon", "max_lon")))
            g_loc, p_loc = GeoLocation(lat, lon), GeoLocation(plat, plon)
        except KeyError as exc:
            raise ManifestParseError(manifest, lineno, f"undeclared class id {exc.args[0]}") from None
        except ValueError as exc:
            raise ManifestParseError(manifest, lineno, str(exc)) from None
        ground_px = _read_png(root / rec["ground"])
        patch_px = _read_png(root / rec["overhead"])
        try:
            sample = PairedSample(
                GroundImage(ground_px, g_loc, ground_label),
                OverheadPatch(patch_px, p_loc, patch_px.shape[0]),
                GridCell(row, col, cell_label, bounds),
            )
        except ValueError as exc:
            raise ManifestParseError(manifest, lineno, str(exc)) from None
        samples.append(sample)
    if not header_seen and samples:
        raise ManifestParseError(manifest, 1, "missing column header")
    return samples


def dataset_classes(path) -> tuple[LandCoverClass, ...]:
    root = Path(path)
    manifest = root / MANIFEST if root.is_dir() else root
    out = []
    for line in manifest.read_text().splitlines():
        parts = line[1:].split() if line.startswith("#") else []
        if parts[:1] == ["class"] and len(parts) == 3:
            out.append(LandCoverClass(int(parts[1]), parts[2]))
    return check_classes(out) if out else DEFAULT_CLASSES
