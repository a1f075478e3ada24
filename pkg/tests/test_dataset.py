import numpy as np
import pytest

from groundview.errors import DatasetFileError, ManifestParseError
from groundview.geodata import load_dataset, save_dataset
from groundview.geodata.dataset import dataset_classes


def test_round_trip_ten_samples(small_world, tmp_path):
    samples = small_world.samples[:10]
    save_dataset(samples, tmp_path)
    loaded = load_dataset(tmp_path)
    assert len(loaded) == 10
    for a, b in zip(samples, loaded):
        assert a.ground == b.ground and a.overhead == b.overhead and a.cell == b.cell
    assert [c.name for c in dataset_classes(tmp_path)] == ["urban", "rural"]


def test_empty_dataset(tmp_path):
    save_dataset([], tmp_path)
    assert load_dataset(tmp_path) == []


def test_missing_image_names_file(small_world, tmp_path):
    save_dataset(small_world.samples[:3], tmp_path)
    (tmp_path / "ground" / "000001.png").unlink()
    with pytest.raises(DatasetFileError, match="000001.png"):
        load_dataset(tmp_path)


def test_malformed_line_reports_line_number(small_world, tmp_path):
    save_dataset(small_world.samples[:3], tmp_path)
    manifest = tmp_path / "manifest.tsv"
    lines = manifest.read_text().splitlines()
    lines[-1] = lines[-1].replace("\t", " ", 1)
    manifest.write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestParseError) as err:
        load_dataset(tmp_path)
    assert err.value.lineno == len(lines)


def test_undeclared_class(small_world, tmp_path):
    save_dataset(small_world.samples[:1], tmp_path)
    manifest = tmp_path / "manifest.tsv"
    manifest.write_text(manifest.read_text().replace("# class 0 urban\n", ""))
    with pytest.raises(ManifestParseError, match="undeclared class"):
        load_dataset(tmp_path)
