"""Experiment configuration as flat ``key = value`` text with one section
per stage. ``parse(serialize(c)) == c`` for every valid config."""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cgan.train import TrainConfig
from .errors import ConfigError

SOURCES = ("synthetic", "manifest", "tiles")


@dataclass
class DataConfig:
    source: str = "synthetic"
    grid_h: int = 16
    grid_w: int = 16
    layout: str = "checkerboard"
    images_per_cell: int = 10
    manifest: str = ""
    tile_url: str = ""
    tile_mosaic: str = ""
    test_fraction: float = 0.2


@dataclass
class EmbeddingConfig:
    kind: str = "grayscale"
    encoder: str = "random-conv"
    weights: str = ""


@dataclass
class ModelConfig:
    width: float = 0.125
    feature_dim: int = 1024


@dataclass
class ProbeConfig:
    svm_c: float = 1.0
    svm_gamma: str = "scale"
    svm_grid: bool = False
    cnn_width: int = 16
    cnn_epochs: int = 8
    cnn_lr: float = 1e-3
    cnn_batch_size: int = 64

    @property
    def svm_hp(self) -> dict:
        gamma = self.svm_gamma if self.svm_gamma in ("scale", "auto") else float(self.svm_gamma)
        return {"C": self.svm_c, "gamma": gamma, "grid": self.svm_grid}

    @property
    def cnn_hp(self) -> dict:
        return {"width": self.cnn_width, "epochs": self.cnn_epochs, "lr": self.cnn_lr, "batch_size": self.cnn_batch_size}


@dataclass
class FeatureConfig:
    z_policy: str = "average-of-k"
    z_k: int = 4


@dataclass
class InterpConfig:
    sigma_km: float = 2.0
    sweep: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    metric: str = "haversine"
    anchor_fraction: float = 0.017


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/desk"
    data: DataConfig = field(default_factory=DataConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    interp: InterpConfig = field(default_factory=InterpConfig)

    def validate(self, check_paths: bool = True) -> "ExperimentConfig":
        d = self.data
        if d.source not in SOURCES:
            raise ConfigError(f"data.source must be one of {SOURCES}, got {d.source!r}")
        given = [name for name, val in (("manifest", d.manifest), ("tile_url", d.tile_url)) if val]
        if d.source == "synthetic" and given:
            raise ConfigError(f"synthetic source conflicts with data.{given[0]}")
        if d.source == "manifest" and (not d.manifest or d.tile_url):
            raise ConfigError("manifest source needs data.manifest and nothing else")
        if d.source == "tiles" and (not d.tile_url or d.manifest):
            raise ConfigError("tiles source needs data.tile_url and nothing else")
        if check_paths and d.source == "manifest" and not Path(d.manifest).exists():
            raise ConfigError(f"manifest {d.manifest} does not exist")
        if check_paths and self.embedding.weights and not Path(self.embedding.weights).exists():
            raise ConfigError(f"encoder weights {self.embedding.weights} do not exist")
        if not 0 < d.test_fraction < 1:
            raise ConfigError("data.test_fraction must be in (0, 1)")
        if self.embedding.kind not in ("grayscale", "hsv", "cnn"):
            raise ConfigError(f"unknown embedding kind {self.embedding.kind!r}")
        if not self.model.width > 0:
            raise ConfigError("model.width must be > 0")
        if not self.interp.sigma_km > 0 or any(s <= 0 for s in self.interp.sweep):
            raise ConfigError("interpolation bandwidths must be > 0")
        if not 0 < self.interp.anchor_fraction <= 1:
            raise ConfigError("interp.anchor_fraction must be in (0, 1]")
        self.train.validate()
        return self


_SECTIONS = ("data", "embedding", "model", "train", "probe", "features", "interp")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def _coerce(text: str, default, name: str):
    text = text.strip()
    kind = type(default)
    try:
        if text == "none":
            return None
        if isinstance(default, bool):
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        if isinstance(default, tuple):
            return tuple(float(t) for t in text.split(",") if t.strip())
        if default is None or isinstance(default, int):
            return int(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def serialize(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["run"] = {"seed": str(cfg.seed), "output_dir": cfg.output_dir}
    for name in _SECTIONS:
        section = getattr(cfg, name)
        cp[name] = {f.name: _format(getattr(section, f.name)) for f in dataclasses.fields(section)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    cfg = ExperimentConfig()
    if cp.has_section("run"):
        for key, val in cp["run"].items():
            if key == "seed":
                cfg.seed = _coerce(val, 0, "run.seed")
            elif key == "output_dir":
                cfg.output_dir = val
            else:
                raise ConfigError(f"unknown key run.{key}")
    for name in cp.sections():
        if name == "run":
            continue
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        section = getattr(cfg, name)
        defaults = {f.name: getattr(section, f.name) for f in dataclasses.fields(section)}
        for key, val in cp[name].items():
            if key not in defaults:
                raise ConfigError(f"unknown key {name}.{key}")
            setattr(section, key, _coerce(val, defaults[key], f"{name}.{key}"))
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse(Path(path).read_text())


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(serialize(cfg))
