import pytest
from hypothesis import given, strategies as st

from groundview.config import ExperimentConfig, parse, serialize
from groundview.errors import ConfigError


def test_default_round_trip():
    cfg = ExperimentConfig()
    assert parse(serialize(cfg)) == cfg


@given(
    st.integers(0, 2**31),
    st.sampled_from(["grayscale", "hsv", "cnn"]),
    st.floats(1e-6, 1.0),
    st.integers(0, 50),
    st.one_of(st.none(), st.integers(1, 1000)),
    st.lists(st.floats(0.01, 100.0), min_size=1, max_size=5),
    st.booleans(),
)
def test_round_trip_property(seed, kind, lr, epochs, max_steps, sweep, grid):
    cfg = ExperimentConfig(seed=seed)
    cfg.embedding.kind = kind
    cfg.train.learning_rate = lr
    cfg.train.epochs = epochs
    cfg.train.max_steps = max_steps
    cfg.interp.sweep = tuple(sweep)
    cfg.probe.svm_grid = grid
    assert parse(serialize(cfg)) == cfg


def test_validation(tmp_path):
    ExperimentConfig().validate()
    cfg = ExperimentConfig()
    cfg.data.manifest = "x.tsv"
    with pytest.raises(ConfigError, match="conflicts"):
        cfg.validate()
    cfg.data.source = "manifest"
    with pytest.raises(ConfigError, match="does not exist"):
        cfg.validate()
    (tmp_path / "m.tsv").write_text("")
    cfg.data.manifest = str(tmp_path / "m.tsv")
    cfg.validate()
    cfg = ExperimentConfig()
    cfg.interp.sigma_km = 0
    with pytest.raises(ConfigError):
        cfg.validate()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse("[train]\nlearning_rat = 0.1\n")
    with pytest.raises(ConfigError):
        parse("[bogus]\na = 1\n")
    with pytest.raises(ConfigError):
        parse("[train]\nepochs = many\n")
