import itertools

import numpy as np
import pytest
import torch
from sklearn.svm import SVC

from groundview.errors import DegenerateLabelsError, DimensionError, NotFittedError
from groundview.probes import (
    ProbeModel,
    ReferenceCNN,
    evaluate_probe,
    read_metrics_csv,
    train_probe,
    train_reference_cnn,
    write_metrics_csv,
)


def _clusters(np_rng, n=40):
    a = np_rng.normal(size=(n, 2)) * 0.3 + [-2.0, 0.0]
    b = np_rng.normal(size=(n, 2)) * 0.3 + [2.0, 0.0]
    return np.vstack([a, b]), np.repeat([0, 1], n)


def _linearly_separable(x, y):
    """Exhaustive direction scan: some unit direction gives a gap >= 1."""
    for t in np.linspace(0, np.pi, 361):
        w = np.array([np.cos(t), np.sin(t)])
        s = x @ w
        if s[y == 0].max() + 1 <= s[y == 1].min() or s[y == 1].max() + 1 <= s[y == 0].min():
            return True
    return False


def test_separable_clusters_fit_perfectly(np_rng):
    x, y = _clusters(np_rng)
    assert _linearly_separable(x, y)
    probe = train_probe(x, y)
    assert probe.train_accuracy == 1.0
    assert evaluate_probe(probe, x, y) == 1.0


def test_conflicting_duplicates_cannot_be_perfect(np_rng):
    x, y = _clusters(np_rng)
    x = np.vstack([x, x[:1]])
    y = np.append(y, 1 - y[0])
    assert train_probe(x, y).train_accuracy < 1.0


def test_deterministic_predictions(np_rng):
    x, y = _clusters(np_rng)
    q = np_rng.normal(size=(30, 2)) * 2
    assert np.array_equal(train_probe(x, y, seed=3).predict(q), train_probe(x, y, seed=3).predict(q))


def test_scale_gamma_matches_explicit_formula(np_rng):
    x = np_rng.normal(size=(60, 5)) * 3
    y = (x[:, 0] + 0.5 * np_rng.normal(size=60) > 0).astype(int)
    ours = train_probe(x, y)
    ref = SVC(kernel="rbf", C=1.0, gamma=1.0 / (x.shape[1] * x.var())).fit(x, y)
    q = np_rng.normal(size=(20, 5)) * 3
    assert np.allclose(ours.scores(q)[:, 1], ref.decision_function(q))


def test_accuracy_extremes(np_rng):
    x, y = _clusters(np_rng)
    probe = train_probe(x, y)
    assert evaluate_probe(probe, x, 1 - y) == 0.0


class _Flat:
    def decision_function(self, x):
        return np.zeros(len(x))


def test_ties_go_to_lowest_class():
    probe = ProbeModel("svm-rbf", {}, np.array([0, 1]), 2, _Flat())
    assert probe.predict(np.zeros((3, 2))).tolist() == [0, 0, 0]


def test_errors(np_rng):
    with pytest.raises(DegenerateLabelsError):
        train_probe(np.zeros((4, 2)), [1, 1, 1, 1])
    with pytest.raises(NotFittedError):
        ProbeModel("svm-rbf", {}, np.array([0, 1]), 2).predict(np.zeros((1, 2)))
    x, y = _clusters(np_rng)
    with pytest.raises(DimensionError):
        train_probe(x, y).predict(np.zeros((1, 3)))


def test_grid_search_option(np_rng):
    x, y = _clusters(np_rng)
    probe = train_probe(x, y, hp={"grid": True})
    assert isinstance(probe.hp["gamma"], float) and probe.train_accuracy == 1.0


def test_svm_save_load(np_rng, tmp_path):
    x, y = _clusters(np_rng)
    probe = train_probe(x, y)
    probe.save(tmp_path / "p.bin")
    back = ProbeModel.load(tmp_path / "p.bin")
    assert back.fingerprint == probe.fingerprint and back.dim == 2
    assert np.array_equal(back.predict(x), probe.predict(x))


# ---------------------------------------------------------------- reference CNN


@pytest.fixture(scope="module")
def tiny_images(small_world):
    samples = small_world.samples[:32]
    return [s.ground.pixels for s in samples], [s.cell.label.id for s in samples]


def test_reference_cnn_overfits_32_images(tiny_images, tmp_path):
    imgs, labels = tiny_images
    model = train_reference_cnn(imgs, labels, {"epochs": 15, "batch_size": 16}, seed=0)
    assert model.train_accuracy >= 0.95
    feats = model.image_features(imgs)
    assert feats.shape == (32, 512)
    model.save(tmp_path / "cnn.bin")
    back = ProbeModel.load(tmp_path / "cnn.bin")
    assert np.array_equal(back.predict_images(imgs), model.predict_images(imgs))


def test_reference_cnn_zero_lr_keeps_init(tiny_images):
    imgs, labels = tiny_images
    model = train_reference_cnn(imgs, labels, {"epochs": 1, "lr": 0.0, "batch_size": 16}, seed=5)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(5)
        fresh = ReferenceCNN(2)
    for a, b in zip(fresh.parameters(), model.state.parameters()):
        assert torch.equal(a, b)


def test_metrics_csv(tmp_path):
    rows = [{"classifier": "svm-rbf", "feature_type": "x", "name": "embedding-probe", "dimension": 100, "accuracy": 0.5}]
    write_metrics_csv(tmp_path / "m.csv", rows)
    back = read_metrics_csv(tmp_path / "m.csv")
    assert back[0]["name"] == "embedding-probe" and float(back[0]["accuracy"]) == 0.5
