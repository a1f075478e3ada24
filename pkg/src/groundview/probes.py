"""Representation probes: an RBF-kernel SVM over feature vectors and a
small residual CNN over 64x64 ground-level images.

Both predict by arg-max over per-class scores; ties go to the lowest
class id.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .cgan.train import images_to_tensor
from .errors import DegenerateLabelsError, DimensionError, NotFittedError

log = logging.getLogger(__name__)

SVM_DEFAULTS = {"C": 1.0, "gamma": "scale", "grid": False}
CNN_DEFAULTS = {"width": 16, "feature_dim": 512, "epochs": 8, "lr": 1e-3, "batch_size": 64}


def _label_ids(labels) -> np.ndarray:
    return np.array([getattr(l, "id", l) for l in labels], dtype=np.int64)


def _fingerprint(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise arg-max; np.argmax already returns the first maximum."""
    return np.argmax(scores, axis=1)


@dataclass
class ProbeModel:
    kind: str
    hp: dict
    classes: np.ndarray
    dim: int
    state: object = None
    train_accuracy: float = float("nan")
    fingerprint: str = ""

    @property
    def trained(self) -> bool:
        return self.state is not None

    def _check(self, features: np.ndarray) -> np.ndarray:
        if not self.trained:
            raise NotFittedError("probe has not been trained")
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"probe expects {self.dim}D features, got shape {x.shape}")
        return x

    def scores(self, features: np.ndarray) -> np.ndarray:
        """Per-class scores (N, K), columns ordered like ``classes``."""
        x = self._check(features)
        if self.kind == "svm-rbf":
            s = self.state.decision_function(x)
            return np.stack([-s, s], axis=1) if s.ndim == 1 else s
        with torch.no_grad():
            return self.state.head(torch.from_numpy(x.astype(np.float32))).double().numpy()

    def predict(self, features: np.ndarray) -> np.ndarray:
        if len(features) == 0:
            return np.zeros(0, dtype=np.int64)
        return self.classes[argmax_lowest(self.scores(features))]

    # reference-cnn only
    def image_features(self, images) -> np.ndarray:
        if self.kind != "reference-cnn":
            raise TypeError("image features are only defined for the reference CNN")
        return self.state.extract(_image_batch(images))

    def predict_images(self, images) -> np.ndarray:
        return self.predict(self.image_features(images))

    def save(self, path) -> None:
        header = (
            "groundview-probe v1\n"
            f"kind {self.kind}\n"
            f"hp {sorted(self.hp.items())!r}\n"
            f"classes {','.join(str(int(c)) for c in self.classes)}\n"
            f"dim {self.dim}\n"
            f"train_accuracy {self.train_accuracy!r}\n"
            f"fingerprint {self.fingerprint}\n"
            "end\n"
        )
        if self.kind == "svm-rbf":
            blob = pickle.dumps(self.state, protocol=4)
        else:
            buf = io.BytesIO()
            torch.save({"config": self.state.config, "state": self.state.state_dict()}, buf)
            blob = buf.getvalue()
        Path(path).write_bytes(header.encode("utf-8") + blob)

    @classmethod
    def load(cls, path) -> "ProbeModel":
        raw = Path(path).read_bytes()
        end = raw.index(b"\nend\n") + 5
        meta = dict(line.split(" ", 1) for line in raw[:end].decode("utf-8").splitlines()[1:-1])
        blob = raw[end:]
        kind = meta["kind"]
        if kind == "svm-rbf":
            state = pickle.loads(blob)
        else:
            saved = torch.load(io.BytesIO(blob), weights_only=False)
            state = ReferenceCNN(**saved["config"])
            state.load_state_dict(saved["state"])
            state.eval()
        import ast

        return cls(
            kind,
            dict(ast.literal_eval(meta["hp"])),
            np.array([int(c) for c in meta["classes"].split(",")], dtype=np.int64),
            int(meta["dim"]),
            state,
            float(meta["train_accuracy"]),
            meta["fingerprint"],
        )


def _check_labels(y: np.ndarray) -> np.ndarray:
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateLabelsError(f"probe training needs at least 2 classes, got {classes.tolist()}")
    return classes


def train_probe(features, labels, kind: str = "svm-rbf", hp: Optional[dict] = None, seed: int = 0) -> ProbeModel:
    if kind == "reference-cnn":
        raise TypeError("use train_reference_cnn for the image classifier")
    if kind != "svm-rbf":
        raise ValueError(f"unknown probe kind {kind!r}")
    from sklearn.svm import SVC

    x = np.asarray(features, dtype=np.float64)
    y = _label_ids(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise DimensionError("features must be N x d with one label per row")
    if not np.isfinite(x).all():
        raise ValueError("features contain non-finite values")
    classes = _check_labels(y)
    params = {**SVM_DEFAULTS, **(hp or {})}
    if params["grid"]:
        from sklearn.model_selection import GridSearchCV, StratifiedKFold

        base = 1.0 / (x.shape[1] * x.var()) if x.var() > 0 else 1.0
        search = GridSearchCV(
            SVC(kernel="rbf", random_state=seed),
            {"C": [0.1, 1.0, 10.0], "gamma": [base / 10, base, base * 10]},
            cv=StratifiedKFold(3),
        )
        search.fit(x, y)
        params = {**params, "C": float(search.best_params_["C"]), "gamma": float(search.best_params_["gamma"])}
        log.info("SVM grid search picked C=%s gamma=%s", params["C"], params["gamma"])
    svm = SVC(kernel="rbf", C=params["C"], gamma=params["gamma"], random_state=seed)
    svm.fit(x, y)
    model = ProbeModel("svm-rbf", params, classes, x.shape[1], svm, fingerprint=_fingerprint(x, y))
    model.train_accuracy = evaluate_probe(model, x, y)
    return model


def evaluate_probe(model: ProbeModel, features, labels) -> float:
    y = _label_ids(labels)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    pred = model.predict(features)
    return float(np.count_nonzero(pred == y)) / len(y)


# ---------------------------------------------------------------- reference CNN


class BasicBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = nn.Sequential()
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ReferenceCNN(nn.Module):
    """Four-block residual classifier split into a feature extractor
    (global-average-pooled ``feature_dim`` vector) and a linear head."""

    def __init__(self, n_classes: int, width: int = 16, feature_dim: int = 512):
        super().__init__()
        self.config = {"n_classes": n_classes, "width": width, "feature_dim": feature_dim}
        w = width
        self.stem = nn.Sequential(nn.Conv2d(3, w, 3, 2, 1, bias=False), nn.BatchNorm2d(w), nn.ReLU())
        self.blocks = nn.Sequential(
            BasicBlock(w, w, 1), BasicBlock(w, 2 * w, 2), BasicBlock(2 * w, 4 * w, 2), BasicBlock(4 * w, 8 * w, 2)
        )
        self.expand = nn.Sequential(nn.Conv2d(8 * w, feature_dim, 1, bias=False), nn.BatchNorm2d(feature_dim), nn.ReLU())
        self.head = nn.Linear(feature_dim, n_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.expand(self.blocks(self.stem(x))).mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))

    @torch.no_grad()
    def extract(self, x: torch.Tensor, batch_size: int = 256) -> np.ndarray:
        self.eval()
        parts = [self.features(x[i : i + batch_size]) for i in range(0, x.shape[0], batch_size)]
        return torch.cat(parts).double().numpy() if parts else np.zeros((0, self.config["feature_dim"]))


def _image_batch(images) -> torch.Tensor:
    if isinstance(images, torch.Tensor):
        return images
    arrs = [getattr(im, "pixels", im) for im in images]
    return images_to_tensor(arrs)


@torch.no_grad()
def recalibrate_batchnorm(net: nn.Module, x: torch.Tensor, batch_size: int = 256) -> None:
    """Replace running BN statistics by exact averages over ``x``; short
    runs otherwise leave eval-mode statistics far from the data."""
    bns = [m for m in net.modules() if isinstance(m, nn.BatchNorm2d)]
    saved = [m.momentum for m in bns]
    for m in bns:
        m.reset_running_stats()
        m.momentum = None  # cumulative average
    net.train()
    for i in range(0, x.shape[0], batch_size):
        net.features(x[i : i + batch_size])
    for m, mom in zip(bns, saved):
        m.momentum = mom
    net.eval()


def train_reference_cnn(images, labels, hp: Optional[dict] = None, seed: int = 0) -> ProbeModel:
    params = {**CNN_DEFAULTS, **(hp or {})}
    x = _image_batch(images)
    if x.dim() != 4 or tuple(x.shape[1:]) != (3, 64, 64):
        raise DimensionError(f"reference CNN expects 64x64 RGB images, got {tuple(x.shape)}")
    y = _label_ids(labels)
    classes = _check_labels(y)
    index = {int(c): i for i, c in enumerate(classes)}
    target = torch.tensor([index[int(v)] for v in y], dtype=torch.int64)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = ReferenceCNN(len(classes), params["width"], params["feature_dim"])
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(net.parameters(), lr=params["lr"])
    n, bs = x.shape[0], min(params["batch_size"], x.shape[0])
    for epoch in range(params["epochs"]):
        net.train()
        order = torch.randperm(n, generator=gen)
        for i in range(0, n - bs + 1, bs):
            idx = order[i : i + bs]
            loss = F.cross_entropy(net(x[idx]), target[idx])
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
        log.debug("reference CNN epoch %d loss %.4f", epoch, loss.item())
    recalibrate_batchnorm(net, x)
    model = ProbeModel("reference-cnn", params, classes, params["feature_dim"], net, fingerprint=_fingerprint(x.numpy(), y))
    model.train_accuracy = evaluate_probe(model, model.image_features(x), y)
    return model


# ---------------------------------------------------------------- metrics


METRIC_COLUMNS = ("classifier", "feature_type", "name", "dimension", "accuracy")


def write_metrics_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
