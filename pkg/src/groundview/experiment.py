"""Desk-scale end-to-end experiment.

One call builds (or loads) a paired dataset, trains the cGAN, and
compares three ways of labelling locations that only have overhead
imagery:

* an SVM on the overhead embedding itself,
* an SVM on discriminator features of generated ground-level views,
* reference-CNN features of real ground images interpolated from
  other locations, then classified by the CNN head.

It also builds the four land-cover maps (truth, dense real images,
cGAN features, sparse-anchor interpolation) and the fake-vs-real image
ablation for the reference CNN.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .cgan.models import build_models
from .cgan.train import LossHistory, TrainConfig, discriminator_accuracy, generate, images_to_tensor, noise, train_tensors
from .config import ExperimentConfig, save_config
from .embeddings import Embedder, make_encoder
from .features import ZPolicy, featurize_overhead
from .geodata.types import GridGeometry
from .interp import SparseFeatureField, interpolate_many, sample_anchors, sigma_sweep
from .mapping import LandCoverMap, build_map, labels_by_cell, map_accuracy
from .probes import evaluate_probe, train_probe, train_reference_cnn
from .seeding import derive_seed, rng

log = logging.getLogger(__name__)


@dataclass
class DeskData:
    samples: list
    geometry: GridGeometry
    truth: np.ndarray
    classes: tuple


@dataclass
class DeskResult:
    config: ExperimentConfig
    table2: list = field(default_factory=list)
    table3: list = field(default_factory=list)
    table4: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    maps: dict = field(default_factory=dict)
    anchors: Optional[np.ndarray] = None
    history: Optional[LossHistory] = None
    d_accuracy: float = float("nan")
    timings: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)

    def accuracy(self, table: str, name: str) -> float:
        rows = getattr(self, table)
        return next(float(r["accuracy"]) for r in rows if r["name"] == name)


def load_desk_data(cfg: ExperimentConfig) -> DeskData:
    d = cfg.data
    if d.source == "synthetic":
        from .geodata.synthetic import generate_synthetic_world
        from .geodata.types import SyntheticWorldSpec

        spec = SyntheticWorldSpec(d.grid_h, d.grid_w, d.layout, d.images_per_cell, seed=derive_seed(cfg.seed, "world"))
        world = generate_synthetic_world(spec)
        return DeskData(world.samples, world.geometry, world.grid, world.classes)
    if d.source == "manifest":
        from .geodata.dataset import dataset_classes, load_dataset

        samples = load_dataset(d.manifest)
        return DeskData(samples, *_grid_from_samples(samples), dataset_classes(d.manifest))
    raise NotImplementedError("the desk experiment runs on synthetic or manifest data; fetch tiles into a manifest first")


def _grid_from_samples(samples) -> tuple[GridGeometry, np.ndarray]:
    """Recover grid geometry and per-cell truth from the cells in a dataset."""
    cells = {(s.cell.row, s.cell.col): s.cell for s in samples}
    rows = 1 + max(r for r, _ in cells)
    cols = 1 + max(c for _, c in cells)
    b = cells[min(cells)].bounds
    geometry = GridGeometry(b.min_lat - min(cells)[0] * (b.max_lat - b.min_lat), b.min_lon - min(cells)[1] * (b.max_lon - b.min_lon),
                            b.max_lat - b.min_lat, b.max_lon - b.min_lon, rows, cols)
    truth = np.full((rows, cols), -1, dtype=np.int64)
    for (r, c), cell in cells.items():
        truth[r, c] = cell.label.id
    if (truth < 0).any():
        raise ValueError("dataset does not cover every grid cell")
    return geometry, truth


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _labels(samples) -> np.ndarray:
    return np.array([s.cell.label.id for s in samples], dtype=np.int64)


def _cell_map(samples, labels, shape, provenance, data: DeskData) -> LandCoverMap:
    cells = [(s.cell.row, s.cell.col) for s in samples]
    return build_map(shape, labels_by_cell(cells, labels), provenance, data.geometry, data.classes)


def run_desk_experiment(cfg: ExperimentConfig, data: Optional[DeskData] = None) -> DeskResult:
    cfg.validate(check_paths=data is None)
    res = DeskResult(cfg)
    t_all = time.perf_counter()
    data = data if data is not None else load_desk_data(cfg)
    samples = data.samples
    y = _labels(samples)
    train_idx, test_idx = split_indices(len(samples), cfg.data.test_fraction, derive_seed(cfg.seed, "split"))
    locs = np.array([[s.overhead.center.lat, s.overhead.center.lon] for s in samples])
    ground_locs = np.array([[s.ground.location.lat, s.ground.location.lon] for s in samples])

    # embeddings
    encoder = make_encoder(cfg.embedding.encoder, derive_seed(cfg.seed, "encoder"), cfg.embedding.weights or None) \
        if cfg.embedding.kind == "cnn" else None
    embedder = Embedder(cfg.embedding.kind, encoder).fit([samples[i].overhead for i in train_idx])
    emb = embedder.values([s.overhead for s in samples])
    emb_t = torch.from_numpy(emb.astype(np.float32))
    images = images_to_tensor([s.ground.pixels for s in samples])

    # cGAN
    t = time.perf_counter()
    g, d = build_models(embedder.nef, cfg.model.width, derive_seed(cfg.seed, "init"), cfg.model.feature_dim)
    tc = TrainConfig(**{**cfg.train.__dict__, "seed": derive_seed(cfg.seed, "train")})
    g, d, res.history = train_tensors(g, d, images[train_idx], emb_t[train_idx], tc)
    res.timings["train_gan"] = time.perf_counter() - t
    res.d_accuracy = discriminator_accuracy(g, d, images[test_idx], emb_t[test_idx], derive_seed(cfg.seed, "d-accuracy"))
    res.models.update(generator=g, discriminator=d, embedder=embedder)

    # per-location probes
    t = time.perf_counter()
    hp = cfg.probe.svm_hp
    svm_seed = derive_seed(cfg.seed, "svm")
    emb_probe = train_probe(emb[train_idx], y[train_idx], "svm-rbf", hp, svm_seed)
    policy = ZPolicy(cfg.features.z_policy, cfg.features.z_k, derive_seed(cfg.seed, "z-policy"))
    feats = featurize_overhead(g, d, emb_t, policy)
    gan_probe = train_probe(feats[train_idx], y[train_idx], "svm-rbf", hp, svm_seed)
    cnn = train_reference_cnn(images[train_idx], y[train_idx], cfg.probe.cnn_hp, derive_seed(cfg.seed, "reference-cnn"))
    cnn_feats = cnn.image_features(images)
    field_train = SparseFeatureField(ground_locs[train_idx], cnn_feats[train_idx], cfg.interp.sigma_km, cfg.interp.metric)
    interp_test = interpolate_many(field_train, locs[test_idx])
    res.timings["probes"] = time.perf_counter() - t
    res.models.update(embedding_probe=emb_probe, cgan_probe=gan_probe, reference_cnn=cnn)

    nef = embedder.nef
    kind = cfg.embedding.kind
    res.table2 = [
        _row("svm-rbf", f"overhead {kind} embedding", "embedding-probe", nef, evaluate_probe(emb_probe, emb[test_idx], y[test_idx])),
        _row("svm-rbf", f"cGAN features ({kind})", "cgan-feature-probe", feats.shape[1],
             evaluate_probe(gan_probe, feats[test_idx], y[test_idx])),
        _row("reference-cnn", "ground-level images", "ground-image-cnn", cnn.dim, float(np.mean(cnn.predict_images(images[test_idx]) == y[test_idx]))),
        _row("reference-cnn", "interpolated CNN features", "interpolated-probe", cnn.dim, evaluate_probe(cnn, interp_test, y[test_idx])),
    ]
    res.sweep = [{"scope": "locations", "sigma_km": s, "accuracy": a}
                 for s, a in sigma_sweep(field_train, cnn, locs[test_idx], y[test_idx], cfg.interp.sweep)]

    # maps over every location
    t = time.perf_counter()
    shape = data.truth.shape
    res.maps["ground-truth"] = LandCoverMap(data.truth, data.geometry, data.classes, "ground-truth")
    res.maps["ground-images"] = _cell_map(samples, cnn.predict_images(images), shape, "ground-images", data)
    res.maps["cgan-features"] = _cell_map(samples, gan_probe.predict(feats), shape, "cgan-features", data)
    res.anchors = sample_anchors(len(samples), cfg.interp.anchor_fraction, derive_seed(cfg.seed, "anchors"))
    field_sparse = SparseFeatureField(ground_locs[res.anchors], cnn_feats[res.anchors], cfg.interp.sigma_km, cfg.interp.metric)
    res.maps["interpolated"] = _cell_map(samples, cnn.predict(interpolate_many(field_sparse, locs)), shape, "interpolated", data)
    truth = res.maps["ground-truth"]
    res.table3 = [{"method": name, "name": name, "map_accuracy": map_accuracy(m, truth), "accuracy": map_accuracy(m, truth)}
                  for name, m in res.maps.items() if name != "ground-truth"]
    for s in cfg.interp.sweep:
        labels = cnn.predict(interpolate_many(field_sparse.with_sigma(s), locs))
        res.sweep.append({"scope": "map", "sigma_km": s,
                          "accuracy": map_accuracy(_cell_map(samples, labels, shape, "interpolated", data), truth)})
    res.timings["maps"] = time.perf_counter() - t

    # fake-image ablation on the held-out locations
    z = noise(len(test_idx), g.noise_dim, torch.Generator().manual_seed(derive_seed(cfg.seed, "ablation")))
    fakes = generate(g, emb_t[test_idx], z)
    res.table4 = [
        {"classifier": "reference-cnn", "images": "real", "name": "real", "accuracy": float(np.mean(cnn.predict_images(images[test_idx]) == y[test_idx]))},
        {"classifier": "reference-cnn", "images": "generated", "name": "generated", "accuracy": float(np.mean(cnn.predict_images(fakes) == y[test_idx]))},
    ]
    res.models["fakes"] = fakes
    res.timings["total"] = time.perf_counter() - t_all
    log.info("desk experiment done in %.1f s", res.timings["total"])
    return res


def _row(classifier, feature_type, name, dim, acc) -> dict:
    return {"classifier": classifier, "feature_type": feature_type, "name": name, "dimension": int(dim), "accuracy": float(acc)}


# ---------------------------------------------------------------- reporting


def plot_losses(history: LossHistory, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(history.steps, history.d_losses, label="L_D", linewidth=0.8)
    ax.plot(history.steps, history.g_losses, label="L_G", linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def write_report(res: DeskResult, out_dir) -> Path:
    import csv

    from .cgan.checkpoint import save_checkpoint
    from .cgan.train import tensor_to_images
    from .mapping import render_map, write_map_csv
    from .probes import write_metrics_csv
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(res.config, out / "config.ini")
    write_metrics_csv(out / "table2.csv", res.table2)

    def dump(path, rows, cols):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(rows)

    dump(out / "table3.csv", res.table3, ["method", "map_accuracy"])
    dump(out / "table4.csv", res.table4, ["classifier", "images", "accuracy"])
    dump(out / "sigma_sweep.csv", res.sweep, ["scope", "sigma_km", "accuracy"])
    if res.history is not None:
        res.history.to_csv(out / "losses.csv")
        plot_losses(res.history, out / "losses.png")
    for name, m in res.maps.items():
        write_map_csv(out / f"map_{name}.csv", m)
        (out / f"map_{name}.png").write_bytes(render_map(m))
    if "generator" in res.models:
        save_checkpoint(res.models["generator"], out / "generator.ckpt")
        save_checkpoint(res.models["discriminator"], out / "discriminator.ckpt")
    if "fakes" in res.models:
        grid = tensor_to_images(res.models["fakes"][:16])
        Image.fromarray(np.concatenate(list(grid), axis=1)).save(out / "generated.png")
    return out
