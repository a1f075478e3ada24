"""groundview command line.

    groundview synth   --grid 16x16 --seed 0 --out data/
    groundview train   --data data/ --out run/ [--epochs 5 --lr 2e-4 ...]
    groundview generate --run run/ --data data/ --out fakes/
    groundview extract --run run/ --data data/ --out features.csv
    groundview probe   --features features.csv --data data/ --out probe/
    groundview interp  --anchors features.csv --probe probe/probe.bin --data data/ --out interp/
    groundview map     --labels probe/labels.csv --data data/ --provenance cgan-features --out map/
    groundview report  [--config desk.ini] --out report/

Exit status: 0 on success, 2 on a usage error, 1 when the run fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GroundviewError

log = logging.getLogger("groundview")


def _grid(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 16x16, got {text!r}") from None
    return h, w


def _write_args(out: Path, args: argparse.Namespace) -> None:
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    cp["args"] = {k: str(v) for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    with open(out / "args.ini", "w") as fh:
        cp.write(fh)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_args(out, args)
    return out


def _truth_map(samples, classes):
    from .experiment import _grid_from_samples
    from .mapping import LandCoverMap

    geometry, grid = _grid_from_samples(samples)
    return LandCoverMap(grid, geometry, tuple(classes), "ground-truth")


def _load(data):
    from .geodata.dataset import dataset_classes, load_dataset

    return load_dataset(data), dataset_classes(data)


def _embedder(run: Path):
    from .cgan.checkpoint import read_header
    from .embeddings import Embedder, PcaProjection, make_encoder

    meta, _, _ = read_header(run / "generator.ckpt")
    kind = meta.get("embedding", "grayscale")
    if kind != "cnn":
        return Embedder(kind)
    return Embedder(kind, make_encoder(meta["encoder"], int(meta["encoder_seed"])), PcaProjection.load(run / "embedding.pca"))


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> None:
    from .geodata.dataset import save_dataset
    from .geodata.synthetic import generate_synthetic_world
    from .geodata.types import SyntheticWorldSpec
    from .mapping import LandCoverMap, render_map, write_map_csv

    h, w = args.grid
    spec = SyntheticWorldSpec(h, w, args.layout, args.images_per_cell, seed=args.seed)
    world = generate_synthetic_world(spec)
    out = _out_dir(args)
    save_dataset(world.samples, out, world.classes)
    world.mosaic.save(out / "mosaic.png")
    truth = LandCoverMap(world.grid, world.geometry, world.classes, "ground-truth")
    write_map_csv(out / "map_ground-truth.csv", truth)
    (out / "map_ground-truth.png").write_bytes(render_map(truth))
    log.info("wrote %d samples on a %dx%d %s grid to %s", len(world.samples), h, w, args.layout, out)


def cmd_train(args) -> None:
    import torch

    from .cgan.checkpoint import save_checkpoint
    from .cgan.models import build_models
    from .cgan.train import TrainConfig, images_to_tensor, train_tensors
    from .embeddings import Embedder, make_encoder
    from .seeding import derive_seed

    samples, _ = _load(args.data)
    enc_seed = derive_seed(args.seed, "encoder")
    encoder = make_encoder(args.encoder, enc_seed) if args.embedding == "cnn" else None
    embedder = Embedder(args.embedding, encoder).fit([s.overhead for s in samples])
    emb = torch.from_numpy(embedder.values([s.overhead for s in samples]).astype(np.float32))
    images = images_to_tensor([s.ground.pixels for s in samples])
    cfg = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
        seed=derive_seed(args.seed, "train"), saturating_g=args.saturating_g,
        d_update=args.d_update, max_steps=args.max_steps,
    )
    cfg.validate()
    if len(samples) < cfg.batch_size:
        raise GroundviewError(f"dataset has {len(samples)} samples, fewer than batch size {cfg.batch_size}")
    g, d = build_models(embedder.nef, args.width, derive_seed(args.seed, "init"))
    g, d, history = train_tensors(g, d, images, emb, cfg)
    out = _out_dir(args)
    meta = {"embedding": args.embedding, "encoder": args.encoder, "encoder_seed": enc_seed, "steps": len(history)}
    save_checkpoint(g, out / "generator.ckpt", **meta)
    save_checkpoint(d, out / "discriminator.ckpt", **meta)
    if embedder.pca is not None:
        embedder.pca.save(out / "embedding.pca")
    history.to_csv(out / "losses.csv")
    if len(history):
        from .experiment import plot_losses

        plot_losses(history, out / "losses.png")
    log.info("trained %d steps; checkpoints in %s", len(history), out)


def cmd_generate(args) -> None:
    import torch
    from PIL import Image

    from .cgan.checkpoint import load_checkpoint
    from .cgan.train import generate, noise, tensor_to_images

    run = Path(args.run)
    g, _ = load_checkpoint(run / "generator.ckpt")
    samples, _ = _load(args.data)
    samples = samples[: args.limit] if args.limit else samples
    emb = torch.from_numpy(_embedder(run).values([s.overhead for s in samples]).astype(np.float32))
    fakes = tensor_to_images(generate(g, emb, noise(len(samples), g.noise_dim, torch.Generator().manual_seed(args.seed))))
    out = _out_dir(args)
    with open(out / "generated.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "lat", "lon"])
        for i, (s, px) in enumerate(zip(samples, fakes)):
            name = f"{i:06d}.png"
            Image.fromarray(px).save(out / name)
            w.writerow([name, repr(s.overhead.center.lat), repr(s.overhead.center.lon)])
    log.info("wrote %d generated views to %s", len(samples), out)


def cmd_extract(args) -> None:
    import torch

    from .cgan.checkpoint import load_checkpoint
    from .cgan.train import images_to_tensor
    from .features import ZPolicy, extract_features, featurize_overhead, write_features_csv

    run = Path(args.run)
    g, _ = load_checkpoint(run / "generator.ckpt")
    d, _ = load_checkpoint(run / "discriminator.ckpt")
    samples, _ = _load(args.data)
    emb = torch.from_numpy(_embedder(run).values([s.overhead for s in samples]).astype(np.float32))
    if args.source == "overhead":
        feats = featurize_overhead(g, d, emb, ZPolicy(args.z_policy, args.z_k, args.seed))
    else:
        feats = extract_features(d, images_to_tensor([s.ground.pixels for s in samples]), emb)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features_csv(out, feats, [s.overhead.center for s in samples])
    log.info("wrote %d x %d features to %s", *feats.shape, out)


def _labels_for(locations, samples, classes) -> np.ndarray:
    from .geodata.labels import propagate_labels

    return np.array([c.id for c in propagate_labels(_truth_map(samples, classes), locations)], dtype=np.int64)


def _write_labels(path: Path, locations, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lat", "lon", "label"])
        for loc, lab in zip(locations, labels):
            w.writerow([repr(loc.lat), repr(loc.lon), int(lab)])


def cmd_probe(args) -> None:
    from .experiment import split_indices
    from .features import read_features_csv
    from .probes import evaluate_probe, train_probe, write_metrics_csv

    feats, locs = read_features_csv(args.features)
    samples, classes = _load(args.data)
    y = _labels_for(locs, samples, classes)
    tr, te = split_indices(len(y), args.test_fraction, args.seed)
    hp = {"C": args.C, "gamma": args.gamma if args.gamma in ("scale", "auto") else float(args.gamma), "grid": args.grid}
    probe = train_probe(feats[tr], y[tr], "svm-rbf", hp, args.seed)
    out = _out_dir(args)
    probe.save(out / "probe.bin")
    name = Path(args.features).stem
    write_metrics_csv(out / "metrics.csv", [
        {"classifier": "svm-rbf", "feature_type": "train", "name": name, "dimension": probe.dim, "accuracy": probe.train_accuracy},
        {"classifier": "svm-rbf", "feature_type": "test", "name": name, "dimension": probe.dim, "accuracy": evaluate_probe(probe, feats[te], y[te])},
    ])
    _write_labels(out / "labels.csv", locs, probe.predict(feats))
    log.info("probe test accuracy %.4f", evaluate_probe(probe, feats[te], y[te]))


def cmd_interp(args) -> None:
    from .features import read_features_csv
    from .interp import SparseFeatureField, interpolate_then_classify, sample_anchors
    from .probes import ProbeModel

    feats, locs = read_features_csv(args.anchors)
    keep = sample_anchors(len(locs), args.anchor_fraction, args.seed) if args.anchor_fraction < 1 else np.arange(len(locs))
    field = SparseFeatureField(np.array([[locs[i].lat, locs[i].lon] for i in keep]), feats[keep], args.sigma, args.metric)
    probe = ProbeModel.load(args.probe)
    samples, _ = _load(args.data)
    queries = [s.overhead.center for s in samples]
    labels = interpolate_then_classify(field, probe, queries)
    out = _out_dir(args)
    _write_labels(out / "labels.csv", queries, labels)
    with open(out / "anchors.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lat", "lon"])
        w.writerows([repr(locs[i].lat), repr(locs[i].lon)] for i in keep)
    log.info("interpolated %d queries from %d anchors (sigma %.3g km)", len(queries), len(keep), args.sigma)


def cmd_map(args) -> None:
    from .geodata.types import GeoLocation
    from .mapping import build_map, labels_by_cell, map_accuracy, render_map, write_map_csv

    samples, classes = _load(args.data)
    truth = _truth_map(samples, classes)
    with open(args.labels, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cells = [truth.geometry.locate(GeoLocation(float(r["lat"]), float(r["lon"]))) for r in rows]
    m = build_map(truth.shape, labels_by_cell(cells, [int(r["label"]) for r in rows]), args.provenance, truth.geometry, truth.classes)
    out = _out_dir(args)
    write_map_csv(out / f"map_{args.provenance}.csv", m)
    (out / f"map_{args.provenance}.png").write_bytes(render_map(m))
    acc = map_accuracy(m, truth)
    (out / "map_accuracy.csv").write_text(f"method,map_accuracy\n{args.provenance},{acc!r}\n")
    log.info("%s map accuracy %.4f", args.provenance, acc)


def cmd_report(args) -> None:
    from .config import ExperimentConfig, load_config
    from .experiment import run_desk_experiment, write_report

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.grid is not None:
        cfg.data.grid_h, cfg.data.grid_w = args.grid
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.max_steps is not None:
        cfg.train.max_steps = args.max_steps
    cfg.output_dir = args.out or cfg.output_dir
    res = run_desk_experiment(cfg)
    out = write_report(res, cfg.output_dir)
    for row in res.table2:
        print(f"{row['name']:<22} {row['dimension']:>5}D  {row['accuracy']:.4f}")
    for row in res.table3:
        print(f"map {row['method']:<18} {row['map_accuracy']:.4f}")
    for row in res.table4:
        print(f"reference-cnn on {row['images']:<10} {row['accuracy']:.4f}")
    log.info("report written to %s", out)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="groundview", description="Ground-level view synthesis and dense land-cover features.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic paired dataset")
    s.add_argument("--grid", type=_grid, default=(16, 16))
    s.add_argument("--layout", choices=("checkerboard", "halves", "random"), default="checkerboard")
    s.add_argument("--images-per-cell", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train the conditional GAN")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--embedding", choices=("grayscale", "hsv", "cnn"), default="grayscale")
    s.add_argument("--encoder", choices=("random-conv", "vgg16"), default="random-conv")
    s.add_argument("--width", type=float, default=0.125)
    s.add_argument("--epochs", type=int, default=5)
    s.add_argument("--lr", type=float, default=2e-4)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--max-steps", type=int, default=None)
    s.add_argument("--d-update", choices=("summed", "separate"), default="summed")
    s.add_argument("--saturating-g", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="render generated ground-level views")
    s.add_argument("--run", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--limit", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("extract", help="discriminator features per location")
    s.add_argument("--run", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="features CSV")
    s.add_argument("--source", choices=("overhead", "ground"), default="overhead")
    s.add_argument("--z-policy", choices=("fixed-zero", "fixed-seed", "average-of-k"), default="average-of-k")
    s.add_argument("--z-k", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("probe", help="train and score an SVM probe on a features CSV")
    s.add_argument("--features", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--test-fraction", type=float, default=0.2)
    s.add_argument("--C", type=float, default=1.0)
    s.add_argument("--gamma", default="scale")
    s.add_argument("--grid", action="store_true", help="small grid search over C and gamma")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("interp", help="interpolate-then-classify from anchor features")
    s.add_argument("--anchors", required=True, help="features CSV")
    s.add_argument("--probe", required=True)
    s.add_argument("--data", required=True, help="dataset whose locations are queried")
    s.add_argument("--out", required=True)
    s.add_argument("--sigma", type=float, default=2.0, help="kernel bandwidth in km")
    s.add_argument("--metric", choices=("haversine", "planar"), default="haversine")
    s.add_argument("--anchor-fraction", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_interp)

    s = sub.add_parser("map", help="majority-vote land-cover map from per-location labels")
    s.add_argument("--labels", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--provenance", choices=("ground-images", "cgan-features", "interpolated"), required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("report", help="run the full desk experiment and write tables and figures")
    s.add_argument("--config", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--grid", type=_grid, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--max-steps", type=int, default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"groundview: error: {exc}", file=sys.stderr)
        return 2
    except (GroundviewError, OSError, ValueError, KeyError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
