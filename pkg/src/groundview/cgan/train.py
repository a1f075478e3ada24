from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from ..errors import ConfigError, DimensionError, DivergenceError, InsufficientSamplesError
from .losses import d_loss, d_loss_fake, d_loss_real, g_loss
from .models import Discriminator, Generator

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 32
    epochs: int = 5
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    saturating_g: bool = False
    # "summed": one D step on L_real + L_fake; "separate": a step on each
    d_update: str = "summed"
    max_steps: Optional[int] = None

    def validate(self) -> None:
        if not self.learning_rate >= 0 or math.isinf(self.learning_rate):
            raise ConfigError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for batch normalization")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.d_update not in ("summed", "separate"):
            raise ConfigError(f"d_update must be 'summed' or 'separate', got {self.d_update!r}")


@dataclass
class LossHistory:
    steps: list = field(default_factory=list)
    d_losses: list = field(default_factory=list)
    g_losses: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def append(self, step: int, ld: float, lg: float) -> None:
        self.steps.append(step)
        self.d_losses.append(ld)
        self.g_losses.append(lg)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "L_D", "L_G"])
            for s, a, b in zip(self.steps, self.d_losses, self.g_losses):
                w.writerow([s, repr(a), repr(b)])

    @classmethod
    def from_csv(cls, path) -> "LossHistory":
        h = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                h.append(int(row[0]), float(row[1]), float(row[2]))
        return h


def images_to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    """uint8 HxWx3 images -> float32 (N, 3, H, W) in [-1, 1]."""
    arr = np.stack(images).astype(np.float32)
    return torch.from_numpy(arr / 127.5 - 1.0).permute(0, 3, 1, 2).contiguous()


def tensor_to_images(x: torch.Tensor) -> np.ndarray:
    arr = ((x.detach().float().clamp(-1, 1) + 1.0) * 127.5).round().permute(0, 2, 3, 1).numpy()
    return arr.astype(np.uint8)


def embedding_matrix(samples, embed_fn) -> np.ndarray:
    patches = [s.overhead for s in samples]
    if hasattr(embed_fn, "values"):
        return np.asarray(embed_fn.values(patches), dtype=np.float64)
    return np.stack([embed_fn(p).values for p in patches]) if patches else np.zeros((0, 0))


def noise(n: int, dim: int, generator: torch.Generator) -> torch.Tensor:
    return torch.randn(n, dim, generator=generator)


def train(
    g: Generator,
    d: Discriminator,
    samples,
    embed_fn,
    cfg: TrainConfig,
    on_step: Optional[Callable[[int, float, float], None]] = None,
):
    """Adversarial training. Each step updates D on one real batch (true
    image/patch pairs) and one fake batch generated from the same
    patches, then updates G. Returns (g, d, LossHistory) with both
    models left in eval mode."""
    cfg.validate()
    if len(samples) < cfg.batch_size:
        raise InsufficientSamplesError(f"need at least batch_size={cfg.batch_size} samples, got {len(samples)}")
    if g.nef != d.nef:
        raise DimensionError(f"generator nef {g.nef} != discriminator nef {d.nef}")
    images = images_to_tensor([s.ground.pixels for s in samples])
    emb = torch.from_numpy(embedding_matrix(samples, embed_fn).astype(np.float32))
    if emb.shape[1] != g.nef:
        raise DimensionError(f"embedding size {emb.shape[1]} != model nef {g.nef}")
    return train_tensors(g, d, images, emb, cfg, on_step)


def train_tensors(g, d, images: torch.Tensor, emb: torch.Tensor, cfg: TrainConfig, on_step=None):
    cfg.validate()
    n = images.shape[0]
    gen = torch.Generator().manual_seed(cfg.seed)
    betas = (cfg.beta1, cfg.beta2)
    opt_g = torch.optim.Adam(g.parameters(), lr=cfg.learning_rate, betas=betas)
    opt_d = torch.optim.Adam(d.parameters(), lr=cfg.learning_rate, betas=betas)
    history = LossHistory()
    steps_per_epoch = n // cfg.batch_size
    step = 0
    g.train()
    d.train()
    done = False
    for epoch in range(cfg.epochs):
        order = torch.randperm(n, generator=gen)
        for b in range(steps_per_epoch):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            x, e = images[idx], emb[idx]
            z = noise(len(idx), g.noise_dim, gen)
            fake = g(z, e)

            if cfg.d_update == "summed":
                p_real = d(x, e)
                p_fake = d(fake.detach(), e)
                ld = d_loss(p_real, p_fake)
                opt_d.zero_grad(set_to_none=True)
                ld.backward()
                opt_d.step()
            else:
                opt_d.zero_grad(set_to_none=True)
                lr_ = d_loss_real(d(x, e))
                lr_.backward()
                opt_d.step()
                opt_d.zero_grad(set_to_none=True)
                lf = d_loss_fake(d(fake.detach(), e))
                lf.backward()
                opt_d.step()
                ld = lr_.detach() + lf.detach()

            lg = g_loss(d(fake, e), saturating=cfg.saturating_g)
            opt_g.zero_grad(set_to_none=True)
            lg.backward()
            opt_g.step()

            ld_v, lg_v = float(ld.item()), float(lg.item())
            if not (math.isfinite(ld_v) and math.isfinite(lg_v)):
                raise DivergenceError(step, ld_v, lg_v)
            history.append(step, ld_v, lg_v)
            if on_step is not None:
                on_step(step, ld_v, lg_v)
            step += 1
        if done:
            break
        log.info("epoch %d: L_D=%.4f L_G=%.4f", epoch, history.d_losses[-1] if history else float("nan"),
                 history.g_losses[-1] if history else float("nan"))
    g.eval()
    d.eval()
    return g, d, history


@torch.no_grad()
def generate(g: Generator, emb: torch.Tensor, z: torch.Tensor, batch_size: int = 256) -> torch.Tensor:
    g.eval()
    outs = [g(z[i : i + batch_size], emb[i : i + batch_size]) for i in range(0, emb.shape[0], batch_size)]
    return torch.cat(outs) if outs else torch.zeros(0, 3, g.out_res, g.out_res)


@torch.no_grad()
def discriminator_accuracy(g, d, images: torch.Tensor, emb: torch.Tensor, seed: int = 0, batch_size: int = 256) -> float:
    """Real-vs-fake accuracy of D (eval mode) on held-out pairs: reals
    count as correct when D > 0.5, fakes generated from the same patches
    when D < 0.5."""
    g.eval()
    d.eval()
    gen = torch.Generator().manual_seed(seed)
    z = noise(emb.shape[0], g.noise_dim, gen)
    fake = generate(g, emb, z, batch_size)
    correct = 0
    for i in range(0, emb.shape[0], batch_size):
        sl = slice(i, i + batch_size)
        correct += int((d(images[sl], emb[sl]) > 0.5).sum())
        correct += int((d(fake[sl], emb[sl]) < 0.5).sum())
    return correct / (2 * emb.shape[0])
