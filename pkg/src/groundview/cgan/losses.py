"""Adversarial losses on discriminator probabilities.

Probabilities are clamped to [EPS, 1 - EPS] before taking logs.
"""

from __future__ import annotations

import torch

EPS = 1e-7


def _as_tensor(p) -> torch.Tensor:
    if isinstance(p, torch.Tensor):
        return p
    return torch.as_tensor(p, dtype=torch.float64)


def d_loss(p_real, p_fake, eps: float = EPS) -> torch.Tensor:
    """-[log D(x, y) + log(1 - D(G(z, y), y))], averaged over the batch."""
    p_real = _as_tensor(p_real).clamp(eps, 1.0 - eps)
    p_fake = _as_tensor(p_fake).clamp(eps, 1.0 - eps)
    return -(torch.log(p_real) + torch.log1p(-p_fake)).mean()


def d_loss_real(p_real, eps: float = EPS) -> torch.Tensor:
    return -torch.log(_as_tensor(p_real).clamp(eps, 1.0 - eps)).mean()


def d_loss_fake(p_fake, eps: float = EPS) -> torch.Tensor:
    return -torch.log1p(-_as_tensor(p_fake).clamp(eps, 1.0 - eps)).mean()


def g_loss(p_fake, saturating: bool = False, eps: float = EPS) -> torch.Tensor:
    """Generator loss. Default is the non-saturating -log D(G(z, y), y);
    ``saturating=True`` gives the minimax form log(1 - D(G(z, y), y))."""
    p_fake = _as_tensor(p_fake).clamp(eps, 1.0 - eps)
    if saturating:
        return torch.log1p(-p_fake).mean()
    return -torch.log(p_fake).mean()
