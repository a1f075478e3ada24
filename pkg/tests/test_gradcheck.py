"""Autograd against a hand-rolled central finite-difference oracle."""

import numpy as np
import torch

from groundview.cgan import Discriminator, Generator, d_loss, g_loss, init_weights

H = 1e-6


def _numeric_grad(loss_fn, params):
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + H
                up = loss_fn().item()
                flat[i] = orig - H
                down = loss_fn().item()
                flat[i] = orig
                gflat[i] = (up - down) / (2 * H)
            grads.append(g)
    return torch.cat([g.flatten() for g in grads])


def _analytic_grad(loss_fn, params):
    for p in params:
        p.grad = None
    loss_fn().backward()
    return torch.cat([p.grad.flatten() for p in params])


def _rel_err(a, n):
    return (torch.linalg.norm(a - n) / torch.clamp(torch.maximum(torch.linalg.norm(a), torch.linalg.norm(n)), min=1e-300)).item()


def _mini(seed=0):
    torch.manual_seed(seed)
    g = Generator(nef=2, noise_dim=3, channels=(3, 3)).double()
    d = Discriminator(nef=2, branch=2, channels=(), feature_dim=4).double()
    gen = torch.Generator().manual_seed(seed)
    init_weights(g, gen)
    init_weights(d, gen)
    # larger weights keep activations away from the LeakyReLU kink scale of h
    with torch.no_grad():
        for p in list(g.parameters()) + list(d.parameters()):
            p.add_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * 0.3)
    return g, d


def test_discriminator_loss_gradient():
    g, d = _mini(1)
    torch.manual_seed(5)
    real = torch.rand(4, 3, 16, 16, dtype=torch.float64) * 2 - 1
    e = torch.rand(4, 2, dtype=torch.float64) * 2 - 1
    z = torch.randn(4, 3, dtype=torch.float64)
    fake = g(z, e).detach()
    params = list(d.parameters())

    def loss():
        return d_loss(d(real, e), d(fake, e))

    a, n = _analytic_grad(loss, params), _numeric_grad(loss, params)
    assert _rel_err(a, n) < 1e-4


def test_generator_loss_gradient():
    g, d = _mini(2)
    torch.manual_seed(6)
    e = torch.rand(4, 2, dtype=torch.float64) * 2 - 1
    z = torch.randn(4, 3, dtype=torch.float64)
    params = list(g.parameters())

    def loss():
        return g_loss(d(g(z, e), e))

    a, n = _analytic_grad(loss, params), _numeric_grad(loss, params)
    assert _rel_err(a, n) < 1e-4


def test_two_layer_toy_discriminator():
    gen = torch.Generator().manual_seed(0)
    w1 = torch.randn(5, 3, generator=gen, dtype=torch.float64, requires_grad=True)
    w2 = torch.randn(1, 5, generator=gen, dtype=torch.float64, requires_grad=True)
    xr = torch.randn(6, 3, generator=gen, dtype=torch.float64)
    xf = torch.randn(6, 3, generator=gen, dtype=torch.float64)

    def disc(x):
        return torch.sigmoid(torch.tanh(x @ w1.T) @ w2.T).view(-1)

    def loss():
        return d_loss(disc(xr), disc(xf))

    a, n = _analytic_grad(loss, [w1, w2]), _numeric_grad(loss, [w1, w2])
    assert _rel_err(a, n) < 1e-4
