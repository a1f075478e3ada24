"""Generator and discriminator networks.

At ``width=1.0`` both networks reproduce the published layer table
exactly. ``width`` scales every hidden channel count for CPU-sized runs;
the discriminator's last hidden layer keeps ``feature_dim`` channels
(1024 by default) so the pooled feature vector has the same length at
every width.
"""

from __future__ import annotations

import hashlib
from typing import Optional, Sequence

import torch
from torch import nn
import torch.nn.functional as F

from ..errors import DimensionError

NOISE_DIM = 100
G_CHANNELS = (1024, 512, 256, 128)
D_BRANCH = 64
D_CHANNELS = (256, 512)
FEATURE_DIM = 1024
LEAK = 0.2


def scaled(channels: int, width: float) -> int:
    return max(1, int(round(channels * width)))


class PlaneConv2d(nn.Conv2d):
    """Convolution over inputs whose channels are constant planes.

    Each output pixel is then a linear map of the per-channel constants,
    where the map only differs near the borders (zero padding drops
    taps). The weights for every output position are found by running
    the kernel over a single ones image, so the cost no longer scales
    with batch x input area. Numerically the same as ``nn.Conv2d`` on
    the broadcast planes up to summation order.
    """

    def forward(self, planes: torch.Tensor) -> torch.Tensor:
        b, c, h, w = planes.shape
        values = planes[:, :, 0, 0]
        ones = planes.new_ones(1, 1, h, w)
        taps = F.conv2d(ones, self.weight.reshape(-1, 1, *self.kernel_size), None, self.stride, self.padding)
        taps = taps.reshape(self.out_channels, c, *taps.shape[2:])
        out = torch.einsum("bc,ocij->boij", values, taps)
        if self.bias is not None:
            out = out + self.bias[None, :, None, None]
        return out


class Generator(nn.Module):
    def __init__(
        self,
        nef: int,
        width: float = 1.0,
        noise_dim: int = NOISE_DIM,
        channels: Optional[Sequence[int]] = None,
    ):
        super().__init__()
        channels = tuple(channels) if channels is not None else tuple(scaled(c, width) for c in G_CHANNELS)
        self.nef = nef
        self.noise_dim = noise_dim
        self.channels = channels
        self.out_res = 4 * 2 ** len(channels)
        layers = []
        cin = nef + noise_dim
        for i, cout in enumerate(channels, start=1):
            stride, pad = (1, 0) if i == 1 else (2, 1)
            layers += [
                (f"deconv{i}", nn.ConvTranspose2d(cin, cout, 4, stride, pad, bias=False)),
                (f"deconv{i}_bn", nn.BatchNorm2d(cout)),
                (f"deconv{i}_relu", nn.ReLU()),
            ]
            cin = cout
        n = len(channels) + 1
        layers += [(f"deconv{n}", nn.ConvTranspose2d(cin, 3, 4, 2, 1, bias=True)), ("tanh", nn.Tanh())]
        self.net = nn.Sequential()
        for name, layer in layers:
            self.net.add_module(name, layer)

    @property
    def config(self) -> dict:
        return {"kind": "generator", "nef": self.nef, "noise_dim": self.noise_dim, "channels": list(self.channels)}

    def forward(self, z: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        if e.dim() != 2 or e.shape[1] != self.nef:
            raise DimensionError(f"generator expects embeddings of size {self.nef}, got {tuple(e.shape)}")
        if z.dim() != 2 or z.shape[1] != self.noise_dim:
            raise DimensionError(f"generator expects noise of size {self.noise_dim}, got {tuple(z.shape)}")
        x = torch.cat([e, z], dim=1)
        return self.net(x[:, :, None, None])


class Discriminator(nn.Module):
    def __init__(
        self,
        nef: int,
        width: float = 1.0,
        branch: Optional[int] = None,
        channels: Optional[Sequence[int]] = None,
        feature_dim: int = FEATURE_DIM,
    ):
        super().__init__()
        branch = branch if branch is not None else scaled(D_BRANCH, width)
        hidden = tuple(channels) if channels is not None else tuple(scaled(c, width) for c in D_CHANNELS)
        self.nef = nef
        self.branch = branch
        self.hidden = hidden
        self.feature_dim = feature_dim
        self.in_res = 4 * 2 ** (len(hidden) + 2)

        def block(seq, cin, cout, name, bn_name, conv=nn.Conv2d):
            seq.add_module(name, conv(cin, cout, 4, 2, 1, bias=False))
            seq.add_module(bn_name, nn.BatchNorm2d(cout))
            seq.add_module(f"{name}_lrelu", nn.LeakyReLU(LEAK))

        self.image_branch = nn.Sequential()
        block(self.image_branch, 3, branch, "conv1_1", "conv1_bn1")
        self.embed_branch = nn.Sequential()
        block(self.embed_branch, nef, branch, "conv1_2", "conv1_bn2", PlaneConv2d)
        self.trunk = nn.Sequential()
        cin = 2 * branch
        for i, cout in enumerate((*hidden, feature_dim), start=2):
            block(self.trunk, cin, cout, f"conv{i}", f"conv{i}_bn")
            cin = cout
        self.head = nn.Conv2d(feature_dim, 1, 4, 1, 0, bias=True)
        self.head_name = f"conv{len(hidden) + 3}"

    @property
    def config(self) -> dict:
        return {
            "kind": "discriminator",
            "nef": self.nef,
            "branch": self.branch,
            "channels": list(self.hidden),
            "feature_dim": self.feature_dim,
        }

    def _check(self, img: torch.Tensor, e: torch.Tensor):
        if img.dim() != 4 or tuple(img.shape[1:]) != (3, self.in_res, self.in_res):
            raise DimensionError(f"discriminator expects images of shape (B, 3, {self.in_res}, {self.in_res}), got {tuple(img.shape)}")
        if e.dim() != 2 or e.shape[1] != self.nef or e.shape[0] != img.shape[0]:
            raise DimensionError(f"discriminator expects embeddings of shape ({img.shape[0]}, {self.nef}), got {tuple(e.shape)}")

    def feature_map(self, img: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        """Last hidden activation (feature_dim x 4 x 4), the input to the head."""
        self._check(img, e)
        # the conditioning vector becomes nef constant-valued planes
        planes = e[:, :, None, None].expand(-1, -1, self.in_res, self.in_res)
        h = torch.cat([self.image_branch(img), self.embed_branch(planes)], dim=1)
        return self.trunk(h)

    def logits(self, img: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        return self.head(self.feature_map(img, e)).view(-1)

    def forward(self, img: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(img, e))


def init_weights(module: nn.Module, generator: Optional[torch.Generator] = None) -> None:
    """Gaussian init: conv weights N(0, 0.02); batchnorm scale N(1, 0.02),
    shift 0; conv biases 0."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, 0.02, generator=generator)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, 0.02, generator=generator)
            nn.init.zeros_(m.bias)


def build_models(nef: int, width: float = 1.0, seed: int = 0, feature_dim: int = FEATURE_DIM):
    gen = torch.Generator().manual_seed(seed)
    g = Generator(nef, width)
    d = Discriminator(nef, width, feature_dim=feature_dim)
    init_weights(g, gen)
    init_weights(d, gen)
    return g, d


def model_from_config(config: dict) -> nn.Module:
    cfg = dict(config)
    kind = cfg.pop("kind")
    if kind == "generator":
        return Generator(cfg["nef"], noise_dim=cfg["noise_dim"], channels=cfg["channels"])
    if kind == "discriminator":
        return Discriminator(cfg["nef"], branch=cfg["branch"], channels=cfg["channels"], feature_dim=cfg["feature_dim"])
    raise ValueError(f"unknown model kind {kind!r}")


def architecture_hash(model: nn.Module) -> str:
    desc = repr(sorted(model.config.items())) + repr(model)
    return hashlib.sha256(desc.encode("utf-8")).hexdigest()[:16]


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def layer_table(model: nn.Module) -> list[dict]:
    """Run a dummy forward pass and report every (de)convolution as
    name, kernel, in/out channels and in/out resolution."""
    rows = []
    hooks = []
    for name, m in model.named_modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            short = name.split(".")[-1] if name != "head" else model.head_name

            def hook(mod, inp, out, short=short):
                rows.append(
                    {
                        "name": short,
                        "kernel": tuple(mod.kernel_size),
                        "in_channels": mod.in_channels,
                        "out_channels": mod.out_channels,
                        "in_res": tuple(inp[0].shape[2:]),
                        "out_res": tuple(out.shape[2:]),
                    }
                )

            hooks.append(m.register_forward_hook(hook))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            if isinstance(model, Generator):
                model(torch.zeros(1, model.noise_dim), torch.zeros(1, model.nef))
            else:
                model(torch.zeros(1, 3, model.in_res, model.in_res), torch.zeros(1, model.nef))
    finally:
        for h in hooks:
            h.remove()
        model.train(was_training)
    return rows
