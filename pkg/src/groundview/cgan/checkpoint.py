"""Model checkpoints: a text header followed by raw little-endian tensors.

Header lines are ``key value``; one ``tensor <name> <dtype> <shape>``
line per state-dict entry, in payload order; the header ends with
``end``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .models import architecture_hash, model_from_config

MAGIC = "groundview-checkpoint v1"
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8", torch.int64: "<i8"}
_NAMES = {"<f4": torch.float32, "<f8": torch.float64, "<i8": torch.int64}


def save_checkpoint(model: torch.nn.Module, path, **meta) -> None:
    lines = [MAGIC, f"config {json.dumps(model.config, sort_keys=True)}", f"arch {architecture_hash(model)}"]
    lines += [f"{k} {v}" for k, v in sorted(meta.items())]
    payload = []
    for name, t in model.state_dict().items():
        code = _DTYPES[t.dtype]
        shape = ",".join(str(s) for s in t.shape) or "-"
        lines.append(f"tensor {name} {code} {shape}")
        payload.append(np.ascontiguousarray(t.detach().cpu().numpy(), dtype=code).tobytes())
    lines.append("end")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8") + b"".join(payload))


def read_header(path) -> tuple[dict, list, int]:
    raw = Path(path).read_bytes()
    end = raw.index(b"\nend\n") + 5
    lines = raw[:end].decode("utf-8").splitlines()
    if lines[0] != MAGIC:
        raise ValueError(f"{path}: not a groundview checkpoint")
    meta, tensors = {}, []
    for line in lines[1:-1]:
        key, _, value = line.partition(" ")
        if key == "tensor":
            name, code, shape = value.split(" ")
            dims = () if shape == "-" else tuple(int(s) for s in shape.split(","))
            tensors.append((name, code, dims))
        else:
            meta[key] = value
    meta["config"] = json.loads(meta["config"])
    return meta, tensors, end


def load_checkpoint(path) -> tuple[torch.nn.Module, dict]:
    meta, tensors, offset = read_header(path)
    raw = Path(path).read_bytes()
    model = model_from_config(meta["config"])
    if architecture_hash(model) != meta["arch"]:
        raise ValueError(f"{path}: architecture hash mismatch")
    state = {}
    for name, code, dims in tensors:
        n = int(np.prod(dims)) if dims else 1
        size = n * np.dtype(code).itemsize
        arr = np.frombuffer(raw, dtype=code, count=n, offset=offset).reshape(dims)
        state[name] = torch.from_numpy(arr.copy()).to(_NAMES[code])
        offset += size
    model.load_state_dict(state)
    model.eval()
    return model, meta
