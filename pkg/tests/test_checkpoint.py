import pytest
import torch

from groundview.cgan import build_models, load_checkpoint, save_checkpoint
from groundview.cgan.checkpoint import read_header


def test_round_trip(tmp_path):
    g, d = build_models(25, 0.125, seed=5)
    for m, name in ((g, "g.ckpt"), (d, "d.ckpt")):
        save_checkpoint(m, tmp_path / name, steps=7, embedding="cnn")
        back, meta = load_checkpoint(tmp_path / name)
        assert meta["steps"] == "7" and meta["embedding"] == "cnn"
        assert type(back) is type(m) and back.config == m.config
        for (k, a), (_, b) in zip(m.state_dict().items(), back.state_dict().items()):
            assert torch.equal(a, b), k


def test_header_is_text(tmp_path):
    g, _ = build_models(100, 0.0625)
    save_checkpoint(g, tmp_path / "g.ckpt")
    meta, tensors, _ = read_header(tmp_path / "g.ckpt")
    assert meta["config"]["kind"] == "generator"
    assert tensors[0][0] == "net.deconv1.weight"


def test_corrupted_architecture_rejected(tmp_path):
    g, _ = build_models(100, 0.0625)
    save_checkpoint(g, tmp_path / "g.ckpt")
    raw = (tmp_path / "g.ckpt").read_bytes()
    start = raw.index(b"arch ") + 5
    (tmp_path / "g.ckpt").write_bytes(raw[:start] + b"0" * 16 + raw[start + 16 :])
    with pytest.raises(ValueError, match="architecture"):
        load_checkpoint(tmp_path / "g.ckpt")
    (tmp_path / "x.ckpt").write_bytes(b"nope\nend\n")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.ckpt")
