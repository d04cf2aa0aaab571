import json

import numpy as np
import pytest
import torch

from toontex.advtrain import Discriminator
from toontex.diffusion import (
    AdapterSet,
    NoiseSchedule,
    load_adapters,
    load_checkpoint,
    predict_noise,
    save_adapters,
    save_checkpoint,
    state_bytes,
)
from toontex.diffusion.unet import DenoiserConfig, build_denoiser
from toontex.errors import ContractError


@pytest.fixture(scope="module")
def setup():
    cfg = DenoiserConfig(resolution=16, channels=(8, 16, 24), text_dim=16,
                         time_dim=32, num_heads=2)
    den = build_denoiser(cfg, seed=0)
    adapters = AdapterSet.for_denoiser(den, rank=4, seed=1)
    gen = torch.Generator().manual_seed(2)
    with torch.no_grad():
        for p in adapters.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=gen))
    return den, NoiseSchedule.linear(100, 1e-4, 0.02), adapters


def test_header_layout(setup, tmp_path):
    den, sched, adapters = setup
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, den, sched, adapters, metadata={"config_hash": "abc123"})
    blob = path.read_bytes()
    assert blob.startswith(b"TOONTEXCKPT1\n")
    header = json.loads(blob.split(b"\n", 2)[1])
    assert header["schedule"]["timesteps"] == 100
    assert header["metadata"]["config_hash"] == "abc123"
    names = [t["name"] for t in header["tensors"]]
    assert any(n.startswith("base/") for n in names)
    assert any(n.startswith("adapter/") for n in names)
    # manifest offsets are contiguous float32 little-endian
    offset = 0
    for t in header["tensors"]:
        assert t["offset"] == offset
        assert t["size"] == int(np.prod(t["shape"]) * 4) or t["shape"] == []
        offset += t["size"]


def test_roundtrip_base_and_adapters(setup, tmp_path):
    den, sched, adapters = setup
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, den, sched, adapters)
    den2, sched2, ad2, disc2, _ = load_checkpoint(path)
    assert state_bytes(den) == state_bytes(den2)
    assert disc2 is None
    assert np.array_equal(sched2.betas, sched.betas)
    x = torch.randn(1, 3, 16, 16)
    assert torch.equal(predict_noise(den, adapters, x, None, 50),
                       predict_noise(den2, ad2, x, None, 50))


def test_discriminator_group(setup, tmp_path):
    den, sched, adapters = setup
    disc = Discriminator()
    path = tmp_path / "d.ckpt"
    save_checkpoint(path, den, sched, adapters, discriminator=disc)
    _, _, _, disc_state, _ = load_checkpoint(path)
    assert disc_state is not None
    disc2 = Discriminator()
    disc2.load_state_dict(disc_state)
    assert state_bytes(disc) == state_bytes(disc2)


def test_adapters_ship_standalone(setup, tmp_path):
    den, sched, adapters = setup
    path = tmp_path / "a.ckpt"
    save_adapters(path, adapters, den.config)
    loaded, header = load_adapters(path)
    assert sorted(loaded.names()) == sorted(adapters.names())
    for name in adapters.names():
        assert torch.equal(loaded[name].A, adapters[name].A)
        assert torch.equal(loaded[name].B, adapters[name].B)
    # no base tensors in a standalone adapter file
    assert all(t["name"].startswith("adapter/") for t in header["tensors"])


def test_adapter_file_without_adapters_rejected(setup, tmp_path):
    den, sched, _ = setup
    path = tmp_path / "b.ckpt"
    save_checkpoint(path, den, sched)
    with pytest.raises(ContractError):
        load_adapters(path)


def test_not_a_checkpoint(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"garbage")
    with pytest.raises(ContractError):
        load_checkpoint(path)


def test_deterministic_bytes(setup, tmp_path):
    den, sched, adapters = setup
    p1, p2 = tmp_path / "1.ckpt", tmp_path / "2.ckpt"
    save_checkpoint(p1, den, sched, adapters)
    save_checkpoint(p2, den, sched, adapters)
    assert p1.read_bytes() == p2.read_bytes()
