"""Checkpoint file format.

Layout: the ASCII magic line ``TOONTEXCKPT1``, one JSON header line, then
raw little-endian float32 tensor data. The header carries the
architecture config, schedule parameters, vocabulary, optional metadata,
and a tensor manifest of {name, shape, offset, size} with byte offsets
into the payload, in storage order. Tensor groups are name-prefixed:
``base/``, ``adapter/``, ``disc/`` - so adapters ship standalone.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..errors import ContractError
from .lora import AdapterSet, LoraAdapter
from .schedule import NoiseSchedule
from .unet import Denoiser, DenoiserConfig

MAGIC = b"TOONTEXCKPT1"


def _tensor_entries(prefix: str, state: dict) -> list[tuple[str, np.ndarray]]:
    out = []
    for key in sorted(state):
        arr = state[key].detach().cpu().numpy().astype("<f4")
        out.append((f"{prefix}/{key}", arr))
    return out


def _write(path, tensors: list[tuple[str, np.ndarray]], header_extra: dict) -> None:
    manifest = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        blob = arr.tobytes()
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": offset, "size": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = dict(header_extra)
    header["tensors"] = manifest
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        for blob in blobs:
            fh.write(blob)


def _read(path) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC + b"\n"):
        raise ContractError(f"{path}: not a toontex checkpoint")
    nl = blob.index(b"\n", len(MAGIC) + 1)
    header = json.loads(blob[len(MAGIC) + 1:nl].decode("ascii"))
    payload = blob[nl + 1:]
    tensors = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["size"]]
        if len(raw) != entry["size"]:
            raise ContractError(f"{path}: truncated tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
    return header, tensors


def save_checkpoint(path, denoiser: Denoiser, schedule: NoiseSchedule,
                    adapters: AdapterSet | None = None,
                    discriminator: torch.nn.Module | None = None,
                    metadata: dict | None = None) -> None:
    tensors = _tensor_entries("base", denoiser.state_dict())
    if adapters is not None:
        tensors += _tensor_entries("adapter", adapters.state_dict())
    if discriminator is not None:
        tensors += _tensor_entries("disc", discriminator.state_dict())
    header = {
        "format": 1,
        "config": denoiser.config.to_dict(),
        "schedule": {"timesteps": schedule.timesteps,
                     "beta_start": float(schedule.betas[0]),
                     "beta_end": float(schedule.betas[-1])},
        "metadata": metadata or {},
    }
    _write(path, tensors, header)


def save_adapters(path, adapters: AdapterSet, config: DenoiserConfig,
                  metadata: dict | None = None) -> None:
    """Standalone adapter file (same container, adapter group only)."""
    header = {"format": 1, "config": config.to_dict(), "metadata": metadata or {}}
    _write(path, _tensor_entries("adapter", adapters.state_dict()), header)


def _load_group(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, torch.Tensor]:
    group = {}
    for name, arr in tensors.items():
        if name.startswith(prefix + "/"):
            group[name[len(prefix) + 1:]] = torch.from_numpy(arr)
    return group


def _adapters_from_state(state: dict[str, torch.Tensor]) -> AdapterSet | None:
    names = sorted({k.rsplit(".", 1)[0] for k in state})
    if not names:
        return None
    table = {}
    for name in names:
        key = name[len("table."):] if name.startswith("table.") else name
        a, b = state[f"{name}.A"], state[f"{name}.B"]
        adapter = LoraAdapter(a.shape[1], b.shape[0], rank=a.shape[0])
        with torch.no_grad():
            adapter.A.copy_(a)
            adapter.B.copy_(b)
        table[key] = adapter
    return AdapterSet(table)


def load_checkpoint(path):
    """Returns (denoiser, schedule, adapters | None, disc_state | None, header)."""
    header, tensors = _read(path)
    denoiser = Denoiser(DenoiserConfig.from_dict(header["config"]))
    base = _load_group(tensors, "base")
    denoiser.load_state_dict(base)
    denoiser.requires_grad_(False)
    sched_info = header.get("schedule") or {}
    schedule = NoiseSchedule.linear(sched_info.get("timesteps", 1000),
                                    sched_info.get("beta_start", 1e-4),
                                    sched_info.get("beta_end", 0.02))
    adapters = _adapters_from_state(_load_group(tensors, "adapter"))
    disc_state = _load_group(tensors, "disc") or None
    return denoiser, schedule, adapters, disc_state, header


def load_adapters(path) -> tuple[AdapterSet, dict]:
    header, tensors = _read(path)
    adapters = _adapters_from_state(_load_group(tensors, "adapter"))
    if adapters is None:
        raise ContractError(f"{path}: no adapter tensors present")
    return adapters, header


def state_bytes(module: torch.nn.Module) -> bytes:
    """Canonical byte serialization of a module's parameters and buffers,
    used to assert the frozen-base contract."""
    parts = []
    for key in sorted(module.state_dict()):
        parts.append(key.encode())
        parts.append(module.state_dict()[key].detach().cpu().numpy().tobytes())
    return b"".join(parts)
