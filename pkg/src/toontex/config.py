"""Run configuration: one versioned key-value document for all modules.

INI-style sections mirror the modules. Every key has a default, unknown
sections or keys are rejected, and the canonical serialization hashes into
a config fingerprint that is embedded in checkpoints and reports.
Secrets (client tokens) never live here; they come from environment
variables named by the *_token_env keys.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from pathlib import Path

from .errors import ContractError

_SCHEMA: dict[str, dict[str, object]] = {
    "run": {
        "seed": 0,
    },
    "diffusion": {
        "resolution": 64,
        "channels": "32,64,128",
        "text_dim": 64,
        "time_dim": 128,
        "num_heads": 4,
        "timesteps": 1000,
        "beta_start": 1e-4,
        "beta_end": 0.02,
        "guidance": 7.5,
        "sample_steps": 50,
        "rank": 8,
    },
    "advtrain": {
        "adapter_lr": 1e-4,
        "disc_lr": 2e-4,
        "lambda_adv": 0.05,
        "batch_size": 4,
        "total_steps": 2000,
        "num_views": 8,
        "cond_dropout": 0.1,
        "grad_clip": 1.0,
        "checkpoint_every": 1000,
        "proxy_detail": 0.06,
        "proxy_provider": "procedural",
        "proxy_endpoint": "",
        "proxy_token_env": "TOONTEX_PROXY_TOKEN",
        "pretrain_steps": 1500,
        "pretrain_lr": 2e-4,
    },
    "rasterizer": {
        "render_size": 64,
        "view_radius": 1.5,
        "view_elevation": 80.0,
        "fov": 40.0,
    },
    "uvtools": {
        "blur_sigma": 2.0,
        "blur_band": 6.0,
        "seam_view_azimuth": 180.0,
        "seam_view_elevation": 0.0,
        "seam_mask_width": 0.04,
    },
    "dataforge": {
        "atlas_size": 64,
        "dataset_size": 200,
        "exclude_benchmark": True,
    },
    "captioner": {
        "followups": 3,
        "caption_view_size": 128,
        "vqa_endpoint": "",
        "llm_endpoint": "",
        "agent_token_env": "TOONTEX_AGENT_TOKEN",
        "timeout": 30.0,
    },
    "evalkit": {
        "kid_subset": 100,
        "kid_subsets": 100,
        "eval_samples": 50,
        "embed_endpoint": "",
        "embed_token_env": "TOONTEX_EMBED_TOKEN",
    },
}


def _coerce(section: str, key: str, raw: str):
    default = _SCHEMA[section][key]
    if isinstance(default, bool):
        lowered = raw.strip().lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ContractError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ContractError(f"[{section}] {key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ContractError(f"[{section}] {key}: expected a number, got {raw!r}") from exc
    return raw


class RunConfig:
    def __init__(self, values: dict[str, dict[str, object]] | None = None):
        self.values = {s: dict(d) for s, d in _SCHEMA.items()}
        if values:
            for section, entries in values.items():
                for key, val in entries.items():
                    self.set(section, key, val)

    def get(self, section: str, key: str):
        try:
            return self.values[section][key]
        except KeyError as exc:
            raise ContractError(f"unknown config key [{section}] {key}") from exc

    def set(self, section: str, key: str, value) -> None:
        if section not in _SCHEMA:
            raise ContractError(f"unknown config section [{section}]")
        if key not in _SCHEMA[section]:
            raise ContractError(f"unknown config key [{section}] {key}")
        if isinstance(value, str) and not isinstance(_SCHEMA[section][key], str):
            value = _coerce(section, key, value)
        self.values[section][key] = value

    @classmethod
    def load(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string(text)
        cfg = cls()
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ContractError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ContractError(f"unknown config key [{section}] {key}")
                cfg.values[section][key] = _coerce(section, key, raw)
        return cfg

    def dumps(self) -> str:
        out = io.StringIO()
        for section in sorted(self.values):
            out.write(f"[{section}]\n")
            for key in sorted(self.values[section]):
                val = self.values[section][key]
                if isinstance(val, bool):
                    val = "true" if val else "false"
                out.write(f"{key} = {val}\n")
            out.write("\n")
        return out.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()[:16]

    def channels(self) -> tuple[int, int, int]:
        parts = [int(x) for x in str(self.get("diffusion", "channels")).split(",")]
        if len(parts) != 3:
            raise ContractError("diffusion.channels must have three entries")
        return tuple(parts)
