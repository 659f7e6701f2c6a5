"""Run configuration: JSON file with full defaulting, CLI overrides, content hash."""

from __future__ import annotations

import hashlib
import json

from .diffusion.denoiser import DenoiserConfig
from .diffusion.edm import EDMParams
from .occgod.model import DetectorConfig
from .synth.dataset import SynthConfig
from .vae.model import VAEConfig


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return {
        "master_seed": 0,
        "synth": SynthConfig().to_dict(),
        "vae": {**VAEConfig().to_dict(), "steps": 2000},
        "diffusion": {
            "denoiser": DenoiserConfig().to_dict(),
            "edm": EDMParams().to_dict(),
            "steps": 3000,
            "batch_size": 8,
        },
        "detector": {**DetectorConfig().to_dict(), "steps": 1500},
        "recon": {"grid_res": 48, "n_eval_points": 10000, "score_seed": 0},
    }


def _deep_update(base: dict, override: dict, path=""):
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _deep_update(base[k], v, path + k + ".")
        else:
            base[k] = v
    return base


def load_config(path=None, overrides=None) -> dict:
    cfg = default_config()
    if path:
        try:
            with open(path) as f:
                user = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        _deep_update(cfg, user)
    for dotted, value in (overrides or {}).items():
        node = cfg
        *parents, leaf = dotted.split(".")
        for p in parents:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[p]
        if leaf not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[leaf] = value
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def parse_sections(cfg: dict):
    """Typed views of the shared dict config."""
    return {
        "synth": SynthConfig.from_dict({**cfg["synth"], "master_seed": cfg["master_seed"]}),
        "vae": VAEConfig.from_dict({k: v for k, v in cfg["vae"].items() if k != "steps"}),
        "denoiser": DenoiserConfig.from_dict(cfg["diffusion"]["denoiser"]),
        "edm": EDMParams.from_dict(cfg["diffusion"]["edm"]),
        "detector": DetectorConfig.from_dict({k: v for k, v in cfg["detector"].items() if k != "steps"}),
    }
