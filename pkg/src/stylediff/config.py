"""Archivable run configuration: JSON document, strict keys, flag overrides."""
from __future__ import annotations

import copy
import json

from .numerics import ConfigError

DEFAULTS = {
    "schedule": {"T": 30, "beta_start": 1e-4, "beta_end": 0.02},
    "model": {"channels": 16, "heads": 2, "head_dim": 8, "latent": 16,
              "latent_channels": 4, "style_dim": 8},
    "guidance": {"s_I": 1.2, "s_T": 1.5, "s_M": 0.5},
    "sampler": {"seed": 1234, "lambda": 0.1, "noising_strength": 0.8,
                "mean_convention": "ddpm", "structure_mode": "self-similarity"},
    "temporal": {"alpha": 1.0, "beta": 2.0, "tau": 0.1},
    "training": {"steps": 2000, "batch": 4, "lr": 3e-3, "momentum": 0.9,
                 "p_drop": 0.1, "ae_steps": 800, "ae_lr": 5e-2, "ae_hidden": 16,
                 "deflicker_steps": 1000, "deflicker_lr": 1e-2,
                 "deflicker_hidden": 16, "seed": 99},
    "dataset": {"n_videos": 10, "size": 32, "frames": 16, "seed": 42},
    "paths": {},
}


def _merge(base, override, trail=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{trail}.{key}" if trail else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config section {where!r} must be an object")
            out[key] = val if key == "paths" else _merge(base[key], val, where)
        else:
            if isinstance(base[key], (int, float)) and not isinstance(val, (int, float)):
                raise ConfigError(f"config key {where!r} must be numeric")
            out[key] = val
    return out


def load_config(path=None, overrides=None):
    """Defaults <- JSON file <- explicit overrides; unknown keys rejected."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg
