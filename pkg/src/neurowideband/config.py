"""Run configuration: a YAML document validated against a JSON schema.

Every leaf key ``section.name`` has a matching command-line flag
``--section.name``; flags override file values.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import jsonschema
import yaml

__all__ = ["DEFAULTS", "SCHEMA", "ConfigError", "load_config", "validate_config", "merge",
           "flatten"]


class ConfigError(ValueError):
    """Schema violation; ``errors`` lists (path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


DEFAULTS: dict = {
    "seed": 0,
    "threads": 1,
    "simulation": {
        "scene": "random",
        "center_hz": 5.5e9,
        "spacing_hz": 312.5e3,
        "num_subcarriers": 128,
        "num_frames": 256,
        "num_paths": [1, 5],
        "delay_range_ns": [0.0, 200.0],
        "gain_range": [0.1, 1.0],
        "aoa_range": [0.0, math.pi],
        "sort_gains": False,
        "snr_db": None,
        "antenna": 0,
        "subjects": 3,
        "breath_rate_hz": 0.25,
        "breath_amplitude_ps": 25.0,
        "sample_rate_hz": 100.0,
        "duration_s": 60.0,
    },
    "data": {
        "train_fraction": 0.8,
        "format": "nwbd",
    },
    "model": {
        "model_dim": 64,
        "num_blocks": 4,
        "num_heads": 4,
        "embed_dim": 64,
        "timestep_embed_dim": 64,
        "mlp_ratio": 4,
        "patch_size": 4,
        "n_cols": 4,
        "codec": "patchify",
        "codec_seed": 0,
    },
    "schedule": {
        "timesteps": 50,
        "beta_start": None,
        "beta_end": None,
    },
    "training": {
        "epochs": 500,
        "total_steps": 2000,
        "batch_size": 64,
        "subband_augment": 4,
        "learning_rate": 1e-3,
        "weight_decay": 0.01,
        "beta2": 0.99,
        "warmup_epochs": 10,
        "min_lr": 0.0,
        "dtype": "float32",
    },
    "evaluation": {
        "ks": [2],
        "clamp": False,
        "noise_baseline": True,
    },
    "sensing": {
        "dominance_ratio": 0.5,
        "zero_pad_factor": 4,
        "window_s": 8.0,
        "hop_s": 1.0,
        "band_hz": [0.1, 0.5],
        "peak_ratio": 0.2,
        "persistence": 0.8,
        "n_subjects": None,
        "sample_rate_hz": 100.0,
    },
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_int0 = {"type": "integer", "minimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_ipair = {"type": "array", "items": _int1, "minItems": 2, "maxItems": 2}
_opt = lambda s: {"anyOf": [s, {"type": "null"}]}  # noqa: E731


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "neurowideband run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": _int0,
        "threads": _int1,
        "simulation": _section({
            "scene": {"enum": ["random", "breathing"]},
            "center_hz": _pos, "spacing_hz": _pos, "num_subcarriers": _int1,
            "num_frames": _int1, "num_paths": _ipair, "delay_range_ns": _pair,
            "gain_range": _pair, "aoa_range": _pair, "sort_gains": {"type": "boolean"},
            "snr_db": _opt(_num), "antenna": _int0, "subjects": _int1,
            "breath_rate_hz": _nonneg, "breath_amplitude_ps": _nonneg,
            "sample_rate_hz": _pos, "duration_s": _pos,
        }),
        "data": _section({
            "train_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            "format": {"enum": ["nwbd", "jsonl"]},
        }),
        "model": _section({
            "model_dim": _int1, "num_blocks": _int1, "num_heads": _int1, "embed_dim": _int1,
            "timestep_embed_dim": _int1, "mlp_ratio": _int1, "patch_size": _int1,
            "n_cols": _int1, "codec": {"enum": ["patchify", "frozen_linear"]}, "codec_seed": _int0,
        }),
        "schedule": _section({
            "timesteps": _int1, "beta_start": _opt(_pos), "beta_end": _opt(_pos),
        }),
        "training": _section({
            "epochs": _int1, "total_steps": _int1, "batch_size": _int1, "subband_augment": _int1,
            "learning_rate": _nonneg, "weight_decay": _nonneg,
            "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "warmup_epochs": _int0, "min_lr": _nonneg,
            "dtype": {"enum": ["float32", "float64"]},
        }),
        "evaluation": _section({
            "ks": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            "clamp": {"type": "boolean"}, "noise_baseline": {"type": "boolean"},
        }),
        "sensing": _section({
            "dominance_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "zero_pad_factor": _int1, "window_s": _pos, "hop_s": _pos, "band_hz": _pair,
            "peak_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "persistence": {"type": "number", "minimum": 0, "maximum": 1},
            "n_subjects": _opt(_int1), "sample_rate_hz": _pos,
        }),
    },
}


def validate_config(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError([(".".join(str(p) for p in e.absolute_path), e.message) for e in errors])


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def flatten(doc: dict, prefix: str = "") -> dict:
    """``{"a": {"b": 1}}`` becomes ``{"a.b": 1}``."""
    out = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file, then dotted ``overrides``; validated twice.

    The file is validated on its own first so that unknown keys are reported
    against what the user wrote.
    """
    doc = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([("", f"not valid YAML: {exc}")]) from None
        if not isinstance(doc, dict):
            raise ConfigError([("", "top level must be a mapping")])
        validate_config(doc)
    cfg = merge(DEFAULTS, doc)
    for dotted, value in (overrides or {}).items():
        node = cfg
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    validate_config(cfg)
    return cfg


if __name__ == "__main__":
    print(json.dumps(SCHEMA, indent=2))
