"""Pipeline configuration: schema validation, defaults and path resolution."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from rmask.classifier import TrainConfig
from rmask.errors import ConfigError
from rmask.propagation import COMBINE_METHODS, CombineSpec
from rmask.walk import BIAS_MODES, NORMALIZATIONS, WalkConfig

_count = {"type": "integer", "minimum": 0}
_path = {"type": "string", "minLength": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["graph"],
    "properties": {
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["edge_list", "features"],
            "properties": {
                "edge_list": _path,
                "features": _path,
                "labels": _path,
                "splits": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["train", "val", "test"],
                    "properties": {"train": _path, "val": _path, "test": _path},
                },
            },
        },
        "propagation": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {
                "mode": {"enum": ["baseline", "rmask"], "default": "baseline"},
                "r": {"type": "number", "minimum": 0, "maximum": 1, "default": 0.5},
                "depth_H": {**_count, "default": 2},
                "walks_T": {"type": "integer", "minimum": 1, "default": 10},
                "bias": {"enum": list(BIAS_MODES), "default": "uniform"},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.15},
                "epsilon": {"type": "number", "exclusiveMinimum": 0, "default": 1e-4},
                "top_k": {"type": "integer", "minimum": 1, "default": 256},
                "max_retries": {**_count, "default": 0},
                "normalization": {"enum": list(NORMALIZATIONS), "default": "accepted"},
                "seed": {**_count, "default": 0},
            },
        },
        "combine": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {
                "method": {"enum": list(COMBINE_METHODS), "default": "s2gc_average"},
                "beta": {"type": ["number", "null"], "default": None},
                "include_raw": {"type": "boolean", "default": True},
                "renormalize": {"type": "boolean", "default": False},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {
                "learning_rate": {"type": "number", "minimum": 0, "default": 0.01},
                "weight_decay": {"type": "number", "minimum": 0, "default": 5e-4},
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1, "default": 0.0},
                "max_epochs": {**_count, "default": 300},
                "patience": {"type": "integer", "minimum": 1, "default": 100},
                "seed": {**_count, "default": 0},
                "hidden_dim": {"type": "integer", "minimum": 1, "default": 64},
                "num_layers": {"type": "integer", "minimum": 1, "default": 1},
                "standardize": {"type": "boolean", "default": True},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "default": {},
            "properties": {"directory": {**_path, "default": "out"}},
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _fill(schema: dict, doc):
    if schema.get("type") != "object" or not isinstance(doc, dict):
        return doc
    for key, sub in schema.get("properties", {}).items():
        if key not in doc and "default" in sub:
            doc[key] = copy.deepcopy(sub["default"])
        if key in doc:
            doc[key] = _fill(sub, doc[key])
    return doc


def validate(doc: dict) -> None:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}")


def with_defaults(doc: dict) -> dict:
    """Validate ``doc`` and return a copy with every default filled in."""
    validate(doc)
    doc = _fill(SCHEMA, copy.deepcopy(doc))
    if doc["train"]["patience"] > doc["train"]["max_epochs"] > 0:
        raise ConfigError("config invalid at train/patience: must not exceed max_epochs")
    return doc


def _resolve(path: str, base: Path) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else (base / p).resolve())


def load_config(path, seed: int | None = None, out: str | None = None) -> dict:
    """Read, validate and complete a config file.

    Relative paths inside it are resolved against the file's directory.
    ``seed`` overrides both the propagation and the training seed; ``out``
    overrides the output directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    doc = with_defaults(doc)
    base = path.resolve().parent
    g = doc["graph"]
    for key in ("edge_list", "features", "labels"):
        if key in g:
            g[key] = _resolve(g[key], base)
    if "splits" in g:
        g["splits"] = {k: _resolve(v, base) for k, v in g["splits"].items()}
    if seed is not None:
        doc["propagation"]["seed"] = doc["train"]["seed"] = int(seed)
    doc["output"]["directory"] = _resolve(out, Path.cwd()) if out else _resolve(doc["output"]["directory"], base)
    validate(doc)
    return doc


def walk_config(doc: dict) -> WalkConfig:
    p = doc["propagation"]
    return WalkConfig(depth=p["depth_H"], walks=p["walks_T"], bias=p["bias"], seed=p["seed"],
                      max_retries=p["max_retries"], normalization=p["normalization"])


def combine_spec(doc: dict) -> CombineSpec:
    c = doc["combine"]
    return CombineSpec(c["method"], c["beta"], c["include_raw"], c["renormalize"])


def train_config(doc: dict) -> TrainConfig:
    return TrainConfig(**doc["train"])


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
