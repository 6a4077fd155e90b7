"""Run configuration: one JSON file layered over defaults, then flag overrides."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

from ..backbone import ModelConfig
from ..datagen import DatagenPlan
from ..identity import AdapterConfig, IdentityRegistry
from ..trainer import TrainConfig


class ConfigError(ValueError):
    pass


# sections whose keys are checked here; the others are checked by their own from_dict
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "model": {},
    "adapter": {},
    "train": {},
    "registry": {},
    "backend": {
        "kind": "mock",
        "endpoint": None,
        "model": None,
        "key_env": "HIRPF_API_KEY",
        "timeout": 60.0,
        "max_retries": 5,
        "rate_per_min": None,
        "parallelism": 1,
        "malformed_rate": 0.0,
    },
    "datagen": {},
    "eval": {
        "agent": "local",
        "activations": None,          # list of identity lists; None: every single identity
        "scale": "personality",       # or "profession"
        "dimensions": None,
        "items_per_dimension": None,
        "scenarios": None,            # list of scenario ids; None: all
        "grid": None,                 # list of identity lists; None: singles plus trait x profession
        "max_new": 48,
        "sampling_seed": 0,
    },
    "simulate": {
        "kind": "questionnaire",
        "population": [["high-extraversion"], ["low-extraversion"]],
        "questions": [{"id": "q1", "text": "Would you rather spend a free evening at a party or at home?",
                       "options": ["party", "home"]}],
        "topic": "Should every town have a public library?",
        "rounds": 2,
    },
    "paths": {
        "run_dir": None,              # None: runs/<subcommand>
        "dataset": None,
        "checkpoint": None,
    },
}
FIXED_SECTIONS = ("backend", "eval", "simulate", "paths")
BACKEND_KINDS = ("mock", "http")


def _merge(base: dict, over: Mapping, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if where == "" and k in FIXED_SECTIONS:
            if not isinstance(v, Mapping):
                raise ConfigError(f"config section {k!r} must be an object")
            out[k] = _merge(base[k], v, f"{k}.")
        elif where == "" and isinstance(base[k], dict):
            if not isinstance(v, Mapping):
                raise ConfigError(f"config section {k!r} must be an object")
            out[k] = dict(base[k], **v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


def parse_override(item: str) -> tuple[list[str], Any]:
    """``section.key=value``; the value is parsed as JSON and falls back to a plain string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    dotted, text = item.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    return dotted.split("."), value


def apply_override(cfg: dict, path: list[str], value) -> None:
    over: Any = value
    for part in reversed(path):
        over = {part: over}
    merged = _merge(cfg, over, "")
    cfg.clear()
    cfg.update(merged)


def resolve(path=None, overrides=()) -> dict:
    """Defaults, then the file, then each override in order (later wins)."""
    cfg = _merge(DEFAULTS, read_config(path) if path else {}, "")
    for item in overrides:
        keys, value = item if isinstance(item, tuple) else parse_override(item)
        apply_override(cfg, list(keys), value)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    try:
        model_config(cfg)
        AdapterConfig.from_dict(cfg["adapter"])
        TrainConfig.from_dict(cfg["train"])
        registry(cfg)
        DatagenPlan.from_dict(cfg["datagen"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    b = cfg["backend"]
    if b["kind"] not in BACKEND_KINDS:
        raise ConfigError(f"backend.kind must be one of {BACKEND_KINDS}")
    if b["kind"] == "http" and not (b["endpoint"] and b["model"]):
        raise ConfigError("backend.kind http needs backend.endpoint and backend.model")
    if not isinstance(b["parallelism"], int) or b["parallelism"] < 1:
        raise ConfigError("backend.parallelism must be a positive integer")
    if cfg["eval"]["agent"] not in ("local", "remote"):
        raise ConfigError("eval.agent must be local or remote")
    if cfg["eval"]["scale"] not in ("personality", "profession"):
        raise ConfigError("eval.scale must be personality or profession")
    if cfg["simulate"]["kind"] not in ("questionnaire", "debate"):
        raise ConfigError("simulate.kind must be questionnaire or debate")


def model_config(cfg: dict) -> ModelConfig:
    d = dict(cfg["model"])
    # the training precision decides the model precision unless the model section pins it
    d.setdefault("precision", cfg["train"].get("precision", "float32"))
    d.setdefault("seed", cfg["seed"])
    return ModelConfig.from_dict(d)


def train_config(cfg: dict) -> TrainConfig:
    d = dict(cfg["train"])
    d.setdefault("seed", cfg["seed"])
    d.setdefault("precision", model_config(cfg).precision)
    return TrainConfig.from_dict(d)


def adapter_config(cfg: dict) -> AdapterConfig:
    d = dict(cfg["adapter"])
    d.setdefault("seed", cfg["seed"])
    return AdapterConfig.from_dict(d)


def registry(cfg: dict) -> IdentityRegistry:
    return IdentityRegistry.from_dict(cfg["registry"])
