"""Experiment configuration: one JSON file, fully overridable by flags.

The file has three sections ("gen", "train", "paths"), each mapping
onto a dataclass; unknown keys anywhere are rejected so typos fail
loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .synthgen import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent experiment configuration."""


@dataclass
class PathsConfig:
    dataset: str = "dataset.json"
    checkpoint: str = "model.json"
    report_dir: str = "reports"


@dataclass
class ExperimentConfig:
    gen: SynthConfig = field(default_factory=SynthConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTIONS = {"gen": SynthConfig, "train": TrainConfig, "paths": PathsConfig}

_TUPLE_FIELDS = {"n_range", "p_range", "branch_range", "removal_range", "class_counts"}


def _build_section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS:
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"config: unknown sections {sorted(unknown)}")
    kwargs = {
        name: _build_section(cls, doc.get(name, {}), name) for name, cls in _SECTIONS.items()
    }
    return ExperimentConfig(**kwargs)


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig):
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        for key, value in section.items():
            if isinstance(value, tuple):
                section[key] = list(value)
        out[name] = section
    return out


def apply_overrides(cfg: ExperimentConfig, overrides):
    """Apply {'section.key': value} pairs; None values are ignored."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        section_name, _, key = dotted.partition(".")
        section = getattr(cfg, section_name)
        if key not in {f.name for f in fields(section)}:
            raise ConfigError(f"unknown config field {dotted!r}")
        if key in _TUPLE_FIELDS:
            value = tuple(value)
        setattr(section, key, value)
    return cfg
