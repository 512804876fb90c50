"""Flat INI experiment configuration.

Grammar (every key optional; unknown sections or keys are an error)::

    [experiment]
    d = 2
    n_grid = 8, 16, 32, 64
    replications = 200
    eta = 0.5
    alpha = auto            ; or a number in (0, 1/6)
    box_factor = 2          ; or auto (= 8 mu_sup / beta1)
    master_seed = 20240611
    max_edges = 20000000
    subseq_eps = 0.05

    [schedule]
    rule = constant         ; constant | periodic | coordinate
    specs = shifted-uniform(0.5, 1.5)   ; several specs separated by ';'

    [bounds]
    n_values = 8, 16, 32, 64, 128

    [probe]
    n = 32
    probes = 1000
    target = uniform        ; uniform | path

Overrides use ``section.key=value`` or a bare ``key=value`` when the key name
is unique across sections.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .harness import ConfigError, ExperimentConfig
from .passage import DistributionError, DistributionSchedule, ScheduleError, parse_specs

DEFAULTS: dict[str, dict[str, str]] = {
    "experiment": {
        "d": "2",
        "n_grid": "8, 16, 32, 64",
        "replications": "200",
        "eta": "0.5",
        "alpha": "auto",
        "box_factor": "2",
        "master_seed": "20240611",
        "max_edges": "20000000",
        "subseq_eps": "0.05",
    },
    "schedule": {
        "rule": "constant",
        "specs": "shifted-uniform(0.5, 1.5)",
    },
    "bounds": {
        "n_values": "8, 16, 32, 64, 128",
    },
    "probe": {
        "n": "32",
        "probes": "1000",
        "target": "uniform",
    },
}


@dataclass
class LabConfig:
    experiment: ExperimentConfig
    bound_n_values: tuple[int, ...]
    probe_n: int
    probes: int
    probe_target: str
    raw: dict[str, dict[str, str]]
    overrides: list[str] = field(default_factory=list)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _num_or_auto(text: str) -> float | str:
    text = text.strip()
    return "auto" if text == "auto" else float(text)


def apply_override(raw: dict[str, dict[str, str]], item: str) -> None:
    key, sep, value = item.partition("=")
    if not sep:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key = key.strip()
    if "." in key:
        section, name = key.split(".", 1)
    else:
        owners = [s for s, keys in DEFAULTS.items() if key in keys]
        if len(owners) != 1:
            raise ConfigError(f"override key {key!r} is unknown or ambiguous; use section.key")
        section, name = owners[0], key
    if section not in DEFAULTS or name not in DEFAULTS[section]:
        raise ConfigError(f"unknown config key {section}.{name}")
    raw[section][name] = value.strip()


def load_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> LabConfig:
    raw = {s: dict(v) for s, v in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"),
                                           interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for name, value in parser.items(section):
                if name not in DEFAULTS[section]:
                    raise ConfigError(f"unknown config key {section}.{name}")
                raw[section][name] = value
    for item in overrides:
        apply_override(raw, item)
    return build(raw, list(overrides))


def build(raw: dict[str, dict[str, str]], overrides: list[str]) -> LabConfig:
    ex, sc = raw["experiment"], raw["schedule"]
    try:
        schedule = DistributionSchedule(parse_specs(sc["specs"]), sc["rule"].strip())
        exp = ExperimentConfig(
            schedule=schedule,
            d=int(ex["d"]),
            n_grid=_ints(ex["n_grid"]),
            replications=int(ex["replications"]),
            eta=float(ex["eta"]),
            alpha=_num_or_auto(ex["alpha"]),
            box_factor=_num_or_auto(ex["box_factor"]),
            master_seed=int(ex["master_seed"]),
            max_edges=int(ex["max_edges"]),
            subseq_eps=float(ex["subseq_eps"]),
        )
        probe = raw["probe"]
        target = probe["target"].strip()
        if target not in ("uniform", "path"):
            raise ConfigError("probe.target must be 'uniform' or 'path'")
        return LabConfig(exp, _ints(raw["bounds"]["n_values"]), int(probe["n"]),
                         int(probe["probes"]), target, raw, overrides)
    except (ValueError, DistributionError, ScheduleError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
