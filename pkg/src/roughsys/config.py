"""Scenario configuration: YAML files with nested blocks."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, IoError

SCENARIOS = ("dirichlet-l2", "diagnose", "equivalence", "carleson-scan", "lp-sweep", "good-lambda")

DEFAULTS = {
    "domain": {"n": 2, "N": 1, "h": 1.0, "period": 1.0, "resolutions": [64], "phi": {"kind": "flat"}},
    "coeffs": {"kind": "identity"},
    "data": {"f": [{"kind": "fourier", "k": 1}]},
    "cones": {"a": 1.0, "b": None, "truncation": None},
    "solver": {"tol": 1e-10, "max_iter": None, "method": "auto"},
    "params": {},
    "seed": 0,
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ScenarioConfig:
    scenario: str
    domain: dict
    coeffs: dict
    data: dict
    cones: dict
    solver: dict
    params: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def a(self) -> float:
        return float(self.cones["a"])

    @property
    def b(self) -> float:
        b = self.cones.get("b")
        return 2.0 * self.a if b is None else float(b)

    @property
    def data_specs(self) -> list:
        f = self.data.get("f", [])
        return list(f) if isinstance(f, list) else [f]

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "domain": self.domain, "coeffs": self.coeffs,
                "data": self.data, "cones": self.cones, "solver": self.solver,
                "params": self.params, "seed": self.seed}

    def hash(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(raw) - set(DEFAULTS) - {"scenario"}
    if unknown:
        raise ConfigError(f"unknown configuration blocks: {sorted(unknown)}")
    merged = _merge(DEFAULTS, raw)
    scenario = merged.get("scenario", "dirichlet-l2")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    cfg = ScenarioConfig(scenario, merged["domain"], merged["coeffs"], merged["data"],
                         merged["cones"], merged["solver"], merged["params"] or {},
                         int(merged["seed"]))
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig):
    d = cfg.domain
    if d.get("n") not in (2, 3):
        raise ConfigError("domain.n must be 2 or 3")
    if not (float(d.get("h", 0)) > 0 and float(d.get("period", 0)) > 0):
        raise ConfigError("domain.h and domain.period must be positive")
    res = d.get("resolutions")
    if not res or any(int(r) < 4 for r in res):
        raise ConfigError("domain.resolutions must list grid sizes of at least 4")
    if cfg.coeffs.get("kind") == "lame" and int(d.get("N", d["n"])) != d["n"]:
        raise ConfigError("the Lamé system needs domain.N equal to domain.n")
    if not cfg.a > 0:
        raise ConfigError("cones.a must be positive")
    if cfg.cones.get("b") is not None and not cfg.b > cfg.a:
        raise ConfigError("cones.b must exceed cones.a")
    if not float(cfg.solver.get("tol", 1e-10)) > 0:
        raise ConfigError("solver.tol must be positive")


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read configuration {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(raw or {})
