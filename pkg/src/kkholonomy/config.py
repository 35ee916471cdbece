"""Run configuration: scenario selection, suites, tolerances and sampling sizes.

Configuration documents are YAML (JSON is accepted, being a subset).  A
document is either a run configuration::

    scenario: hopf-double          # or an inline scenario mapping
    suites: [holonomy]
    tolerances: {holonomy: 1.0e-6}
    grid: 16
    samples: 64

or a bare inline scenario definition (recognised by its ``base`` key).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

SUITES = ("brackets", "d-table", "curvature", "recurrent", "holonomy")

# Residual bounds per suite.  Each identity carries its own default bound;
# these are the headline values for the suite.  An override replaces the
# bound of every entry in its suite.
DEFAULT_TOLERANCES = {
    "brackets": 1e-9,
    "d-table": 1e-8,
    "curvature": 1e-7,
    "recurrent": 1e-8,
    "holonomy": 1e-6,
}
DEFAULT_GRID = 16
DEFAULT_SAMPLES = 64
DEFAULT_LOOPS = 4

_RUN_KEYS = {"scenario", "suites", "tolerances", "grid", "samples", "loops", "out", "plots"}


class ConfigError(ValueError):
    """Invalid configuration or usage; maps to exit code 2."""


@dataclass
class RunConfig:
    scenario: str | dict
    suites: list[str] = field(default_factory=lambda: list(SUITES))
    tolerances: dict[str, float] = field(default_factory=dict)
    grid: int = DEFAULT_GRID
    samples: int = DEFAULT_SAMPLES
    loops: int = DEFAULT_LOOPS
    out: str | None = None
    plots: str | None = None

    def __post_init__(self):
        self.suites = normalise_suites(self.suites)
        for k, v in self.tolerances.items():
            if k not in SUITES:
                raise ConfigError(f"tolerance for unknown suite {k!r}")
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance for {k!r} must be a positive number, got {v!r}")
        self.tolerances = {k: float(v) for k, v in self.tolerances.items()}
        for key in ("grid", "samples", "loops"):
            val = getattr(self, key)
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"{key} must be a positive integer, got {val!r}")
        if self.grid < 4:
            raise ConfigError("grid must be at least 4")
        if not isinstance(self.scenario, (str, dict)):
            raise ConfigError("scenario must be a catalog name or an inline definition")

    def echo(self) -> dict:
        """Configuration as recorded in the report (output locations excluded)."""
        return {
            "scenario": self.scenario,
            "suites": list(self.suites),
            "grid": self.grid,
            "samples": self.samples,
            "loops": self.loops,
            "tolerance_defaults": dict(DEFAULT_TOLERANCES),
            "tolerance_overrides": dict(sorted(self.tolerances.items())),
        }


def normalise_suites(suites) -> list[str]:
    if isinstance(suites, str):
        suites = [suites]
    out = []
    for s in suites:
        if s == "all":
            out.extend(SUITES)
        elif s in SUITES:
            out.append(s)
        else:
            raise ConfigError(f"unknown suite {s!r}; choose from {', '.join(SUITES)} or all")
    # run order is fixed, duplicates dropped
    return [s for s in SUITES if s in out]


def parse_tolerance(text: str) -> tuple[str, float]:
    """'suite=value' -> (suite, value)."""
    name, sep, val = text.partition("=")
    if not sep:
        raise ConfigError(f"tolerance override {text!r} is not of the form suite=value")
    try:
        v = float(val)
    except ValueError:
        raise ConfigError(f"tolerance override {text!r} has a non-numeric value") from None
    return name.strip(), v


def load_document(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def from_mapping(doc: dict) -> RunConfig:
    if "base" in doc:
        return RunConfig(scenario=doc)
    extra = set(doc) - _RUN_KEYS
    if extra:
        raise ConfigError(f"unknown configuration keys {sorted(extra)}")
    if "scenario" not in doc:
        raise ConfigError("configuration needs a scenario")
    kwargs = dict(doc)
    if "suites" in kwargs and kwargs["suites"] is None:
        del kwargs["suites"]
    kwargs["tolerances"] = dict(kwargs.get("tolerances") or {})
    return RunConfig(**kwargs)


def resolve(scenario: str, suites=None, grid=None, samples=None, tolerances=(), out=None, plots=None) -> RunConfig:
    """Combine a catalog name or config path with command-line overrides."""
    if Path(scenario).suffix in (".yaml", ".yml", ".json") or Path(scenario).is_file():
        cfg = from_mapping(load_document(scenario))
    else:
        cfg = RunConfig(scenario=scenario)
    if suites is not None:
        cfg.suites = normalise_suites(suites)
    if grid is not None:
        cfg.grid = grid
    if samples is not None:
        cfg.samples = samples
    tol = dict(cfg.tolerances)
    for text in tolerances:
        k, v = parse_tolerance(text)
        tol[k] = v
    cfg.tolerances = tol
    cfg.out = out if out is not None else cfg.out
    cfg.plots = plots if plots is not None else cfg.plots
    cfg.__post_init__()
    return cfg
