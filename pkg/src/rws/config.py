"""Experiment configuration: a flat key = value text format.

Example::

    # biased walk in an i.i.d. Pareto scenery
    p = 0.75
    scenery = iid(pareto:alpha=1.0)
    tau = 1.0
    n = 100000
    replicates = 10000
    seed = 20240817
    estimators = logmax, clusters
    output = out

Rules for n-dependent knobs (``k_n``, ``gap``, ``s_n``, ``alpha_ell``) accept
``auto``, an integer literal, or ``pow:EXPONENT``; they resolve per n so the
same config drives sweeps.  The environment variable RWS_SEED overrides the
seed (for CI).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from . import evt
from .diagnostics import default_block_count
from .scenery import SceneryModel, parse_scenery

__all__ = ["ExperimentConfig", "ConfigError", "parse_config", "load_config", "format_config"]

ESTIMATOR_NAMES = ("logmax", "runs", "clusters", "dk", "alpha", "concentration", "limits")


class ConfigError(Exception):
    """Validation failure(s) with line and field attribution."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self._format(e) for e in self.errors))

    @staticmethod
    def _format(err):
        line, fieldname, message = err
        where = f"line {line}" if line else "config"
        return f"{where}: {fieldname}: {message}"


@dataclass(frozen=True)
class ExperimentConfig:
    p: float = 0.75
    scenery: str = "iid(pareto:alpha=1.0)"
    tau: float = 1.0
    n: int = 10_000
    n_grid: tuple = ()
    replicates: int = 1_000
    seed: int = 1
    estimators: tuple = ("logmax",)
    output: str = "rws-out"
    k_n: str = "auto"
    j_max: int = 10
    gap: str = "auto"
    s_n: str = "auto"
    dk_k: int = 2
    alpha_ell: str = "auto"
    beta: float = 0.75
    ell_exponent: float = 0.9

    def scenery_model(self, seed: int | None = None) -> SceneryModel:
        return parse_scenery(self.scenery, seed=self.seed if seed is None else seed)

    @property
    def q(self) -> float:
        return abs(2.0 * self.p - 1.0)

    def _resolve_rule(self, name: str, rule: str, n: int) -> int:
        if rule == "auto":
            if name == "k_n":
                return evt.default_block_length(n)
            if name == "gap":
                return evt.default_gap(n, self.q)
            if name == "s_n":
                return default_block_count(n)
            return math.ceil(n**0.75)  # alpha_ell
        if rule.startswith("pow:"):
            return max(1, int(n ** float(rule[4:])))
        return int(rule)

    def k_n_for(self, n: int) -> int:
        return self._resolve_rule("k_n", self.k_n, n)

    def gap_for(self, n: int) -> int:
        return self._resolve_rule("gap", self.gap, n)

    def s_n_for(self, n: int) -> int:
        return self._resolve_rule("s_n", self.s_n, n)

    def alpha_ell_for(self, n: int) -> int:
        return self._resolve_rule("alpha_ell", self.alpha_ell, n)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        kwargs = dict(d)
        for key in ("n_grid", "estimators"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return ExperimentConfig(**kwargs)


_INT_KEYS = {"n", "replicates", "seed", "j_max", "dk_k"}
_FLOAT_KEYS = {"p", "tau", "beta", "ell_exponent"}
_RULE_KEYS = {"k_n", "gap", "s_n", "alpha_ell"}
_STR_KEYS = {"scenery", "output"}


def _parse_rule(value: str) -> str:
    value = value.strip()
    if value == "auto":
        return value
    if value.startswith("pow:"):
        float(value[4:])  # may raise ValueError
        return value
    int(value)
    return value


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    values: dict = {}
    errors: list = []
    lines_seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((lineno, "syntax", f"expected key = value, got {raw.strip()!r}"))
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        lines_seen[key] = lineno
        try:
            if key == "estimators":
                names = tuple(s.strip() for s in value.split(",") if s.strip())
                bad = [s for s in names if s not in ESTIMATOR_NAMES]
                if bad:
                    raise ValueError(
                        f"unknown estimator(s) {bad}; known: {', '.join(ESTIMATOR_NAMES)}"
                    )
                values["estimators"] = names
            elif key == "n" and "," in value:
                grid = tuple(int(float(s)) for s in value.split(","))
                values["n_grid"] = grid
                values["n"] = grid[-1]
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _RULE_KEYS:
                values[key] = _parse_rule(value)
            elif key in _STR_KEYS:
                values[key] = value
            else:
                raise ValueError("unknown configuration key")
        except ValueError as exc:
            errors.append((lineno, key, str(exc)))
    if errors:
        raise ConfigError(errors)
    cfg = replace(ExperimentConfig(), **values)
    errors.extend(validate(cfg, lines_seen))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: ExperimentConfig, lines: dict | None = None) -> list:
    """Semantic validation; returns (line, field, message) triples."""
    lines = lines or {}
    errors = []

    def err(fieldname, message):
        errors.append((lines.get(fieldname, 0), fieldname, message))

    if not 0.0 < cfg.p < 1.0:
        err("p", f"p must lie in (0, 1), got {cfg.p}")
    elif cfg.p == 0.5:
        err("p", "p = 1/2 gives a recurrent walk; only transient walks are supported")
    try:
        cfg.scenery_model()
    except ValueError as exc:
        err("scenery", str(exc))
    for n in (cfg.n, *cfg.n_grid):
        if n < 1:
            err("n", f"horizon must be >= 1, got {n}")
        elif not cfg.tau < n:
            err("tau", f"tau={cfg.tau} >= n={n}: no valid exceedance level")
        else:
            try:
                if cfg.k_n_for(n) >= n:
                    err("k_n", f"k_n={cfg.k_n_for(n)} >= n={n}: block must be o(n)")
            except ValueError as exc:
                err("k_n", str(exc))
    if cfg.tau <= 0:
        err("tau", f"tau must be positive, got {cfg.tau}")
    if cfg.replicates < 1:
        err("replicates", "replicates must be >= 1")
    if cfg.j_max < 2:
        err("j_max", "j_max must be >= 2")
    if cfg.dk_k < 1:
        err("dk_k", "dk_k must be >= 1")
    if not 0.5 < cfg.beta < 1.0:
        err("beta", f"beta must lie in (1/2, 1), got {cfg.beta}")
    if not 0.0 < cfg.ell_exponent < 1.0:
        err("ell_exponent", "ell_exponent must lie in (0, 1)")
    return errors


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    env_seed = os.environ.get("RWS_SEED")
    if env_seed is not None:
        cfg = replace(cfg, seed=int(env_seed))
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse_config(format_config(c)) == c."""
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "n_grid":
            continue
        if f.name == "n" and cfg.n_grid:
            out.append(f"n = {', '.join(str(x) for x in cfg.n_grid)}")
            continue
        if f.name == "estimators":
            out.append(f"estimators = {', '.join(v)}")
            continue
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"
