"""Continuous marginal distributions with closed-form CDF, quantile and tails.

Only continuous, strictly increasing CDFs are shipped: this guarantees that a
level u with n * P(X > u) = tau exists for every tau and makes the threshold
exact instead of asymptotic.  Discrete marginals are rejected at parse time.

All four families expose the same quartet of methods, each written to stay
accurate in the regime it is actually used in:

* ``cdf`` / ``sf``  — distribution and survival function (sf precise for
  tiny tail probabilities),
* ``quantile``      — inverse CDF on (0, 1),
* ``isf``           — inverse survival function, the primitive behind exact
  thresholds u = isf(tau / n).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .rng import RngStream

__all__ = [
    "Pareto",
    "Exponential",
    "Uniform01",
    "Frechet",
    "MaxOf",
    "Marginal",
    "parse_marginal",
    "format_marginal",
    "sample_tail",
    "sample_below",
]


def _check_prob(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return p


@dataclass(frozen=True)
class Pareto:
    """Pareto law on [1, inf) with survival function x**-alpha."""

    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"Pareto shape must be positive, got {self.alpha}")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = -np.expm1(-self.alpha * np.log(np.maximum(x, 1.0)))
        return np.where(x < 1.0, 0.0, out)

    def sf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < 1.0, 1.0, np.maximum(x, 1.0) ** -self.alpha)

    def quantile(self, p):
        p = _check_prob(p)
        return np.exp(-np.log1p(-p) / self.alpha)

    def isf(self, s):
        s = _check_prob(s)
        return s ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class Exponential:
    """Exponential law on [0, inf)."""

    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"Exponential rate must be positive, got {self.rate}")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < 0.0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))

    def sf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < 0.0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def quantile(self, p):
        p = _check_prob(p)
        return -np.log1p(-p) / self.rate

    def isf(self, s):
        s = _check_prob(s)
        return -np.log(s) / self.rate


@dataclass(frozen=True)
class Uniform01:
    """Uniform law on [0, 1] (identity CDF)."""

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def quantile(self, p):
        return _check_prob(p) + 0.0

    def isf(self, s):
        return 1.0 - _check_prob(s)


@dataclass(frozen=True)
class Frechet:
    """Frechet law on (0, inf) with CDF exp(-x**-alpha)."""

    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"Frechet shape must be positive, got {self.alpha}")

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = np.exp(-np.where(x > 0.0, x, np.inf) ** -self.alpha)
        return out

    def sf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = -np.expm1(-np.where(x > 0.0, x, np.inf) ** -self.alpha)
        return out

    def quantile(self, p):
        p = _check_prob(p)
        return (-np.log(p)) ** (-1.0 / self.alpha)

    def isf(self, s):
        s = _check_prob(s)
        return (-np.log1p(-s)) ** (-1.0 / self.alpha)


@dataclass(frozen=True)
class MaxOf:
    """Law of the maximum of ``count`` i.i.d. copies of ``base`` (CDF F**count).

    This is the marginal of a window-maximum scenery value; ``isf`` is kept
    accurate for tail probabilities as small as machine precision allows.
    """

    base: "Marginal"
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")

    def cdf(self, x):
        with np.errstate(divide="ignore"):
            return np.exp(self.count * np.log(self.base.cdf(x)))

    def sf(self, x):
        return -np.expm1(self.count * np.log1p(-self.base.sf(x)))

    def quantile(self, p):
        p = _check_prob(p)
        return self.base.quantile(np.exp(np.log(p) / self.count))

    def isf(self, s):
        s = _check_prob(s)
        return self.base.isf(-np.expm1(np.log1p(-s) / self.count))


Marginal = Union[Pareto, Exponential, Uniform01, Frechet, MaxOf]


_MARGINAL_RE = re.compile(
    r"^\s*(pareto|exp|uniform01|frechet)\s*(?::\s*(\w+)\s*=\s*([^\s,)]+)\s*)?$"
)


def parse_marginal(text: str) -> Marginal:
    """Parse ``pareto:alpha=1.0`` / ``exp:rate=1.0`` / ``uniform01`` / ``frechet:alpha=1.0``.

    Anything outside this catalog (in particular any discrete law) is rejected:
    discrete marginals can break the existence of exact exceedance thresholds.
    """
    m = _MARGINAL_RE.match(text)
    if m is None:
        raise ValueError(
            f"unknown marginal {text!r}: expected pareto:alpha=A, exp:rate=R, "
            "uniform01 or frechet:alpha=A (continuous marginals only)"
        )
    kind, pname, pval = m.groups()
    if kind == "uniform01":
        if pname is not None:
            raise ValueError("uniform01 takes no parameter")
        return Uniform01()
    if pname is None or pval is None:
        raise ValueError(f"marginal {kind!r} needs a parameter")
    try:
        value = float(pval)
    except ValueError:
        raise ValueError(f"bad numeric parameter {pval!r} in marginal {text!r}")
    if kind == "pareto":
        if pname != "alpha":
            raise ValueError(f"pareto takes alpha=, got {pname!r}")
        return Pareto(alpha=value)
    if kind == "exp":
        if pname != "rate":
            raise ValueError(f"exp takes rate=, got {pname!r}")
        return Exponential(rate=value)
    if pname != "alpha":
        raise ValueError(f"frechet takes alpha=, got {pname!r}")
    return Frechet(alpha=value)


def format_marginal(m: Marginal) -> str:
    """Inverse of :func:`parse_marginal` (for lossless config echos)."""
    if isinstance(m, Pareto):
        return f"pareto:alpha={m.alpha!r}"
    if isinstance(m, Exponential):
        return f"exp:rate={m.rate!r}"
    if isinstance(m, Uniform01):
        return "uniform01"
    if isinstance(m, Frechet):
        return f"frechet:alpha={m.alpha!r}"
    raise ValueError(f"cannot format marginal {m!r}")


def sample_tail(marginal: Marginal, u: float, rng: RngStream, count: int | None = None):
    """Draw from ``marginal`` conditioned on exceeding ``u`` (inverse-CDF on the tail).

    Returns a scalar when ``count`` is None, else an array of that length.
    """
    s = float(marginal.sf(u))
    if not s > 0.0:
        raise ValueError(f"threshold u={u!r} is at or beyond the upper endpoint")
    n = 1 if count is None else count
    w = 1.0 - rng.uniforms(n)  # in (0, 1]
    x = np.maximum(marginal.isf(s * w), np.nextafter(u, np.inf))
    return float(x[0]) if count is None else x


def sample_below(marginal: Marginal, u: float, rng: RngStream, count: int, start: int = 0):
    """Draw from ``marginal`` conditioned on not exceeding ``u``."""
    c = float(marginal.cdf(u))
    if not c > 0.0:
        raise ValueError(f"threshold u={u!r} is at or below the lower endpoint")
    v = rng.uniforms(count, start=start)
    return np.minimum(marginal.quantile(np.maximum(c * v, 1e-300)), u)
