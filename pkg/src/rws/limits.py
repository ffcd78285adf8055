"""Exact limit objects: extremal index, cluster-size laws, compound Poisson.

The limiting exceedance process is compound Poisson on [0, 1]: cluster
centers form a Poisson process of intensity theta * tau and each center
carries an integer mark with the cluster-size law pi.  For the i.i.d.
scenery pi is geometric with the escape probability q; for the window-k
moving-maximum scenery pi mixes the visit-count laws of the k+1 integer
intervals of length k+1 containing the origin.

All pmfs are truncated with an explicit, tracked mass deficit; nothing is
silently renormalized.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import RngStream
from .walk import WalkParams, visit_set_law

__all__ = [
    "ClusterLaw",
    "CountLaw",
    "CompoundPoissonSpec",
    "theta",
    "cluster_law_iid",
    "cluster_law_moving_max",
    "pi_from_p",
    "sample_compound_poisson",
    "sample_compound_poisson_batch",
    "compound_count_law",
    "laplace_functional",
    "tv_distance",
]


@dataclass(frozen=True, eq=False)
class ClusterLaw:
    """Cluster-size pmf on {1, 2, ...}: pmf[j-1] = pi(j), truncated with the
    missing mass recorded in ``deficit``."""

    pmf: np.ndarray
    deficit: float

    @property
    def j_max(self) -> int:
        return self.pmf.size

    def mean(self) -> float:
        j = np.arange(1, self.j_max + 1)
        return float(j @ self.pmf)


@dataclass(frozen=True, eq=False)
class CountLaw:
    """Total-count pmf on {0, 1, ...}: pmf[m] = P(total = m), plus deficit."""

    pmf: np.ndarray
    deficit: float


@dataclass(frozen=True, eq=False)
class CompoundPoissonSpec:
    """Intensity of cluster centers on [0,1] and the mark (cluster-size) law."""

    intensity: float
    cluster: ClusterLaw

    def __post_init__(self):
        if not self.intensity > 0.0:
            raise ValueError(f"intensity must be positive, got {self.intensity}")


def theta(sigma: float, q: float) -> float:
    """Extremal index of the composed sequence: scenery index times escape
    probability."""
    if not 0.0 < sigma <= 1.0:
        raise ValueError(f"scenery extremal index must lie in (0, 1], got {sigma}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"escape probability must lie in (0, 1), got {q}")
    return sigma * q


def cluster_law_iid(q: float, j_max: int) -> ClusterLaw:
    """Geometric cluster law pi(j) = q (1-q)**(j-1): runs of returns to one
    exceeding site."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    j = np.arange(1, j_max + 1)
    pmf = q * (1.0 - q) ** (j - 1)
    return ClusterLaw(pmf=pmf, deficit=float((1.0 - q) ** j_max))


def cluster_law_moving_max(params: WalkParams, window: int, j_max: int) -> ClusterLaw:
    """Cluster law of the window-``window`` moving-maximum scenery.

    Averages the telescoped visit-count laws over the window+1 integer
    intervals of length window+1 containing 0 ({-m, .., window-m} for
    m = 0..window), divided by q.  Interval sets are the ones produced by
    conditioning on which Y value in the window exceeds.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    q = params.q
    pmf = np.zeros(j_max)
    deficit_tail = 0.0
    for m in range(window + 1):
        sites = range(-m, window - m + 1)
        law = visit_set_law(params, sites, j_max + 1)
        pmf += (law.pmf[:j_max] - law.pmf[1:]) / q
        deficit_tail += law.pmf[j_max] / q
    return ClusterLaw(pmf=pmf, deficit=float(deficit_tail))


def pi_from_p(p_vec: np.ndarray, theta_value: float) -> ClusterLaw:
    """Recover the cluster law from limiting block-count probabilities:
    pi(j) = (p(j) - p(j+1)) / theta.

    ``p_vec[j-1]`` holds p(j) for j = 1..len(p_vec); the output has one entry
    fewer.  Entries negative beyond numerical noise (a monotonicity violation
    in estimated input) are kept but flagged with a warning.
    """
    if not theta_value > 0.0:
        raise ValueError(f"theta must be positive, got {theta_value}")
    p = np.asarray(p_vec, dtype=np.float64)
    if p.size < 2:
        raise ValueError("need p(j) for at least j = 1, 2")
    pmf = np.diff(-p) / theta_value
    if pmf.min() < -1e-9:
        warnings.warn(
            "pi_from_p: negative cluster mass beyond numerical noise "
            f"(min {pmf.min():.3g}); input p-vector is not nonincreasing",
            stacklevel=2,
        )
    total = float(pmf.sum())
    if abs(total) < 1e-300 and np.allclose(p, p[0]):
        warnings.warn("pi_from_p: constant p-vector gives a degenerate zero law",
                      stacklevel=2)
    return ClusterLaw(pmf=pmf, deficit=1.0 - total)


def _poisson_pmf_table(lam: float, tail: float = 1e-15) -> np.ndarray:
    probs = [math.exp(-lam)]
    while sum(probs) < 1.0 - tail:
        probs.append(probs[-1] * lam / len(probs))
        if len(probs) > 10_000:
            break
    return np.asarray(probs)


def sample_compound_poisson(
    spec: CompoundPoissonSpec, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """One realization: (center positions in [0,1), integer marks)."""
    centers, marks, _ = sample_compound_poisson_batch(spec, 1, rng)
    return centers, marks


def sample_compound_poisson_batch(
    spec: CompoundPoissonSpec, draws: int, rng: RngStream
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``draws`` independent realizations in flat form.

    Returns (centers, marks, offsets) where realization i owns the slice
    offsets[i]:offsets[i+1] of the flat center/mark arrays.
    """
    lam = spec.intensity
    pois = _poisson_pmf_table(lam)
    cum_pois = np.cumsum(pois)
    counts = np.searchsorted(cum_pois, rng.derive(1).uniforms(draws), side="right")
    offsets = np.zeros(draws + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    centers = rng.derive(2).uniforms(total)
    cum_marks = np.cumsum(spec.cluster.pmf)
    u = rng.derive(3).uniforms(total)
    marks = 1 + np.searchsorted(cum_marks, u, side="right")
    marks = np.minimum(marks, spec.cluster.j_max)  # deficit-mass draws clip to j_max
    return centers, marks, offsets


def compound_count_law(spec: CompoundPoissonSpec, n_max: int) -> CountLaw:
    """Law of the total mass sum(marks) by Poisson-weighted convolution powers.

    P(total = m) = sum_c e^{-lam} lam^c / c! * pi^{*c}(m); the c = 0 term
    puts exactly e^{-lam} at zero.  Convolutions and the Poisson sum are
    truncated with the missing weight absorbed into the deficit.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    lam = spec.intensity
    cluster = np.zeros(n_max + 1)
    upto = min(spec.cluster.j_max, n_max)
    cluster[1 : upto + 1] = spec.cluster.pmf[:upto]
    pmf = np.zeros(n_max + 1)
    weight = math.exp(-lam)
    power = np.zeros(n_max + 1)
    power[0] = 1.0
    c = 0
    accounted = 0.0
    while True:
        pmf += weight * power
        accounted += weight
        c += 1
        if c > n_max or 1.0 - accounted < 1e-15:
            break
        power = np.convolve(power, cluster)[: n_max + 1]
        weight *= lam / c
    return CountLaw(pmf=pmf, deficit=float(max(0.0, 1.0 - pmf.sum())))


def laplace_functional(spec: CompoundPoissonSpec, pieces) -> float:
    """Laplace functional of the limit process at a step function on [0, 1].

    ``pieces`` is a sequence of (width, value) pairs with nonnegative widths
    summing to at most 1 and nonnegative values; the result is
    exp(-intensity * sum(width * (1 - L_pi(value)))) with L_pi the Laplace
    transform of the cluster law.
    """
    widths = np.array([w for w, _ in pieces], dtype=np.float64)
    values = np.array([v for _, v in pieces], dtype=np.float64)
    if np.any(widths < 0.0) or widths.sum() > 1.0 + 1e-12:
        raise ValueError("piece widths must be nonnegative with total <= 1")
    if np.any(values < 0.0):
        raise ValueError("step function must be nonnegative")
    j = np.arange(1, spec.cluster.j_max + 1)
    lap = np.exp(-np.outer(values, j)) @ spec.cluster.pmf
    exponent = spec.intensity * float(widths @ (1.0 - lap))
    return math.exp(-exponent)


def tv_distance(a, b, deficit_a: float = 0.0, deficit_b: float = 0.0) -> float:
    """Total variation between truncated pmfs aligned at the same first index:
    half the absolute difference summed, plus half the deficit gap."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    size = max(a.size, b.size)
    pa = np.zeros(size)
    pb = np.zeros(size)
    pa[: a.size] = a
    pb[: b.size] = b
    return 0.5 * float(np.abs(pa - pb).sum()) + 0.5 * abs(deficit_a - deficit_b)
