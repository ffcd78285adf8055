"""The biased nearest-neighbour walk on Z and its exact visit statistics.

The walk takes steps +1 with probability p and -1 otherwise, p != 1/2, so it
is transient with escape probability q = |2p - 1| (also the a.s. limit of
range/time).  For a finite site set A containing the origin, the total number
of visits N(A) has an exact phase-type law built from gambler's-ruin hitting
probabilities; a stopped Monte Carlo sampler is provided as an independent
cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream, counter_uniforms, derived_keys

__all__ = [
    "WalkParams",
    "WalkPath",
    "PhaseTypeLaw",
    "escape_prob",
    "simulate_walk",
    "range_count",
    "visit_count",
    "return_prob_zero",
    "hit_before",
    "visit_set_law",
    "sample_visit_counts",
]

_TAG_VISIT_MC = 0x564D43  # "VMC"


@dataclass(frozen=True)
class WalkParams:
    """Up-step probability p of the walk; p = 1/2 (recurrent walk) is rejected."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.p == 0.5:
            raise ValueError("p = 1/2 gives a recurrent walk (q = 0); not supported")

    @property
    def q(self) -> float:
        """Escape probability: chance of never revisiting the starting site."""
        return abs(2.0 * self.p - 1.0)

    @property
    def drift(self) -> float:
        return 2.0 * self.p - 1.0

    @property
    def rho(self) -> float:
        """Down/up odds (1-p)/p; powers of rho give return probabilities."""
        return (1.0 - self.p) / self.p


@dataclass(frozen=True, eq=False)
class WalkPath:
    """A realized trajectory S_0 .. S_n, starting at 0 with unit steps."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 1 or pos.size == 0:
            raise ValueError("positions must be a nonempty 1-d integer array")
        if pos[0] != 0:
            raise ValueError("walk must start at 0")
        if pos.size > 1 and np.any(np.abs(np.diff(pos)) != 1):
            raise ValueError("every step must be +1 or -1")

    @property
    def n(self) -> int:
        return self.positions.size - 1


def escape_prob(params: WalkParams) -> float:
    """q = |2p - 1|, the probability of never returning to the origin."""
    return params.q


def simulate_walk(params: WalkParams, n: int, rng: RngStream) -> WalkPath:
    """Simulate S_0 .. S_n with i.i.d. steps from the replicate stream ``rng``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    pos = np.zeros(n + 1, dtype=np.int64)
    if n:
        steps = np.where(rng.uniforms(n) < params.p, 1, -1)
        np.cumsum(steps, out=pos[1:])
    return WalkPath(pos)


def range_count(path: WalkPath) -> int:
    """Number of distinct visited sites (contiguous for unit steps)."""
    pos = path.positions
    return int(pos.max() - pos.min()) + 1


def visit_count(path: WalkPath, sites) -> int:
    """Number of times the path occupies a site of ``sites``."""
    sites = np.asarray(sorted(set(int(s) for s in sites)), dtype=np.int64)
    if sites.size == 0:
        raise ValueError("sites must be nonempty")
    return int(np.isin(path.positions, sites).sum())


def return_prob_zero(params: WalkParams, k: int) -> float:
    """P(S_k = 0): zero for odd k, central binomial term for even k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k % 2:
        return 0.0
    half = k // 2
    return math.comb(k, half) * (params.p * (1.0 - params.p)) ** half


def hit_before(params: WalkParams, a: int, b: int, x: int) -> float:
    """P(walk started at x reaches b before a), for a < x < b (gambler's ruin)."""
    if not a < x < b:
        raise ValueError(f"need a < x < b, got a={a}, x={x}, b={b}")
    rho = params.rho
    return (rho ** (x - a) - 1.0) / (rho ** (b - a) - 1.0)


@dataclass(frozen=True, eq=False)
class PhaseTypeLaw:
    """Exact law of the total visit count N(A) for a finite site set A.

    ``kernel[i, j]`` is the probability that, after leaving ``sites[i]``, the
    walk's next visit to A is at ``sites[j]`` (rows sum to < 1 where escape is
    possible).  ``pmf[j-1] = P(N(A) = j)`` for j = 1..j_max and ``tail`` is
    the mass beyond the truncation, so the masses telescope to 1.
    """

    sites: tuple
    kernel: np.ndarray
    start: int
    pmf: np.ndarray
    tail: float

    @property
    def j_max(self) -> int:
        return self.pmf.size

    def survival(self, j: int) -> float:
        """P(N(A) >= j) for 1 <= j <= j_max + 1."""
        if not 1 <= j <= self.j_max + 1:
            raise ValueError("j out of truncated range")
        return float(self.pmf[j - 1 :].sum() + self.tail)

    def mass_defect(self) -> float:
        return abs(1.0 - float(self.pmf.sum()) - self.tail)


def _return_kernel(p: float, sites: np.ndarray) -> np.ndarray:
    """Next-visit kernel for an up-drift walk (p > 1/2) on sorted sites."""
    rho = (1.0 - p) / p
    m = sites.size
    kernel = np.zeros((m, m))
    for i, a in enumerate(sites):
        if i + 1 < m:
            b = int(sites[i + 1])
            if b == a + 1:
                kernel[i, i + 1] += p
            else:
                h = (rho - 1.0) / (rho ** (b - a) - 1.0)  # hit b before a, from a+1
                kernel[i, i + 1] += p * h
                kernel[i, i] += p * (1.0 - h)
        else:
            kernel[i, i] += p * rho  # from above the top site, return has prob rho
        if i > 0:
            c = int(sites[i - 1])
            if c == a - 1:
                kernel[i, i - 1] += 1.0 - p
            else:
                h = (rho ** (a - 1 - c) - 1.0) / (rho ** (a - c) - 1.0)
                kernel[i, i] += (1.0 - p) * h
                kernel[i, i - 1] += (1.0 - p) * (1.0 - h)
        else:
            kernel[i, i] += 1.0 - p  # below the bottom site the drift brings it back
    return kernel


def _normalize_sites(sites) -> np.ndarray:
    arr = np.asarray(sorted(set(int(s) for s in sites)), dtype=np.int64)
    if arr.size == 0:
        raise ValueError("site set must be nonempty")
    if 0 not in arr:
        raise ValueError("site set must contain the origin")
    return arr


def visit_set_law(params: WalkParams, sites, j_max: int) -> PhaseTypeLaw:
    """Exact pmf of N(A) for the walk started at 0, truncated at ``j_max``.

    Down-drift walks are handled by mirroring (p -> 1-p, A -> -A), which
    leaves the visit-count law unchanged.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    arr = _normalize_sites(sites)
    p = params.p
    work = arr if p > 0.5 else np.sort(-arr)
    kernel = _return_kernel(max(p, 1.0 - p), work)
    start = int(np.searchsorted(work, 0))
    escape = 1.0 - kernel.sum(axis=1)
    weights = np.zeros(work.size)
    weights[start] = 1.0
    pmf = np.empty(j_max)
    for j in range(j_max):
        pmf[j] = weights @ escape
        weights = weights @ kernel
    return PhaseTypeLaw(
        sites=tuple(int(s) for s in arr),
        kernel=kernel,
        start=start,
        pmf=pmf,
        tail=float(weights.sum()),
    )


def sample_visit_counts(
    params: WalkParams,
    sites,
    reps: int,
    rng: RngStream,
    tol: float = 1e-9,
    block: int = 128,
    max_steps: int = 1 << 22,
) -> np.ndarray:
    """Monte Carlo visit counts N(A) with a drift-based stopping rule.

    Each replicate walk stops once it passes the drift-side extreme of A by a
    margin m with rho**m < tol, after which the chance of any further visit
    is below tol.  Independent of the phase-type construction.
    """
    arr = _normalize_sites(sites)
    p = params.p
    if p < 0.5:
        p = 1.0 - p
        arr = np.sort(-arr)
    rho = (1.0 - p) / p
    margin = int(np.ceil(np.log(tol) / np.log(rho)))
    stop_above = int(arr.max()) + margin
    counts = np.ones(reps, dtype=np.int64)  # S_0 = 0 is always a visit
    out_chunk = 1 << 16
    for r0 in range(0, reps, out_chunk):
        r1 = min(reps, r0 + out_chunk)
        keys = derived_keys(rng, _TAG_VISIT_MC, np.arange(r0, r1))
        pos = np.zeros(r1 - r0, dtype=np.int64)
        active = np.arange(r1 - r0)
        offset = 0
        col = np.arange(block)
        while active.size:
            u = counter_uniforms(
                keys[active, None], np.arange(offset, offset + block, dtype=np.uint64)
            )
            steps = np.where(u < p, 1, -1)
            path = pos[active, None] + np.cumsum(steps, axis=1)
            beyond = path > stop_above
            crossed = beyond.any(axis=1)
            first = np.where(crossed, beyond.argmax(axis=1), block)
            in_a = np.isin(path, arr)
            counts[r0 + active] += (in_a & (col[None, :] < first[:, None])).sum(axis=1)
            pos[active] = path[:, -1]
            active = active[~crossed]
            offset += block
            if offset > max_steps:
                raise RuntimeError("stop rule not reached; walk parameters degenerate")
    return counts
