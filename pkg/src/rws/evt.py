"""Thresholds, exceedance processes, maxima and cluster-size statistics.

The exact threshold u solves n * P(xi(0) > u) = tau through the closed-form
inverse survival function of the scenery marginal, so the exceedance rate is
pinned at every n instead of only asymptotically.

Replicate simulation is organized as chunked kernels over per-replicate
streams keyed by replicate index: results are deterministic for a fixed
(seed, configuration) regardless of chunking or worker count.  Exceedance
indicators compare the site's underlying uniform against P(Y <= u) directly,
which is equivalent to evaluating the scenery value and comparing against u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from .marginals import Marginal
from .parallel import replicate_map
from .rng import RngStream, counter_uniforms, derived_keys, stream_key
from .scenery import (
    Observations,
    SceneryModel,
    _Y_FIELD_ID,
    conditional_exceed_slots,
    scenery_marginal,
)
from .walk import WalkParams

__all__ = [
    "Threshold",
    "ExceedanceProcess",
    "ClusterCountEstimate",
    "LogmaxEstimate",
    "threshold",
    "exceedance_process",
    "max_exceeds",
    "extremal_index_logmax",
    "extremal_index_runs",
    "empirical_cluster_counts",
    "composed_max_exceed_flags",
    "scenery_max_exceed_flags",
    "runs_cluster_totals",
    "default_block_length",
    "default_gap",
]

_TAG_WALK = 0x57414C4B
_TAG_FIELD = 0x4649454C
_TAG_CONDBATCH = 0x434E4442


@dataclass(frozen=True)
class Threshold:
    """Level u with n * P(xi(0) > u) = tau, exact by construction."""

    tau: float
    n: float
    u: float


def threshold(model: SceneryModel, n, tau: float) -> Threshold:
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not tau < n:
        raise ValueError(f"tau={tau} >= n={n}: no valid exceedance level")
    u = float(scenery_marginal(model).isf(tau / n))
    return Threshold(tau=float(tau), n=n, u=u)


@dataclass(frozen=True, eq=False)
class ExceedanceProcess:
    """Normalized exceedance times {i/n : xi(S_i) > u, i <= n}."""

    n: int
    u: float
    indices: np.ndarray
    times: np.ndarray


def exceedance_process(obs: Observations, th: Threshold) -> ExceedanceProcess:
    if obs.n != th.n:
        raise ValueError(f"observations horizon {obs.n} != threshold horizon {th.n}")
    idx = np.flatnonzero(obs.values > th.u)
    times = idx / th.n if obs.n > 0 else idx.astype(np.float64)
    return ExceedanceProcess(n=obs.n, u=th.u, indices=idx, times=times)


def max_exceeds(obs: Observations, th: Threshold) -> bool:
    if obs.n != th.n:
        raise ValueError(f"observations horizon {obs.n} != threshold horizon {th.n}")
    return bool(obs.values.max() > th.u)


# ---------------------------------------------------------------------------
# chunked replicate kernels


def _field_keys(rng: RngStream, r0: int, r1: int) -> np.ndarray:
    """Per-replicate Y-field keys: each equals the field of a SceneryModel
    whose seed is the derived replicate key, keeping kernel and value-level
    evaluation interchangeable."""
    seeds = derived_keys(rng, _TAG_FIELD, np.arange(r0, r1))
    return stream_key(seeds, _Y_FIELD_ID)


def _positions(params: WalkParams, walk_keys: np.ndarray, horizon: int) -> np.ndarray:
    rows = walk_keys.size
    pos = np.zeros((rows, horizon + 1), dtype=np.int64)
    if horizon:
        u = counter_uniforms(walk_keys[:, None], np.arange(horizon, dtype=np.uint64))
        steps = np.where(u < params.p, 1, -1)
        np.cumsum(steps, axis=1, out=pos[:, 1:])
    return pos


def _exceed_at_sites(
    model: SceneryModel,
    field_keys: np.ndarray,
    sites: np.ndarray,
    u: float,
    cond_slots: np.ndarray | None,
) -> np.ndarray:
    """Exceedance indicators of xi at integer sites (rows = replicates)."""
    p_below = float(model.marginal.cdf(u))
    exceed = np.zeros(np.broadcast_shapes(field_keys[:, None].shape, sites.shape), bool)
    for w in range(model.window + 1):
        s = sites + w
        flags = counter_uniforms(field_keys[:, None], s) > p_below
        if cond_slots is not None:
            in_window = (s >= 0) & (s <= model.window)
            slot = np.clip(s, 0, model.window)
            patched = np.take_along_axis(
                cond_slots, np.broadcast_to(slot, flags.shape), axis=1
            )
            flags = np.where(in_window, patched, flags)
        exceed |= flags
    return exceed


def _composed_exceed(params, model, u, horizon, rng, r0, r1, conditional):
    walk_keys = derived_keys(rng, _TAG_WALK, np.arange(r0, r1))
    field_keys = _field_keys(rng, r0, r1)
    pos = _positions(params, walk_keys, horizon)
    cond = None
    if conditional:
        cond = conditional_exceed_slots(
            model, u, rng.derive(_TAG_CONDBATCH), r1 - r0, start=r0
        )
    return _exceed_at_sites(model, field_keys, pos, u, cond)


def _scenery_exceed(model, u, horizon, rng, r0, r1, conditional, first_site=0):
    field_keys = _field_keys(rng, r0, r1)
    sites = np.arange(first_site, horizon + 1, dtype=np.int64)[None, :]
    cond = None
    if conditional:
        cond = conditional_exceed_slots(
            model, u, rng.derive(_TAG_CONDBATCH), r1 - r0, start=r0
        )
    return _exceed_at_sites(model, field_keys, sites, u, cond)


def _chunk_composed_any(params, model, u, horizon, rng, r0, r1):
    return _composed_exceed(params, model, u, horizon, rng, r0, r1, False).any(axis=1)


def _chunk_scenery_any(model, u, horizon, rng, r0, r1):
    return _scenery_exceed(model, u, horizon, rng, r0, r1, False).any(axis=1)


def _chunk_cluster_counts(params, model, u, k_n, rng, r0, r1):
    exceed = _composed_exceed(params, model, u, k_n, rng, r0, r1, True)
    return exceed.sum(axis=1, dtype=np.int32)


def _chunk_runs_counts(params, model, u, horizon, gap, rng, r0, r1):
    exceed = _composed_exceed(params, model, u, horizon, rng, r0, r1, False)
    rows = exceed.shape[0]
    cum = np.zeros((rows, horizon + 2), dtype=np.int32)
    np.cumsum(exceed, axis=1, out=cum[:, 1:])
    t = np.arange(horizon + 1)
    lo = np.maximum(t - (gap + 1), 0)
    trailing = cum[:, t] - cum[:, lo]
    starts = exceed & (trailing == 0)
    out = np.empty((rows, 2), dtype=np.int64)
    out[:, 0] = starts.sum(axis=1)
    out[:, 1] = exceed.sum(axis=1)
    return out


def composed_max_exceed_flags(
    params: WalkParams,
    model: SceneryModel,
    n: int,
    tau: float,
    reps: int,
    rng: RngStream,
    threads: int = 1,
) -> np.ndarray:
    """Per replicate: does max_{i<=n} xi(S_i) exceed the exact level u_n."""
    u = threshold(model, n, tau).u
    task = partial(_chunk_composed_any, params, model, u, n, rng)
    return replicate_map(task, reps, item_size=n + 1, threads=threads)


def scenery_max_exceed_flags(
    model: SceneryModel,
    n: int,
    tau: float,
    reps: int,
    rng: RngStream,
    threads: int = 1,
) -> np.ndarray:
    """Per replicate: does max_{0<=s<=n} xi(s) exceed u_n (no walk)."""
    u = threshold(model, n, tau).u
    task = partial(_chunk_scenery_any, model, u, n, rng)
    return replicate_map(task, reps, item_size=n + 1, threads=threads)


@dataclass(frozen=True, eq=False)
class ClusterCountEstimate:
    """Estimated law of the exceedance count in a block of length k_n, given
    an exceedance at the origin: p_hat[j-1] estimates P(count = j)."""

    k_n: int
    j_max: int
    p_hat: np.ndarray
    stderr: np.ndarray
    replicates: int
    tail_fraction: float


def empirical_cluster_counts(
    params: WalkParams,
    model: SceneryModel,
    n: int,
    tau: float,
    k_n: int,
    j_max: int,
    reps: int,
    rng: RngStream,
    threads: int = 1,
) -> ClusterCountEstimate:
    """Conditioned block counts: scenery conditioned on xi(0) > u_n, fresh walk
    of k_n steps per replicate, exceedances counted over i = 0..k_n."""
    if k_n < 0:
        raise ValueError("k_n must be >= 0")
    if k_n >= n:
        raise ValueError(f"k_n={k_n} >= n={n}: block must be o(n)")
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    u = threshold(model, n, tau).u
    task = partial(_chunk_cluster_counts, params, model, u, k_n, rng)
    counts = replicate_map(task, reps, item_size=k_n + 1, threads=threads)
    clipped = np.minimum(counts, j_max + 1)
    hist = np.bincount(clipped, minlength=j_max + 2)
    p_hat = hist[1 : j_max + 1] / reps
    stderr = np.sqrt(p_hat * (1.0 - p_hat) / reps)
    return ClusterCountEstimate(
        k_n=k_n,
        j_max=j_max,
        p_hat=p_hat,
        stderr=stderr,
        replicates=reps,
        tail_fraction=hist[j_max + 1] / reps,
    )


@dataclass(frozen=True)
class LogmaxEstimate:
    """Extremal index from the no-exceedance fraction f: theta = -ln(f)/tau."""

    theta: float
    stderr: float
    no_exceed_fraction: float
    replicates: int
    infinite: bool = False


def extremal_index_logmax(exceed_flags: np.ndarray, tau: float) -> LogmaxEstimate:
    """Invert P(max <= u_n) ~ exp(-theta * tau) from per-replicate flags.

    ``exceed_flags[r]`` is True when replicate r had at least one exceedance.
    When every replicate exceeds, the estimate is flagged infinite rather
    than raising.
    """
    flags = np.asarray(exceed_flags, dtype=bool)
    reps = flags.size
    if reps == 0:
        raise ValueError("need at least one replicate")
    below = int(reps - flags.sum())
    f = below / reps
    if below == 0:
        return LogmaxEstimate(
            theta=math.inf, stderr=math.nan, no_exceed_fraction=0.0,
            replicates=reps, infinite=True,
        )
    theta = -math.log(f) / tau
    stderr = math.sqrt((1.0 - f) / (f * reps)) / tau  # delta method
    return LogmaxEstimate(
        theta=theta, stderr=stderr, no_exceed_fraction=f, replicates=reps
    )


def extremal_index_runs(obs: Observations, th: Threshold, gap: int) -> float:
    """Runs declustering on one path: clusters / exceedances.

    Exceedances belong to the same cluster when separated by at most ``gap``
    non-exceedance indices; with no exceedances the estimate is 1 by
    convention.
    """
    if gap < 1:
        raise ValueError("gap must be >= 1")
    idx = exceedance_process(obs, th).indices
    if idx.size == 0:
        return 1.0
    clusters = 1 + int((np.diff(idx) - 1 > gap).sum())
    return clusters / idx.size


def runs_cluster_totals(
    params: WalkParams,
    model: SceneryModel,
    n: int,
    tau: float,
    gap: int,
    reps: int,
    rng: RngStream,
    threads: int = 1,
) -> tuple[int, int]:
    """Pooled (clusters, exceedances) totals across replicates for the runs
    estimator; the pooled ratio estimates the extremal index."""
    if gap < 1:
        raise ValueError("gap must be >= 1")
    u = threshold(model, n, tau).u
    task = partial(_chunk_runs_counts, params, model, u, n, gap, rng)
    out = replicate_map(task, reps, item_size=n + 1, threads=threads)
    totals = out.sum(axis=0)
    return int(totals[0]), int(totals[1])


def default_block_length(n: int) -> int:
    """Default k_n = floor(n**0.7): grows without bound but stays o(n)."""
    return int(n**0.7)


def default_gap(n: int, q: float) -> int:
    """Runs-declustering gap beyond the walk's typical backtrack depth."""
    return max(1, math.ceil(math.log(n) / q))
