"""Random sceneries over Z and their composition with the walk.

A scenery assigns to every site s a value xi(s) = max(Y_s, ..., Y_{s+window})
where the Y field is i.i.d. with a continuous marginal; window = 0 is the
plain i.i.d. scenery, window = k >= 1 the k-dependent moving-maximum one.
Values are pure functions of (seed, site) via counter-based hashing, so the
field over unbounded Z needs no storage and revisited sites are frozen by
construction.

Conditioning on an exceedance at the origin is done by local surgery on the
Y-window (the only sites the event depends on); rejection sampling would need
about n/tau attempts per replicate and is kept only as a test oracle.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np

from . import marginals
from .marginals import Marginal, MaxOf, format_marginal, parse_marginal
from .rng import RngStream, counter_uniforms, stream_key
from .walk import WalkPath

__all__ = [
    "SceneryModel",
    "Observations",
    "ConditionalScenery",
    "iid",
    "moving_max",
    "scenery_value",
    "y_value",
    "compose",
    "scenery_marginal",
    "sample_conditional_window",
    "parse_scenery",
    "format_scenery",
]

_Y_FIELD_ID = 0x59464C44  # fixed stream id of the Y field within a model's seed
_TAG_COND = 0x434F4E44


@dataclass(frozen=True)
class SceneryModel:
    """Stationary scenery: window-maximum of an i.i.d. field keyed by ``seed``."""

    marginal: Marginal
    window: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if isinstance(self.marginal, MaxOf):
            raise ValueError("scenery marginal must be a base marginal")

    @property
    def kind(self) -> str:
        return "iid" if self.window == 0 else "movingmax"

    def with_seed(self, seed: int) -> "SceneryModel":
        return replace(self, seed=seed)


def iid(marginal: Marginal, seed: int = 0) -> SceneryModel:
    return SceneryModel(marginal=marginal, window=0, seed=seed)


def moving_max(window: int, y_marginal: Marginal, seed: int = 0) -> SceneryModel:
    if window < 1:
        raise ValueError("moving-maximum window must be >= 1")
    return SceneryModel(marginal=y_marginal, window=window, seed=seed)


def _field_key(model: SceneryModel) -> np.uint64:
    return stream_key(model.seed, _Y_FIELD_ID)


def y_uniform(model: SceneryModel, sites) -> np.ndarray:
    """Underlying uniform of the Y field at each site (pure in (seed, site))."""
    return counter_uniforms(_field_key(model), np.asarray(sites))


def y_value(model: SceneryModel, sites) -> np.ndarray:
    return model.marginal.quantile(np.maximum(y_uniform(model, sites), 1e-300))


def scenery_value(model: SceneryModel, sites):
    """xi at one site or an array of sites: the windowed maximum of Y values."""
    arr = np.asarray(sites, dtype=np.int64)
    out = y_value(model, arr)
    for w in range(1, model.window + 1):
        out = np.maximum(out, y_value(model, arr + w))
    return float(out) if np.isscalar(sites) or arr.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class Observations:
    """The composed sequence xi(S_0) .. xi(S_n) along one walk path."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size - 1


def compose(path: WalkPath, model: SceneryModel) -> Observations:
    return Observations(values=scenery_value(model, path.positions))


def scenery_marginal(model: SceneryModel) -> Marginal:
    """Marginal law of xi(0): the base law for iid, its (window+1)-fold max otherwise."""
    if model.window == 0:
        return model.marginal
    return MaxOf(base=model.marginal, count=model.window + 1)


@dataclass(frozen=True, eq=False)
class ConditionalScenery:
    """A scenery realization conditioned on xi(0) > u via Y-window overrides.

    Only Y sites 0..window carry overridden values, so xi differs from the
    unconditioned field on sites -window..window only; everywhere else the
    lazily evaluated field of ``model`` applies unchanged.
    """

    model: SceneryModel
    y_overrides: dict

    def value(self, site: int) -> float:
        best = -np.inf
        for w in range(self.model.window + 1):
            s = site + w
            if s in self.y_overrides:
                best = max(best, self.y_overrides[s])
            else:
                best = max(best, float(y_value(self.model, s)))
        return best

    def values(self, sites) -> np.ndarray:
        arr = np.asarray(sites, dtype=np.int64)
        out = np.full(arr.shape, -np.inf)
        for w in range(self.model.window + 1):
            s = arr + w
            vals = y_value(self.model, s)
            for slot, v in self.y_overrides.items():
                vals = np.where(s == slot, v, vals)
            out = np.maximum(out, vals)
        return out


def sample_conditional_window(
    model: SceneryModel, u: float, rng: RngStream
) -> ConditionalScenery:
    """Draw a scenery from the law of ``model`` conditioned on xi(0) > u.

    iid: resample xi(0) from the tail.  Moving maximum: draw the number B >= 1
    of exceeding Y values in the window from the conditioned binomial, place
    them uniformly among the window+1 slots, then fill exceeders from the
    Y-tail and the remaining slots from the Y law conditioned below u.
    """
    xi_sf = float(scenery_marginal(model).sf(u))
    if not xi_sf > 0.0:
        raise ValueError(f"threshold u={u!r} is at or beyond the scenery upper endpoint")
    stream = rng.derive(_TAG_COND)
    m = model.window + 1
    if m == 1:
        return ConditionalScenery(
            model=model, y_overrides={0: marginals.sample_tail(model.marginal, u, stream)}
        )
    flags = conditional_exceed_slots(model, u, stream, 1)[0]
    n_hi = int(flags.sum())
    hi = marginals.sample_tail(model.marginal, u, stream.derive(1), count=n_hi)
    lo = marginals.sample_below(model.marginal, u, stream.derive(2), count=m - n_hi)
    overrides, i_hi, i_lo = {}, 0, 0
    for slot in range(m):
        if flags[slot]:
            overrides[slot] = float(hi[i_hi])
            i_hi += 1
        else:
            overrides[slot] = float(lo[i_lo])
            i_lo += 1
    return ConditionalScenery(model=model, y_overrides=overrides)


def conditional_exceed_slots(
    model: SceneryModel, u: float, stream: RngStream, reps: int, start: int = 0
) -> np.ndarray:
    """Exceedance pattern of the conditioned Y window, one row per replicate.

    Returns a (reps, window+1) boolean array; each row has >= 1 True.  Row i
    is a pure function of (stream, start + i), so chunked kernels can request
    any replicate range.  Used by the value-level sampler above and by the
    exceedance-flag kernels.
    """
    m = model.window + 1
    if m == 1:
        return np.ones((reps, 1), dtype=bool)
    p_hi = float(model.marginal.sf(u))
    if not 0.0 < p_hi < 1.0:
        raise ValueError("threshold outside the open support of the Y marginal")
    # Binomial(m, p_hi) conditioned on >= 1 success, by inversion.
    pmf = np.array(
        [math.comb(m, b) * p_hi**b * (1.0 - p_hi) ** (m - b) for b in range(1, m + 1)]
    )
    cum = np.cumsum(pmf / pmf.sum())
    u0 = stream.uniforms(reps, start=start)
    n_hi = 1 + np.searchsorted(cum, u0, side="right").clip(max=m - 1)
    # Uniform placement: ranks of i.i.d. uniforms give a random permutation.
    counters = (np.arange(start, start + reps)[:, None]) * np.int64(m) + np.arange(m)
    place = counter_uniforms(stream.derive(3).key, counters)
    ranks = np.argsort(np.argsort(place, axis=1), axis=1)
    return ranks < n_hi[:, None]


_SCENERY_RE = re.compile(
    r"^\s*(?:iid\s*\(\s*(?P<iid>[^)]+?)\s*\)|movingmax\s*\(\s*k\s*=\s*(?P<k>\d+)\s*,\s*(?P<ym>[^)]+?)\s*\))\s*$"
)


def parse_scenery(text: str, seed: int = 0) -> SceneryModel:
    """Parse ``iid(MARGINAL)`` or ``movingmax(k=K, MARGINAL)``."""
    m = _SCENERY_RE.match(text)
    if m is None:
        raise ValueError(
            f"unknown scenery {text!r}: expected iid(MARGINAL) or movingmax(k=K, MARGINAL)"
        )
    if m.group("iid") is not None:
        return iid(parse_marginal(m.group("iid")), seed=seed)
    return moving_max(int(m.group("k")), parse_marginal(m.group("ym")), seed=seed)


def format_scenery(model: SceneryModel) -> str:
    if model.window == 0:
        return f"iid({format_marginal(model.marginal)})"
    return f"movingmax(k={model.window}, {format_marginal(model.marginal)})"
