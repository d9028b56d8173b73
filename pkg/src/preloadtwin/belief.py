"""Particle-based belief over the hidden soil parameters.

The digital state is a weighted set of soil realizations, each carrying a
cached weekly prediction of settlement and OCR under the shared action
schedule. Weekly settlement measurements reweight the particles through a
Gaussian error model; the set is resampled back to uniform weights when
the effective sample size drops below a threshold (default), or after
every update in the plain multinomial/systematic modes.

Beliefs are immutable snapshots: update/apply_action return new objects,
and the random stream advances through explicit serializable states, so a
belief history is fully determined by (priors, seed, events).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .consolidation import (
    WEEKS_PER_YEAR,
    ActionSchedule,
    EmbankmentGeometry,
    PvdDesign,
    pack_geometry,
)
from .errors import (
    DegenerateUpdateError,
    ScenarioError,
    StressRangeExceededError,
    UndefinedCovError,
    UnsupportedActionError,
)
from .priors import SoilPriorSet, SoilSample, sample_soil_array
from .rngstream import generator_from_state, generator_state, stream


@dataclass(frozen=True)
class Measurement:
    """One observed settlement value."""

    t: int
    z_s: float
    sigma_eps: float

    def __post_init__(self):
        if self.t < 0:
            raise ScenarioError(f"measurement week must be >= 0, got {self.t}")
        if not (self.sigma_eps > 0):
            raise ScenarioError(f"sigma_eps must be > 0, got {self.sigma_eps}")


RESAMPLING_MODES = ("multinomial", "systematic", "ess_multinomial", "ess_systematic")


@dataclass(frozen=True)
class ModelContext:
    """Scenario-level constants a belief needs to predict with."""

    geometry: EmbankmentGeometry
    pvd: PvdDesign
    t_max: int
    series_tol: float = 1e-12
    resampling: str = "ess_systematic"
    ess_threshold: float = 0.3

    def __post_init__(self):
        if self.t_max < 1:
            raise ScenarioError(f"t_max must be >= 1, got {self.t_max}")
        if self.resampling not in RESAMPLING_MODES:
            raise ScenarioError(
                f"resampling must be one of {RESAMPLING_MODES}, got {self.resampling!r}"
            )
        if not (0.0 < self.ess_threshold <= 1.0):
            raise ScenarioError(f"ess_threshold must lie in (0, 1], got {self.ess_threshold}")

    def geom_pack(self) -> np.ndarray:
        return pack_geometry(self.geometry, self.pvd, self.series_tol)

    @classmethod
    def from_scenario(cls, scenario) -> "ModelContext":
        return cls(
            geometry=scenario.geometry,
            pvd=scenario.pvd,
            t_max=scenario.requirements.t_max,
            series_tol=scenario.solver.series_tol,
            resampling=scenario.solver.resampling,
            ess_threshold=scenario.solver.ess_threshold,
        )


def likelihood(z: Measurement, s_pred: float) -> float:
    """Gaussian measurement density evaluated at the prediction residual."""
    d = (z.z_s - s_pred) / z.sigma_eps
    return math.exp(-0.5 * d * d) / (z.sigma_eps * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class Belief:
    """Immutable weighted-particle snapshot of the digital state."""

    pack: np.ndarray          # (n, 9) kernel particle pack (cv/ch per week)
    weights: np.ndarray       # (n,), nonnegative, sums to 1
    t_current: int
    schedule: ActionSchedule
    ctx: ModelContext
    rng_state: dict
    s_cache: np.ndarray       # (n, t_max+1) settlement predictions
    ocr_cache: np.ndarray     # (n, t_max+1) OCR predictions
    s_inf: np.ndarray         # (n,) ultimate settlement under the schedule

    @property
    def n_s(self) -> int:
        return self.pack.shape[0]

    def particles(self):
        """Yield (SoilSample, weight) pairs in storage order."""
        for row, w in zip(self.pack, self.weights):
            sample = row.copy()
            sample[7] *= WEEKS_PER_YEAR
            sample[8] *= WEEKS_PER_YEAR
            yield SoilSample.from_array(sample), float(w)

    def values_for(self, kind: str, t: int | None = None) -> np.ndarray:
        if kind == "S_at":
            if t is None:
                raise ScenarioError("S_at needs a week t")
            return self.s_cache[:, int(t)]
        if kind == "OCR_at":
            if t is None:
                raise ScenarioError("OCR_at needs a week t")
            return self.ocr_cache[:, int(t)]
        if kind == "S_inf":
            return self.s_inf
        raise ScenarioError(f"unknown functional {kind!r}; use S_at|OCR_at|S_inf")

    def content_hash(self) -> str:
        """Canonical digest of the belief state (used by equivalence checks)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.pack).tobytes())
        h.update(np.ascontiguousarray(self.weights).tobytes())
        h.update(str(self.t_current).encode())
        h.update(repr(self.schedule.kernel_args()).encode())
        return h.hexdigest()


def _build_caches(pack: np.ndarray, ctx: ModelContext, schedule: ActionSchedule):
    h0, t_add, h_add = schedule.kernel_args()
    g = ctx.geom_pack()
    S, OCR, _, s_old, s_new, _, err = kernels.trajectory_batch(
        pack, g, h0, t_add, h_add, ctx.t_max, ctx.series_tol
    )
    if np.any(err >= 0):
        i = int(np.argmax(err >= 0))
        geom = ctx.geometry
        zmid = geom.crust_thickness + (int(err[i]) + 0.5) * geom.clay_thickness / geom.n_layers
        s0 = float(kernels.sigma0_at(np.array([pack[i, 2]]), g, zmid)[0])
        load = float(pack[i, 3]) * (geom.embankment_height + h0 + h_add)
        raise StressRangeExceededError(s0 + load, float(pack[i, 0]), layer=int(err[i]))
    s_inf = s_new if schedule.has_increment else s_old
    return S, OCR, s_inf


def init_belief(
    priors: SoilPriorSet,
    n_s: int,
    seed: int,
    ctx: ModelContext,
    schedule: ActionSchedule,
) -> Belief:
    """Equal-weight prior belief of n_s particles drawn from the priors."""
    if n_s < 2:
        raise ScenarioError(f"n_s must be >= 2, got {n_s}")
    rng = stream(seed, "belief")
    return init_belief_with_rng(priors, n_s, rng, ctx, schedule)


def init_belief_with_rng(
    priors: SoilPriorSet,
    n_s: int,
    rng: np.random.Generator,
    ctx: ModelContext,
    schedule: ActionSchedule,
) -> Belief:
    """init_belief on a caller-owned generator (stream discipline outside)."""
    if n_s < 2:
        raise ScenarioError(f"n_s must be >= 2, got {n_s}")
    arr = sample_soil_array(priors, rng, n_s)
    pack = arr.copy()
    pack[:, 7] /= 52.0
    pack[:, 8] /= 52.0
    S, OCR, s_inf = _build_caches(pack, ctx, schedule)
    return Belief(
        pack=pack,
        weights=np.full(n_s, 1.0 / n_s),
        t_current=0,
        schedule=schedule,
        ctx=ctx,
        rng_state=generator_state(rng),
        s_cache=S,
        ocr_cache=OCR,
        s_inf=s_inf,
    )


def posterior_weights(belief: Belief, z: Measurement) -> np.ndarray:
    """Normalized post-measurement weights, before any resampling."""
    s_pred = belief.s_cache[:, int(z.t)]
    d = (z.z_s - s_pred) / z.sigma_eps
    ll = -0.5 * d * d
    mx = float(np.max(ll))
    if not math.isfinite(mx):
        raise DegenerateUpdateError(mx)
    w = belief.weights * np.exp(ll - mx)
    total = float(np.sum(w))
    if total <= 0.0 or not math.isfinite(total):
        raise DegenerateUpdateError(mx)
    return w / total


def _systematic_indices(weights: np.ndarray, u0: float) -> np.ndarray:
    n = weights.shape[0]
    cum = np.cumsum(weights)
    total = cum[-1]
    positions = (u0 + np.arange(n)) / n * total
    return np.searchsorted(cum, positions, side="right").astype(np.int64)


def effective_sample_size(weights: np.ndarray) -> float:
    total = float(np.sum(weights))
    return total * total / float(np.sum(weights * weights))


def update(belief: Belief, z: Measurement, property_log_likelihood=None) -> Belief:
    """Condition the belief on one settlement measurement.

    Weights are multiplied by the Gaussian likelihood (computed in shifted
    log space so a far-off measurement degrades gracefully) and
    renormalized. The set is then resampled back to n_s equal-weight
    particles: after every update for the multinomial/systematic modes, or
    only when the effective sample size falls below ess_threshold * n_s
    for the ess_ modes (the default, which preserves particle diversity).

    property_log_likelihood optionally folds direct soil-property evidence
    into the same update: a callable mapping the (n, 9) particle array
    (cv/ch per week) to per-particle log-likelihoods. Omitted, the data
    factor reduces to the settlement term alone, which is this scenario's
    regime (no property data after construction starts).

    A full row of n_s uniforms is drawn from the belief stream on every
    update whether or not resampling happens, so the stream position
    depends only on the number of updates, never on their outcomes.
    """
    if z.t < belief.t_current:
        raise ScenarioError(
            f"measurement at week {z.t} precedes the belief time {belief.t_current}"
        )
    if z.t > belief.ctx.t_max:
        raise ScenarioError(f"measurement week {z.t} beyond the horizon {belief.ctx.t_max}")

    s_pred = belief.s_cache[:, int(z.t)]
    d = (z.z_s - s_pred) / z.sigma_eps
    ll = -0.5 * d * d
    if property_log_likelihood is not None:
        extra = np.asarray(property_log_likelihood(belief.pack), dtype=float)
        if extra.shape != ll.shape:
            raise ScenarioError(
                f"property likelihood must return shape {ll.shape}, got {extra.shape}"
            )
        ll = ll + extra
    mx = float(np.max(ll))
    if not math.isfinite(mx):
        raise DegenerateUpdateError(mx)
    w = belief.weights * np.exp(ll - mx)
    total = float(np.sum(w))
    if total <= 0.0 or not math.isfinite(total):
        raise DegenerateUpdateError(mx)
    w = w / total

    rng = generator_from_state(belief.rng_state)
    n = belief.n_s
    uniforms = rng.random(n)
    mode = belief.ctx.resampling
    do_resample = mode in ("multinomial", "systematic") or (
        effective_sample_size(w) < belief.ctx.ess_threshold * n
    )
    if do_resample:
        if mode in ("systematic", "ess_systematic"):
            idx = _systematic_indices(w, float(uniforms[0]))
        else:
            idx = kernels.resample_indices(w, uniforms)
        return replace(
            belief,
            pack=belief.pack[idx],
            weights=np.full(n, 1.0 / n),
            t_current=int(z.t),
            rng_state=generator_state(rng),
            s_cache=belief.s_cache[idx],
            ocr_cache=belief.ocr_cache[idx],
            s_inf=belief.s_inf[idx],
        )
    return replace(
        belief,
        weights=w,
        t_current=int(z.t),
        rng_state=generator_state(rng),
    )


def apply_action(belief: Belief, t_add: int, h_add: float) -> Belief:
    """Extend the action history with a surcharge increment at week t_add.

    h_add = 0 is a recorded no-op (the single allowed increment stays
    available). Every particle's trajectory cache is rebuilt with the
    continuity-preserving clock shift.
    """
    if belief.schedule.has_increment:
        raise UnsupportedActionError(
            f"an increment already exists at week {belief.schedule.t_add}; "
            "the model supports a single increment"
        )
    if h_add < 0:
        raise ScenarioError(f"h_add must be >= 0, got {h_add}")
    if h_add == 0.0:
        return belief
    schedule = belief.schedule.with_increment(int(t_add), float(h_add))
    S, OCR, s_inf = _build_caches(belief.pack, belief.ctx, schedule)
    return replace(belief, schedule=schedule, s_cache=S, ocr_cache=OCR, s_inf=s_inf)


def weighted_quantile(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """Type-1 (inverse-CDF) weighted quantile."""
    if not (0.0 <= p <= 1.0):
        raise ScenarioError(f"quantile level must lie in [0, 1], got {p}")
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(weights[order])
    total = cw[-1]
    i = int(np.searchsorted(cw, p * total, side="left"))
    return float(values[order[min(i, values.shape[0] - 1)]])


def central_interval(values: np.ndarray, weights: np.ndarray, level: float = 0.95) -> tuple:
    """Smallest atom interval guaranteed to hold the central `level` mass.

    On a discrete (particle) posterior the endpoints are taken outward:
    the lower endpoint is the last atom with strictly-below mass <= the
    tail, the upper the first atom with through-mass >= 1 - tail, so the
    enclosed probability is always >= level.
    """
    if not (0.0 < level < 1.0):
        raise ScenarioError(f"level must lie in (0, 1), got {level}")
    tail = (1.0 - level) / 2.0
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    cum = np.cumsum(w)
    total = cum[-1]
    below = cum - w
    lo_candidates = np.where(below <= tail * total)[0]
    lo = float(v[lo_candidates[-1]]) if lo_candidates.size else float(v[0])
    hi_idx = min(int(np.searchsorted(cum, (1.0 - tail) * total, side="left")), v.shape[0] - 1)
    return lo, float(v[hi_idx])


def posterior_stats(
    belief: Belief,
    kind: str,
    t: int | None = None,
    quantile_levels: tuple = (0.05, 0.25, 0.5, 0.75, 0.95),
) -> dict:
    """Weighted summary of a posterior functional.

    kind is one of S_at|OCR_at|S_inf (t required for the _at kinds).
    std uses the population (weighted) convention; cov errors out when the
    mean is within 1e-9 of zero.
    """
    if belief.n_s < 1:
        raise ScenarioError("belief has no particles")
    v = belief.values_for(kind, t)
    w = belief.weights
    mean = float(np.sum(w * v))
    var = float(np.sum(w * (v - mean) ** 2))
    std = math.sqrt(max(var, 0.0))
    if abs(mean) < 1e-9:
        raise UndefinedCovError(
            f"posterior mean {mean:.3e} too close to zero for a coefficient of variation"
        )
    return {
        "mean": mean,
        "std": std,
        "cov": std / mean,
        "quantiles": {float(p): weighted_quantile(v, w, float(p)) for p in quantile_levels},
    }


def prob_below_target(belief: Belief, s_target: float, t_max: int | None = None) -> float:
    """Weighted probability that S(t_max) falls short of the target."""
    t = belief.ctx.t_max if t_max is None else int(t_max)
    v = belief.s_cache[:, t]
    return float(np.sum(belief.weights[v < s_target]))


def prob_above_target(belief: Belief, s_target: float, t_max: int | None = None) -> float:
    """Weighted probability that S(t_max) exceeds the target."""
    t = belief.ctx.t_max if t_max is None else int(t_max)
    v = belief.s_cache[:, t]
    return float(np.sum(belief.weights[v > s_target]))


def gate_statistic(belief: Belief, mode: str = "cov") -> float:
    """Spread statistic of S(t_max) driving the data-collection gate."""
    stats = posterior_stats(belief, "S_at", belief.ctx.t_max, quantile_levels=())
    if mode == "cov":
        return stats["cov"]
    if mode == "std":
        return stats["std"]
    raise ScenarioError(f"gate mode must be cov|std, got {mode!r}")
