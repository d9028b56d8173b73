"""Deterministic consolidation physics for a preloaded embankment on PVDs.

Given one soil realization and a surcharge schedule, predicts the ultimate
settlement, the combined vertical/radial degree of consolidation, the
settlement history S(t), and the overconsolidation ratio OCR(t) on a
weekly grid.

Model summary:
  * 1D column: dry crust over soft clay split into uniform sublayers;
    groundwater at a configurable depth (default the crust base); buoyant
    clay weight below the water table.
  * Strains follow a bilinear constant-rate-of-strain modulus: M0 up to
    the preconsolidation pressure, ML up to the limit pressure; stresses
    beyond the limit pressure are a hard error.
  * Vertical consolidation by the classical series solution, radial by
    the ideal-drain analytical solution (no smear, no well resistance).
  * One optional surcharge increment; settlement continuity across the
    increment is restored by shifting the consolidation clock.

All times in weeks (1 year = 52 weeks, conversion applied when packing),
stresses in kPa, lengths in m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    ContinuityUnsolvableError,
    InvalidGeometryError,
    ScenarioError,
    StressRangeExceededError,
)
from .kernels.common import (
    G_CLAY,
    G_CRUST,
    G_DE2,
    G_DRAIN,
    G_EMB_H,
    G_GAMMA_W,
    G_GW,
    G_LAYER_THK,
    G_MU,
    G_NLAYERS,
    G_SERIES_TOL,
    GEOM_SIZE,
)
from .priors import SoilSample

WEEKS_PER_YEAR = 52.0

DEFAULT_SERIES_TOL = 1e-12


@dataclass(frozen=True)
class EmbankmentGeometry:
    """Deterministic geometric boundary conditions of the embankment."""

    clay_thickness: float = 15.5
    crust_thickness: float = 0.3
    embankment_height: float = 1.2
    n_layers: int = 31
    groundwater_depth: float = 0.3
    gamma_w: float = 9.81
    road_length: float = 550.0

    def __post_init__(self):
        for name in ("clay_thickness", "crust_thickness", "embankment_height"):
            if getattr(self, name) < 0 or (name == "clay_thickness" and getattr(self, name) <= 0):
                raise ScenarioError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_layers < 1:
            raise ScenarioError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.gamma_w <= 0 or self.road_length <= 0:
            raise ScenarioError("gamma_w and road_length must be > 0")
        if self.groundwater_depth < 0:
            raise ScenarioError("groundwater_depth must be >= 0")


@dataclass(frozen=True)
class PvdDesign:
    """Fixed prefabricated-vertical-drain layout."""

    spacing: float = 0.9
    pattern: str = "square"
    equivalent_drain_diameter: float = 0.066
    drainage: str = "double"

    def __post_init__(self):
        if self.pattern not in ("square", "triangular"):
            raise ScenarioError(f"pattern must be square|triangular, got {self.pattern!r}")
        if self.drainage not in ("single", "double"):
            raise ScenarioError(f"drainage must be single|double, got {self.drainage!r}")
        if not (self.spacing > self.equivalent_drain_diameter > 0.0):
            raise InvalidGeometryError(
                f"need spacing > drain diameter > 0, got spacing={self.spacing}, "
                f"d_w={self.equivalent_drain_diameter}"
            )

    @property
    def influence_diameter(self) -> float:
        factor = 1.13 if self.pattern == "square" else 1.05
        return factor * self.spacing

    @property
    def spacing_ratio(self) -> float:
        return self.influence_diameter / self.equivalent_drain_diameter

    def mu_factor(self) -> float:
        """Drain-geometry factor of the ideal-drain radial solution."""
        n = self.spacing_ratio
        if n <= 1.0:
            raise InvalidGeometryError(f"spacing ratio n must exceed 1, got {n}")
        n2 = n * n
        return n2 / (n2 - 1.0) * math.log(n) - (3.0 * n2 - 1.0) / (4.0 * n2)


@dataclass(frozen=True)
class ActionSchedule:
    """Initial surcharge plus at most one later increment."""

    h0: float
    t_add: int | None = None
    h_add: float = 0.0

    def __post_init__(self):
        if self.h0 < 0:
            raise ScenarioError(f"h0 must be >= 0, got {self.h0}")
        if self.h_add < 0:
            raise ScenarioError(f"h_add must be >= 0, got {self.h_add}")
        if self.t_add is not None and self.t_add < 1:
            raise ScenarioError(f"t_add must be >= 1 week, got {self.t_add}")
        if self.h_add > 0 and self.t_add is None:
            raise ScenarioError("an increment height needs an increment week t_add")

    @property
    def has_increment(self) -> bool:
        return self.t_add is not None and self.h_add > 0.0

    def kernel_args(self) -> tuple[float, float, float]:
        t_add = float(self.t_add) if self.has_increment else math.inf
        return float(self.h0), t_add, float(self.h_add) if self.has_increment else 0.0

    def with_increment(self, t_add: int, h_add: float) -> "ActionSchedule":
        return ActionSchedule(h0=self.h0, t_add=t_add, h_add=h_add)


@dataclass
class Trajectory:
    """Weekly series of one deterministic model evaluation."""

    weeks: np.ndarray
    settlement_m: np.ndarray
    ocr: np.ndarray
    degree: np.ndarray
    s_inf_m: np.ndarray
    load_kpa: np.ndarray
    t_shift_weeks: float = 0.0
    schedule: ActionSchedule | None = None

    def at(self, t: int) -> dict:
        i = int(t)
        if i < 0 or i >= self.weeks.shape[0]:
            raise ScenarioError(f"week {t} outside trajectory range 0..{self.weeks[-1]}")
        return {
            "week": i,
            "settlement_m": float(self.settlement_m[i]),
            "ocr": float(self.ocr[i]),
            "degree": float(self.degree[i]),
            "s_inf_m": float(self.s_inf_m[i]),
            "load_kpa": float(self.load_kpa[i]),
        }

    @property
    def t_end(self) -> int:
        return int(self.weeks[-1])


def pack_geometry(
    geom: EmbankmentGeometry, pvd: PvdDesign, series_tol: float = DEFAULT_SERIES_TOL
) -> np.ndarray:
    """Flatten geometry + drain design into the kernel layout."""
    g = np.empty(GEOM_SIZE)
    g[G_CLAY] = geom.clay_thickness
    g[G_CRUST] = geom.crust_thickness
    g[G_GW] = geom.groundwater_depth
    g[G_GAMMA_W] = geom.gamma_w
    g[G_NLAYERS] = float(geom.n_layers)
    g[G_LAYER_THK] = geom.clay_thickness / geom.n_layers
    g[G_DRAIN] = (
        geom.clay_thickness / 2.0 if pvd.drainage == "double" else geom.clay_thickness
    )
    de = pvd.influence_diameter
    g[G_DE2] = de * de
    g[G_MU] = pvd.mu_factor()
    g[G_EMB_H] = geom.embankment_height
    g[G_SERIES_TOL] = series_tol
    return g


def pack_particles(samples) -> np.ndarray:
    """Stack soil samples into the kernel particle layout (cv/ch per week)."""
    if isinstance(samples, SoilSample):
        samples = [samples]
    if isinstance(samples, np.ndarray):
        arr = np.array(samples, dtype=float, ndmin=2).copy()
    else:
        arr = np.stack([s.as_array() for s in samples])
    arr[:, 7] /= WEEKS_PER_YEAR
    arr[:, 8] /= WEEKS_PER_YEAR
    return arr


def vertical_degree(cv: float, drain_path: float, t: float, series_tol: float = DEFAULT_SERIES_TOL) -> float:
    """Average vertical degree of consolidation after t weeks.

    cv in m2/year, drain_path in m.
    """
    if cv <= 0 or drain_path <= 0:
        raise ScenarioError("cv and drain_path must be > 0")
    if t < 0:
        raise ScenarioError(f"t must be >= 0, got {t}")
    tv = (cv / WEEKS_PER_YEAR) * t / (drain_path * drain_path)
    return float(kernels.u_vertical(np.array([tv]), series_tol)[0])


def horizontal_degree(ch: float, pvd: PvdDesign, t: float) -> float:
    """Average radial degree of consolidation toward the drains after t weeks."""
    if ch <= 0:
        raise ScenarioError("ch must be > 0")
    if t < 0:
        raise ScenarioError(f"t must be >= 0, got {t}")
    mu = pvd.mu_factor()
    th = (ch / WEEKS_PER_YEAR) * t / (pvd.influence_diameter ** 2)
    return float(kernels.u_horizontal(np.array([th]), mu)[0])


def combined_degree(u_v: float, u_h: float) -> float:
    """Inclusion-exclusion combination of the two drainage components."""
    if not (0.0 <= u_v <= 1.0 and 0.0 <= u_h <= 1.0):
        raise ScenarioError(f"degrees must lie in [0, 1], got {u_v}, {u_h}")
    return 1.0 - (1.0 - u_v) * (1.0 - u_h)


def strain_increment(
    sigma0: float, sigma_c: float, sigma_L: float, m0: float, ml: float, dsigma: float
) -> float:
    """Strain from raising effective stress sigma0 by dsigma.

    The stress path is split at the preconsolidation pressure: modulus m0
    below it, ml between it and the limit pressure sigma_L.
    """
    if sigma0 <= 0:
        raise ScenarioError(f"sigma0 must be > 0, got {sigma0}")
    if sigma_c > sigma_L:
        raise ScenarioError(f"sigma_c ({sigma_c}) must not exceed sigma_L ({sigma_L})")
    if m0 <= 0 or ml <= 0:
        raise ScenarioError("moduli must be > 0")
    if dsigma < 0:
        raise ScenarioError(f"dsigma must be >= 0, got {dsigma}")
    sigma_f = sigma0 + dsigma
    if sigma_f > sigma_L:
        raise StressRangeExceededError(sigma_f, sigma_L)
    e1 = max(min(sigma_f, sigma_c) - sigma0, 0.0) / m0
    e2 = max(sigma_f - max(sigma0, sigma_c), 0.0) / ml
    return e1 + e2


def initial_effective_stress(gamma_cl: float, geom: EmbankmentGeometry, depth: float) -> float:
    """Initial vertical effective stress at a depth below ground surface."""
    g = pack_geometry(geom, PvdDesign())
    return float(kernels.sigma0_at(np.array([gamma_cl]), g, depth)[0])


def ocr_ratio(
    sigma0: float, u: float, du: float, preload: float, permanent: float, increment: float
) -> float:
    """Overconsolidation ratio from consolidated-in stress fractions.

    preload is the total stress acting through the surcharge phase
    (embankment + surcharge), permanent the stress remaining after
    unloading, increment the optional added stress consolidating with
    degree du. preload >= permanent guarantees the ratio >= 1.
    """
    if sigma0 <= 0:
        raise ScenarioError(f"sigma0 must be > 0, got {sigma0}")
    return (sigma0 + u * preload + du * increment) / (sigma0 + u * permanent)


def long_term_settlement(
    soil: SoilSample, geom: EmbankmentGeometry, load: float,
    pvd: PvdDesign | None = None,
) -> float:
    """Ultimate primary settlement under a uniform surface load (kPa).

    Layer strains are evaluated at sublayer mid-depths and summed.
    """
    if load < 0:
        raise ScenarioError(f"load must be >= 0, got {load}")
    g = pack_geometry(geom, pvd if pvd is not None else PvdDesign())
    p = pack_particles(soil)
    # kernels express the load as gamma_emb * height; invert for a raw load
    height = load / soil.gamma_emb
    vals, errs = kernels.s_inf_batch(p, g, height)
    if errs[0] >= 0:
        zmid = geom.crust_thickness + (errs[0] + 0.5) * geom.clay_thickness / geom.n_layers
        s0 = initial_effective_stress(soil.gamma_cl, geom, zmid)
        raise StressRangeExceededError(s0 + load, soil.sigma_L, layer=int(errs[0]))
    return float(vals[0])


def total_load(schedule: ActionSchedule, soil: SoilSample, geom: EmbankmentGeometry, t: float) -> float:
    """Uniform embankment + surcharge load (kPa) acting at week t."""
    if t < 0:
        raise ScenarioError(f"t must be >= 0, got {t}")
    load = soil.gamma_emb * (geom.embankment_height + schedule.h0)
    if schedule.has_increment and t >= schedule.t_add:
        load += soil.gamma_emb * schedule.h_add
    return load


def compute_t_shift(
    u: "callable",
    s_inf_old: float,
    s_inf_new: float,
    t_add: float,
) -> float:
    """Clock shift equating old and new settlement curves at t_add.

    u maps weeks to a degree of consolidation and must be increasing.
    Kept callable-based so alternative degree models can be swapped in.
    """
    if not (s_inf_new >= s_inf_old > 0.0):
        raise ScenarioError(
            f"need s_inf_new >= s_inf_old > 0, got old={s_inf_old}, new={s_inf_new}"
        )
    if s_inf_new == s_inf_old:
        return 0.0
    target = u(t_add) * s_inf_old / s_inf_new
    g_lo = u(0.0) - target
    g_hi = u(t_add) - target
    if g_lo > 0.0 or g_hi < 0.0:
        raise ContinuityUnsolvableError(
            f"no sign change on [0, {t_add}]: g(0)={g_lo:.3e}, g(t_add)={g_hi:.3e}"
        )
    lo, hi = 0.0, float(t_add)
    for _ in range(kernels.common.BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if u(mid) < target:
            lo = mid
        else:
            hi = mid
    return float(t_add) - 0.5 * (lo + hi)


def simulate_trajectory(
    soil: SoilSample,
    geom: EmbankmentGeometry,
    pvd: PvdDesign,
    schedule: ActionSchedule,
    t_max: int,
    series_tol: float = DEFAULT_SERIES_TOL,
) -> Trajectory:
    """Weekly trajectory of settlement, degree, and OCR through week t_max."""
    if t_max < 1:
        raise ScenarioError(f"t_max must be >= 1, got {t_max}")
    if schedule.has_increment and schedule.t_add > t_max:
        raise ScenarioError(
            f"increment week {schedule.t_add} lies beyond the horizon {t_max}"
        )
    g = pack_geometry(geom, pvd, series_tol)
    p = pack_particles(soil)
    h0, t_add, h_add = schedule.kernel_args()
    S, OCR, U, s_old, s_new, tsh, err = kernels.trajectory_batch(p, g, h0, t_add, h_add, t_max, series_tol)
    if err[0] >= 0:
        load = total_load(schedule, soil, geom, t_max)
        zmid = geom.crust_thickness + (err[0] + 0.5) * geom.clay_thickness / geom.n_layers
        s0 = initial_effective_stress(soil.gamma_cl, geom, zmid)
        raise StressRangeExceededError(s0 + load, soil.sigma_L, layer=int(err[0]))

    weeks = np.arange(t_max + 1)
    s_inf_series = np.where(
        weeks < (schedule.t_add if schedule.has_increment else t_max + 1),
        float(s_old[0]),
        float(s_new[0]),
    )
    loads = np.array([total_load(schedule, soil, geom, float(t)) for t in weeks])
    return Trajectory(
        weeks=weeks,
        settlement_m=S[0],
        ocr=OCR[0],
        degree=U[0],
        s_inf_m=s_inf_series,
        load_kpa=loads,
        t_shift_weeks=float(tsh[0]),
        schedule=schedule,
    )
