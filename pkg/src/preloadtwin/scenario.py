"""Scenario files: strict schema, normalization, hashing, round-trip.

A scenario is a human-editable YAML document holding every input of a
study: geometry, drain design, soil priors, requirements, cost rates,
measurement error, solver conventions, heuristic defaults, and the study
grid. Field names carry their units as suffixes (_m, _kpa, _weeks, ...).

Loading is strict: unknown keys anywhere fail with the dotted path, every
block must be covered by a provenance flag (paper / non_paper / mixed),
and cross-field invariants are checked. load(save(s)) is the identity on
the normalized form; floats round-trip exactly through shortest-repr
decimal strings.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .consolidation import EmbankmentGeometry, PvdDesign
from .errors import ScenarioError
from .policy import CostParams, HeuristicParams, PolicyOptions, Requirements
from .priors import (
    LognormalDist,
    SoilPriorSet,
    fit_lognormal,
    from_moments,
    from_variance_fraction,
)

SCHEMA_VERSION = 1

BUNDLED_SCENARIO = "stockholm-highway73"

PRIOR_KEYS = {
    "sigma_L": "sigma_L_kpa",
    "sigma_c": "sigma_c_kpa",
    "gamma_cl": "gamma_cl_kn_m3",
    "gamma_emb": "gamma_emb_kn_m3",
    "M0": "M0_kpa",
    "ML": "ML_kpa",
    "wN": "wN_fraction",
    "cv": "cv_m2_yr",
    "ch": "ch_m2_yr",
}

PROVENANCE_BLOCKS = (
    "geometry", "pvd", "priors", "requirements", "costs",
    "measurement", "solver", "heuristic", "study",
)
PROVENANCE_VALUES = ("paper", "non_paper", "mixed")


def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(f"expected a mapping, got {type(value).__name__}", path)
    return value


def _no_unknown(d: dict, allowed, path: str) -> None:
    unknown = set(d) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)}", path)


def _get(d: dict, key: str, typ, path: str, default=None, required=False):
    if key not in d:
        if required:
            raise ScenarioError("missing required key", f"{path}.{key}")
        return default
    v = d[key]
    if typ is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"expected a number, got {v!r}", f"{path}.{key}")
        return float(v)
    if typ is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(f"expected an integer, got {v!r}", f"{path}.{key}")
        return v
    if typ is str:
        if not isinstance(v, str):
            raise ScenarioError(f"expected a string, got {v!r}", f"{path}.{key}")
        return v
    if typ is list:
        if not isinstance(v, list):
            raise ScenarioError(f"expected a list, got {v!r}", f"{path}.{key}")
        return v
    if typ is dict:
        return _expect_mapping(v, f"{path}.{key}")
    raise AssertionError(f"unsupported schema type {typ}")


@dataclass(frozen=True)
class SolverConfig:
    """Numerical and convention switches (spec open questions live here).

    resampling modes: multinomial/systematic resample after every update;
    the ess_ variants resample only when the effective sample size drops
    below ess_threshold * n, which keeps the particle set diverse enough
    for calibrated posterior intervals.
    """

    series_tol: float = 1e-12
    cov_interpretation: str = "cov"            # cov | variance_fraction
    settlement_comparator: str = "achieved"    # achieved | residual
    uncertainty_gate: str = "cov"              # cov | std
    prob_comparator: str = "noncompliance"     # noncompliance | printed
    resampling: str = "ess_systematic"
    ess_threshold: float = 0.3
    prior_predictive_inflation: bool = False

    def __post_init__(self):
        if not (0 < self.series_tol <= 1e-6):
            raise ScenarioError(f"series_tol must lie in (0, 1e-6], got {self.series_tol}")
        checks = {
            "cov_interpretation": ("cov", "variance_fraction"),
            "settlement_comparator": ("achieved", "residual"),
            "uncertainty_gate": ("cov", "std"),
            "prob_comparator": ("noncompliance", "printed"),
            "resampling": ("multinomial", "systematic", "ess_multinomial", "ess_systematic"),
        }
        for name, allowed in checks.items():
            if getattr(self, name) not in allowed:
                raise ScenarioError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if not (0.0 < self.ess_threshold <= 1.0):
            raise ScenarioError(f"ess_threshold must lie in (0, 1], got {self.ess_threshold}")


@dataclass(frozen=True)
class ParamSearch:
    """Init distribution and box bounds of one CE search dimension."""

    init_mean: float
    init_std: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ScenarioError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if not (self.init_std > 0):
            raise ScenarioError(f"init_std must be > 0, got {self.init_std}")
        if not (self.lo <= self.init_mean <= self.hi):
            raise ScenarioError(
                f"init_mean {self.init_mean} outside bounds [{self.lo}, {self.hi}]"
            )


@dataclass(frozen=True)
class CeSettings:
    """Cross-entropy search sizes shared by all optimizations of a study."""

    n_ce: int = 100
    n_iter_max: int = 50
    n_mc: int = 100
    n_bu: int = 100
    elite_fraction: float = 0.1
    smoothing_alpha: float = 0.7
    convergence_std_tol: float = 1e-3

    def __post_init__(self):
        if self.n_ce < 2 or self.n_iter_max < 1 or self.n_mc < 2 or self.n_bu < 2:
            raise ScenarioError("n_ce, n_mc, n_bu must be >= 2 and n_iter_max >= 1")
        if not (0.0 < self.elite_fraction < 1.0):
            raise ScenarioError(f"elite_fraction must lie in (0,1), got {self.elite_fraction}")
        if not (0.0 < self.smoothing_alpha <= 1.0):
            raise ScenarioError(f"smoothing_alpha must lie in (0,1], got {self.smoothing_alpha}")
        if int(round(self.n_ce * self.elite_fraction)) < 2:
            raise ScenarioError("n_ce * elite_fraction must be >= 2")
        if self.convergence_std_tol <= 0:
            raise ScenarioError("convergence_std_tol must be > 0")


@dataclass(frozen=True)
class StudyConfig:
    """Study grid: measurement-error scenarios and optimization settings."""

    sigma_eps_list: tuple = (0.05, 0.10, 0.15)
    restarts: int = 3
    final_n_mc: int = 5000
    ce: CeSettings = field(default_factory=CeSettings)
    bu_bounds: dict = field(default_factory=dict)      # name -> ParamSearch
    static_bounds: dict = field(default_factory=dict)  # name -> ParamSearch

    def __post_init__(self):
        if self.restarts < 1:
            raise ScenarioError(f"restarts must be >= 1, got {self.restarts}")
        if self.final_n_mc < 2:
            raise ScenarioError(f"final_n_mc must be >= 2, got {self.final_n_mc}")
        for s in self.sigma_eps_list:
            if not (s > 0):
                raise ScenarioError(f"sigma_eps values must be > 0, got {s}")


DEFAULT_BU_BOUNDS = {
    "h0_m": ParamSearch(init_mean=1.0, init_std=0.5, lo=0.0, hi=2.5),
    "cov_th": ParamSearch(init_mean=0.3, init_std=0.2, lo=0.01, hi=1.0),
    "p_th": ParamSearch(init_mean=0.5, init_std=0.25, lo=0.02, hi=0.98),
}
DEFAULT_STATIC_BOUNDS = {
    "h0_m": ParamSearch(init_mean=1.2, init_std=0.5, lo=0.0, hi=2.5),
}


@dataclass(frozen=True)
class Scenario:
    """Fully validated scenario: typed blocks plus the normalized raw form."""

    name: str
    geometry: EmbankmentGeometry
    pvd: PvdDesign
    priors: SoilPriorSet
    requirements: Requirements
    costs: CostParams
    sigma_eps: float
    solver: SolverConfig
    heuristic: HeuristicParams
    n_particles: int
    policy_options: PolicyOptions
    study: StudyConfig
    provenance: dict
    raw: dict

    def hash(self) -> str:
        return scenario_hash(self.raw)

    def with_overrides(self, overrides: dict) -> "Scenario":
        """New scenario with dotted-path overrides applied to the raw form."""
        if not overrides:
            return self
        raw = json.loads(json.dumps(self.raw))
        for dotted, value in overrides.items():
            node = raw
            parts = dotted.split(".")
            for p in parts[:-1]:
                if not isinstance(node, dict) or p not in node:
                    raise ScenarioError("override path does not exist", dotted)
                node = node[p]
            leaf = parts[-1]
            if not isinstance(node, dict) or leaf not in node:
                raise ScenarioError("override path does not exist", dotted)
            node[leaf] = value
        return parse_scenario(raw)

    def with_sigma_eps(self, sigma_eps: float) -> "Scenario":
        return self.with_overrides({"measurement.sigma_eps_m": float(sigma_eps)})


def _parse_prior_entry(
    name: str, entry, interpretation: str, path: str, predictive_inflation: bool = False
) -> LognormalDist:
    entry = _expect_mapping(entry, path)
    _no_unknown(entry, ("samples", "mean", "cov"), path)
    has_samples = "samples" in entry
    has_moments = "mean" in entry or "cov" in entry
    if has_samples and has_moments:
        raise ScenarioError("give either samples or mean/cov, not both", path)
    if has_samples:
        samples = _get(entry, "samples", list, path, required=True)
        for i, s in enumerate(samples):
            if isinstance(s, bool) or not isinstance(s, (int, float)):
                raise ScenarioError(f"sample {i} is not a number: {s!r}", path)
        try:
            return fit_lognormal(
                [float(s) for s in samples], unit=name,
                predictive_inflation=predictive_inflation,
            )
        except Exception as exc:
            raise ScenarioError(str(exc), path) from exc
    if not ("mean" in entry and "cov" in entry):
        raise ScenarioError("moment form needs both mean and cov", path)
    mean = _get(entry, "mean", float, path, required=True)
    cov = _get(entry, "cov", float, path, required=True)
    try:
        if interpretation == "variance_fraction":
            return from_variance_fraction(mean, cov, unit=name)
        return from_moments(mean, cov, unit=name)
    except Exception as exc:
        raise ScenarioError(str(exc), path) from exc


def parse_scenario(doc: dict) -> Scenario:
    """Validate a raw mapping and build the typed scenario."""
    doc = _expect_mapping(doc, "<root>")
    allowed = (
        "schema_version", "name", "provenance", "geometry", "pvd", "priors",
        "requirements", "costs", "measurement", "solver", "heuristic", "study",
    )
    _no_unknown(doc, allowed, "<root>")

    version = _get(doc, "schema_version", int, "<root>", required=True)
    if version != SCHEMA_VERSION:
        raise ScenarioError(
            f"schema_version {version} unsupported (this build reads {SCHEMA_VERSION})",
            "schema_version",
        )
    name = _get(doc, "name", str, "<root>", required=True)

    prov = _expect_mapping(doc.get("provenance", {}), "provenance")
    _no_unknown(prov, PROVENANCE_BLOCKS, "provenance")
    for block in PROVENANCE_BLOCKS:
        v = _get(prov, block, str, "provenance", required=True)
        if v not in PROVENANCE_VALUES:
            raise ScenarioError(
                f"must be one of {PROVENANCE_VALUES}, got {v!r}", f"provenance.{block}"
            )

    g = _expect_mapping(doc.get("geometry", {}), "geometry")
    _no_unknown(
        g,
        ("clay_thickness_m", "crust_thickness_m", "embankment_height_m", "n_layers",
         "groundwater_depth_m", "gamma_w_kn_m3", "road_length_m"),
        "geometry",
    )
    try:
        geometry = EmbankmentGeometry(
            clay_thickness=_get(g, "clay_thickness_m", float, "geometry", default=15.5),
            crust_thickness=_get(g, "crust_thickness_m", float, "geometry", default=0.3),
            embankment_height=_get(g, "embankment_height_m", float, "geometry", default=1.2),
            n_layers=_get(g, "n_layers", int, "geometry", default=31),
            groundwater_depth=_get(g, "groundwater_depth_m", float, "geometry", default=0.3),
            gamma_w=_get(g, "gamma_w_kn_m3", float, "geometry", default=9.81),
            road_length=_get(g, "road_length_m", float, "geometry", default=550.0),
        )
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(str(exc), "geometry") from exc

    p = _expect_mapping(doc.get("pvd", {}), "pvd")
    _no_unknown(p, ("spacing_m", "pattern", "equivalent_drain_diameter_m", "drainage"), "pvd")
    try:
        pvd = PvdDesign(
            spacing=_get(p, "spacing_m", float, "pvd", default=0.9),
            pattern=_get(p, "pattern", str, "pvd", default="square"),
            equivalent_drain_diameter=_get(
                p, "equivalent_drain_diameter_m", float, "pvd", default=0.066
            ),
            drainage=_get(p, "drainage", str, "pvd", default="double"),
        )
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(str(exc), "pvd") from exc

    sv = _expect_mapping(doc.get("solver", {}), "solver")
    _no_unknown(
        sv,
        ("series_tol", "cov_interpretation", "settlement_comparator",
         "uncertainty_gate", "prob_comparator", "resampling", "ess_threshold",
         "prior_predictive_inflation"),
        "solver",
    )
    solver = SolverConfig(
        series_tol=_get(sv, "series_tol", float, "solver", default=1e-12),
        cov_interpretation=_get(sv, "cov_interpretation", str, "solver", default="cov"),
        settlement_comparator=_get(sv, "settlement_comparator", str, "solver", default="achieved"),
        uncertainty_gate=_get(sv, "uncertainty_gate", str, "solver", default="cov"),
        prob_comparator=_get(sv, "prob_comparator", str, "solver", default="noncompliance"),
        resampling=_get(sv, "resampling", str, "solver", default="ess_systematic"),
        ess_threshold=_get(sv, "ess_threshold", float, "solver", default=0.3),
        prior_predictive_inflation=bool(
            sv.get("prior_predictive_inflation", False)
        ),
    )

    pr = _expect_mapping(doc.get("priors", {}), "priors")
    _no_unknown(pr, PRIOR_KEYS.values(), "priors")
    dists = {}
    for pname, key in PRIOR_KEYS.items():
        if key not in pr:
            raise ScenarioError("missing required prior", f"priors.{key}")
        dists[pname] = _parse_prior_entry(
            pname, pr[key], solver.cov_interpretation, f"priors.{key}",
            solver.prior_predictive_inflation,
        )
    priors = SoilPriorSet(**dists)

    r = _expect_mapping(doc.get("requirements", {}), "requirements")
    _no_unknown(r, ("s_target_m", "ocr_target", "t_max_weeks"), "requirements")
    requirements = Requirements(
        s_target=_get(r, "s_target_m", float, "requirements", default=1.27),
        ocr_target=_get(r, "ocr_target", float, "requirements", default=1.10),
        t_max=_get(r, "t_max_weeks", int, "requirements", default=72),
    )

    c = _expect_mapping(doc.get("costs", {}), "costs")
    _no_unknown(
        c,
        ("c_sur_initial_sek_per_m2", "c_sur_increase_sek_per_m2", "remobilization_sek_per_m",
         "c_delay_sek_per_week", "delay_cap_weeks", "c_ocr_penalty_sek"),
        "costs",
    )
    costs = CostParams(
        c_sur_initial=_get(c, "c_sur_initial_sek_per_m2", float, "costs", default=8000.0),
        c_sur_increase=_get(c, "c_sur_increase_sek_per_m2", float, "costs", default=8000.0),
        remobilization=_get(c, "remobilization_sek_per_m", float, "costs", default=1000.0),
        c_delay=_get(c, "c_delay_sek_per_week", float, "costs", default=150000.0),
        delay_cap=_get(c, "delay_cap_weeks", int, "costs", default=52),
        c_ocr_penalty=_get(c, "c_ocr_penalty_sek", float, "costs", default=3.0e6),
    )

    m = _expect_mapping(doc.get("measurement", {}), "measurement")
    _no_unknown(m, ("sigma_eps_m",), "measurement")
    sigma_eps = _get(m, "sigma_eps_m", float, "measurement", default=0.05)
    if not (sigma_eps > 0):
        raise ScenarioError(f"sigma_eps_m must be > 0, got {sigma_eps}", "measurement.sigma_eps_m")

    h = _expect_mapping(doc.get("heuristic", {}), "heuristic")
    _no_unknown(h, ("h0_m", "cov_th", "p_th", "n_particles", "increment_grid_m"), "heuristic")
    grid_spec = _expect_mapping(
        h.get("increment_grid_m", {"start": 0.1, "stop": 3.0, "step": 0.1}),
        "heuristic.increment_grid_m",
    )
    _no_unknown(grid_spec, ("start", "stop", "step"), "heuristic.increment_grid_m")
    heuristic = HeuristicParams(
        h0=_get(h, "h0_m", float, "heuristic", default=1.0),
        cov_th=_get(h, "cov_th", float, "heuristic", default=0.30),
        p_th=_get(h, "p_th", float, "heuristic", default=0.50),
    )
    n_particles = _get(h, "n_particles", int, "heuristic", default=500)
    if n_particles < 2:
        raise ScenarioError("n_particles must be >= 2", "heuristic.n_particles")
    policy_options = PolicyOptions(
        settlement_comparator=solver.settlement_comparator,
        uncertainty_gate=solver.uncertainty_gate,
        prob_comparator=solver.prob_comparator,
        increment_grid_start=_get(grid_spec, "start", float, "heuristic.increment_grid_m", default=0.1),
        increment_grid_stop=_get(grid_spec, "stop", float, "heuristic.increment_grid_m", default=3.0),
        increment_grid_step=_get(grid_spec, "step", float, "heuristic.increment_grid_m", default=0.1),
    )

    st = _expect_mapping(doc.get("study", {}), "study")
    _no_unknown(
        st,
        ("sigma_eps_list_m", "restarts", "final_n_mc", "ce", "bu_bounds", "static_bounds"),
        "study",
    )
    ce_map = _expect_mapping(st.get("ce", {}), "study.ce")
    _no_unknown(
        ce_map,
        ("n_ce", "n_iter_max", "n_mc", "n_bu", "elite_fraction", "smoothing_alpha",
         "convergence_std_tol"),
        "study.ce",
    )
    ce = CeSettings(
        n_ce=_get(ce_map, "n_ce", int, "study.ce", default=100),
        n_iter_max=_get(ce_map, "n_iter_max", int, "study.ce", default=50),
        n_mc=_get(ce_map, "n_mc", int, "study.ce", default=100),
        n_bu=_get(ce_map, "n_bu", int, "study.ce", default=100),
        elite_fraction=_get(ce_map, "elite_fraction", float, "study.ce", default=0.1),
        smoothing_alpha=_get(ce_map, "smoothing_alpha", float, "study.ce", default=0.7),
        convergence_std_tol=_get(ce_map, "convergence_std_tol", float, "study.ce", default=1e-3),
    )

    def parse_bounds(block_name: str, defaults: dict) -> dict:
        raw_b = _expect_mapping(st.get(block_name, {}), f"study.{block_name}")
        _no_unknown(raw_b, defaults.keys(), f"study.{block_name}")
        out = {}
        for key, dflt in defaults.items():
            if key not in raw_b:
                out[key] = dflt
                continue
            entry = _expect_mapping(raw_b[key], f"study.{block_name}.{key}")
            _no_unknown(entry, ("init_mean", "init_std", "lo", "hi"), f"study.{block_name}.{key}")
            out[key] = ParamSearch(
                init_mean=_get(entry, "init_mean", float, f"study.{block_name}.{key}", default=dflt.init_mean),
                init_std=_get(entry, "init_std", float, f"study.{block_name}.{key}", default=dflt.init_std),
                lo=_get(entry, "lo", float, f"study.{block_name}.{key}", default=dflt.lo),
                hi=_get(entry, "hi", float, f"study.{block_name}.{key}", default=dflt.hi),
            )
        return out

    sig_list = _get(st, "sigma_eps_list_m", list, "study", default=[0.05, 0.10, 0.15])
    for i, s in enumerate(sig_list):
        if isinstance(s, bool) or not isinstance(s, (int, float)):
            raise ScenarioError(f"entry {i} is not a number: {s!r}", "study.sigma_eps_list_m")
    study = StudyConfig(
        sigma_eps_list=tuple(float(s) for s in sig_list),
        restarts=_get(st, "restarts", int, "study", default=3),
        final_n_mc=_get(st, "final_n_mc", int, "study", default=5000),
        ce=ce,
        bu_bounds=parse_bounds("bu_bounds", DEFAULT_BU_BOUNDS),
        static_bounds=parse_bounds("static_bounds", DEFAULT_STATIC_BOUNDS),
    )

    scenario = Scenario(
        name=name,
        geometry=geometry,
        pvd=pvd,
        priors=priors,
        requirements=requirements,
        costs=costs,
        sigma_eps=sigma_eps,
        solver=solver,
        heuristic=heuristic,
        n_particles=n_particles,
        policy_options=policy_options,
        study=study,
        provenance={b: prov[b] for b in PROVENANCE_BLOCKS},
        raw={},
    )
    return replace(scenario, raw=normalize(scenario, doc))


def normalize(s: Scenario, original: dict | None = None) -> dict:
    """Canonical raw form with defaults materialized, keys in schema order."""
    prior_block = {}
    if original is not None and "priors" in original:
        for pname, key in PRIOR_KEYS.items():
            entry = dict(original["priors"][key])
            if "samples" in entry:
                prior_block[key] = {"samples": [float(v) for v in entry["samples"]]}
            else:
                prior_block[key] = {"mean": float(entry["mean"]), "cov": float(entry["cov"])}
    else:
        for pname, key in PRIOR_KEYS.items():
            d: LognormalDist = getattr(s.priors, pname)
            prior_block[key] = {"mean": d.mean(), "cov": d.cov()}

    def bounds_block(bounds: dict) -> dict:
        return {
            k: {"init_mean": v.init_mean, "init_std": v.init_std, "lo": v.lo, "hi": v.hi}
            for k, v in bounds.items()
        }

    return {
        "schema_version": SCHEMA_VERSION,
        "name": s.name,
        "provenance": dict(s.provenance),
        "geometry": {
            "clay_thickness_m": s.geometry.clay_thickness,
            "crust_thickness_m": s.geometry.crust_thickness,
            "embankment_height_m": s.geometry.embankment_height,
            "n_layers": s.geometry.n_layers,
            "groundwater_depth_m": s.geometry.groundwater_depth,
            "gamma_w_kn_m3": s.geometry.gamma_w,
            "road_length_m": s.geometry.road_length,
        },
        "pvd": {
            "spacing_m": s.pvd.spacing,
            "pattern": s.pvd.pattern,
            "equivalent_drain_diameter_m": s.pvd.equivalent_drain_diameter,
            "drainage": s.pvd.drainage,
        },
        "priors": prior_block,
        "requirements": {
            "s_target_m": s.requirements.s_target,
            "ocr_target": s.requirements.ocr_target,
            "t_max_weeks": s.requirements.t_max,
        },
        "costs": {
            "c_sur_initial_sek_per_m2": s.costs.c_sur_initial,
            "c_sur_increase_sek_per_m2": s.costs.c_sur_increase,
            "remobilization_sek_per_m": s.costs.remobilization,
            "c_delay_sek_per_week": s.costs.c_delay,
            "delay_cap_weeks": s.costs.delay_cap,
            "c_ocr_penalty_sek": s.costs.c_ocr_penalty,
        },
        "measurement": {"sigma_eps_m": s.sigma_eps},
        "solver": {
            "series_tol": s.solver.series_tol,
            "cov_interpretation": s.solver.cov_interpretation,
            "settlement_comparator": s.solver.settlement_comparator,
            "uncertainty_gate": s.solver.uncertainty_gate,
            "prob_comparator": s.solver.prob_comparator,
            "resampling": s.solver.resampling,
            "ess_threshold": s.solver.ess_threshold,
            "prior_predictive_inflation": s.solver.prior_predictive_inflation,
        },
        "heuristic": {
            "h0_m": s.heuristic.h0,
            "cov_th": s.heuristic.cov_th,
            "p_th": s.heuristic.p_th,
            "n_particles": s.n_particles,
            "increment_grid_m": {
                "start": s.policy_options.increment_grid_start,
                "stop": s.policy_options.increment_grid_stop,
                "step": s.policy_options.increment_grid_step,
            },
        },
        "study": {
            "sigma_eps_list_m": list(s.study.sigma_eps_list),
            "restarts": s.study.restarts,
            "final_n_mc": s.study.final_n_mc,
            "ce": {
                "n_ce": s.study.ce.n_ce,
                "n_iter_max": s.study.ce.n_iter_max,
                "n_mc": s.study.ce.n_mc,
                "n_bu": s.study.ce.n_bu,
                "elite_fraction": s.study.ce.elite_fraction,
                "smoothing_alpha": s.study.ce.smoothing_alpha,
                "convergence_std_tol": s.study.ce.convergence_std_tol,
            },
            "bu_bounds": bounds_block(s.study.bu_bounds),
            "static_bounds": bounds_block(s.study.static_bounds),
        },
    }


class _FlowDumper(yaml.SafeDumper):
    pass


def _repr_float(dumper, value):
    if value != value:
        return dumper.represent_scalar("tag:yaml.org,2002:float", ".nan")
    if value == math.inf:
        return dumper.represent_scalar("tag:yaml.org,2002:float", ".inf")
    if value == -math.inf:
        return dumper.represent_scalar("tag:yaml.org,2002:float", "-.inf")
    text = repr(float(value))
    # bare exponents like 1e-12 parse as strings in YAML 1.1; keep a dot
    if "." not in text and "e" in text:
        mant, _, exp = text.partition("e")
        text = f"{mant}.0e{exp}"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_FlowDumper.add_representer(float, _repr_float)


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario YAML file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"YAML parse failure: {exc}") from exc
    if doc is None:
        raise ScenarioError(f"scenario file is empty: {path}")
    return parse_scenario(doc)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    """Write the normalized form; load(save(s)) is the identity."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.dump(scenario.raw, fh, Dumper=_FlowDumper, sort_keys=False, default_flow_style=False)


def bundled_scenario_path() -> Path:
    """Filesystem path of the shipped default scenario."""
    ref = resources.files("preloadtwin").joinpath(f"data/{BUNDLED_SCENARIO}.yaml")
    return Path(str(ref))


def load_bundled_scenario() -> Scenario:
    return load_scenario(bundled_scenario_path())


def canonical_json(doc) -> str:
    """Deterministic JSON used for hashing and log payloads."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def scenario_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()
