"""Monte Carlo policy evaluation and cross-entropy policy search.

evaluate_policy scores a heuristic by simulating ground truths from the
priors, synthesizing noisy weekly measurements, running the particle
filter and the decision rule against them, and pricing the outcome on the
true trajectory. Rollout k of an evaluation with seed s draws its truth,
noise, and filter randomness from child streams of (s, k), so every
candidate policy sees identical ground truths: cost differences between
candidates are policy differences, not noise (common random numbers).

cross_entropy_optimize fits independent truncated normals to the elite
candidates of each iteration, with mean/std smoothing, and is deliberately
given the whole per-iteration trace as first-class output.

run_study reproduces the study layout: one belief-updated row per
measurement-error scenario plus one static baseline row, each re-evaluated
at a larger Monte Carlo size with a shared final-evaluation seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .belief import Measurement, ModelContext, init_belief_with_rng, update
from .consolidation import ActionSchedule, pack_geometry, simulate_trajectory
from .errors import NumericError, OptimizationFailedError, RolloutError, ScenarioError
from .policy import (
    CMP_RESIDUAL,
    GATE_STD,
    PROB_PRINTED,
    HeuristicParams,
    heuristic_bu_decide,
    total_cost,
)
from .priors import sample_soil_array, SoilSample
from .rngstream import stream
from .scenario import CeSettings, ParamSearch, Scenario

POLICY_BU = "bu"
POLICY_STATIC = "static"

# Stream index reserved for the shared final evaluation of a study.
FINAL_EVAL_INDEX = 10**6


def _derive_seed(master_seed: int, index: int) -> int:
    return int(stream(master_seed, "eval", index).integers(0, 2**62))


@dataclass
class EvaluationResult:
    """Cost statistics of one policy evaluation."""

    policy_kind: str
    w: HeuristicParams
    n_mc: int
    seed: int
    sigma_eps: float
    mean_cost: float
    std_cost: float
    component_means: dict
    records: dict

    def record(self, k: int) -> dict:
        return {key: arr[k] for key, arr in self.records.items()}


def _rollout_streams(seed: int, k: int):
    return (
        stream(seed, "truth", k),
        stream(seed, "noise", k),
        stream(seed, "belief", k),
    )


RESAMPLE_MODE_CODES = {
    "multinomial": 0,
    "systematic": 1,
    "ess_multinomial": 2,
    "ess_systematic": 3,
}


def _policy_flags(scenario: Scenario) -> tuple[int, int, int]:
    opts = scenario.policy_options
    return (
        1 if opts.uncertainty_gate == GATE_STD else 0,
        1 if opts.settlement_comparator == CMP_RESIDUAL else 0,
        1 if opts.prob_comparator == PROB_PRINTED else 0,
    )


def _cost_components(scenario: Scenario, h0, h_add, delay, ocr_tmax):
    costs = scenario.costs
    road = scenario.geometry.road_length
    c1 = costs.c_sur_initial * h0 * road
    c2 = (costs.remobilization + costs.c_sur_increase * h_add) * road if h_add > 0 else 0.0
    c_delay = costs.c_delay * min(delay, costs.delay_cap)
    c_ocr = 0.0 if ocr_tmax >= scenario.requirements.ocr_target else costs.c_ocr_penalty
    return c1, c2, c_delay, c_ocr


def evaluate_policy(
    w: HeuristicParams,
    scenario: Scenario,
    policy_kind: str,
    n_mc: int,
    n_bu: int,
    seed: int,
) -> EvaluationResult:
    """Expected cost of a policy over n_mc seeded rollouts.

    The static policy never reads measurements, so its result is
    bit-identical across sigma_eps values.
    """
    if policy_kind not in (POLICY_BU, POLICY_STATIC):
        raise ScenarioError(f"policy_kind must be bu|static, got {policy_kind!r}")
    if n_mc < 2:
        raise ScenarioError(f"n_mc must be >= 2, got {n_mc}")
    req = scenario.requirements
    geom_pack = pack_geometry(scenario.geometry, scenario.pvd, scenario.solver.series_tol)
    gate_std, cmp_residual, prob_printed = _policy_flags(scenario)
    resample_mode = RESAMPLE_MODE_CODES[scenario.solver.resampling]
    ess_threshold = scenario.solver.ess_threshold
    grid = scenario.policy_options.grid()
    tol = scenario.solver.series_tol
    t_max = req.t_max
    delay_cap = scenario.costs.delay_cap

    cols = {
        "k": np.empty(n_mc, dtype=np.int64),
        "decision_week": np.empty(n_mc, dtype=np.int64),
        "h_add_m": np.empty(n_mc),
        "grid_exhausted": np.zeros(n_mc, dtype=bool),
        "s_tmax_m": np.empty(n_mc),
        "ocr_tmax": np.empty(n_mc),
        "delay_weeks": np.empty(n_mc, dtype=np.int64),
        "target_never_reached": np.zeros(n_mc, dtype=bool),
        "cost_sek": np.empty(n_mc),
        "cost_surcharge_initial_sek": np.empty(n_mc),
        "cost_surcharge_increase_sek": np.empty(n_mc),
        "cost_delay_sek": np.empty(n_mc),
        "cost_ocr_sek": np.empty(n_mc),
        "truth_hash": [],
    }

    for k in range(n_mc):
        truth_rng, noise_rng, belief_rng = _rollout_streams(seed, k)
        pt = sample_soil_array(scenario.priors, truth_rng, 1)[0]
        pt_pack = pt.copy()
        pt_pack[7] /= 52.0
        pt_pack[8] /= 52.0
        cols["truth_hash"].append(hashlib.sha256(pt_pack.tobytes()).hexdigest()[:16])

        if policy_kind == POLICY_STATIC:
            status, s_tmax, ocr_tmax, delay, never = kernels.truth_summary(
                pt_pack, geom_pack, w.h0, math.inf, 0.0, t_max, delay_cap, tol,
                req.s_target, cmp_residual,
            )
            decision_week, h_add, grid_flag = -1, 0.0, 0
        else:
            particles = sample_soil_array(scenario.priors, belief_rng, n_bu)
            P = particles.copy()
            P[:, 7] /= 52.0
            P[:, 8] /= 52.0
            xi = noise_rng.standard_normal(t_max)
            us = belief_rng.random((t_max, n_bu))
            (
                status, decision_week, h_add, grid_flag, s_tmax, ocr_tmax,
                delay, never, _gate, _prob,
            ) = kernels.bu_rollout(
                pt_pack, P, geom_pack, xi, us, scenario.sigma_eps,
                w.h0, w.cov_th, w.p_th, grid, req.s_target, req.ocr_target,
                t_max, delay_cap, tol, gate_std, cmp_residual, prob_printed,
                resample_mode, ess_threshold,
            )
        if status != kernels.ROLLOUT_OK:
            raise RolloutError(k, NumericError(f"rollout kernel status {status}"))

        c1, c2, c_delay, c_ocr = _cost_components(scenario, w.h0, h_add, delay, ocr_tmax)
        cols["k"][k] = k
        cols["decision_week"][k] = int(decision_week)
        cols["h_add_m"][k] = float(h_add)
        cols["grid_exhausted"][k] = bool(grid_flag)
        cols["s_tmax_m"][k] = float(s_tmax)
        cols["ocr_tmax"][k] = float(ocr_tmax)
        cols["delay_weeks"][k] = int(delay)
        cols["target_never_reached"][k] = bool(never)
        cols["cost_surcharge_initial_sek"][k] = c1
        cols["cost_surcharge_increase_sek"][k] = c2
        cols["cost_delay_sek"][k] = c_delay
        cols["cost_ocr_sek"][k] = c_ocr
        cols["cost_sek"][k] = c1 + c2 + c_delay + c_ocr

    component_means = {
        "surcharge_initial": float(np.mean(cols["cost_surcharge_initial_sek"])),
        "surcharge_increase": float(np.mean(cols["cost_surcharge_increase_sek"])),
        "delay": float(np.mean(cols["cost_delay_sek"])),
        "ocr_penalty": float(np.mean(cols["cost_ocr_sek"])),
    }
    # the headline mean is the component sum, so additivity holds exactly
    mean_cost = sum(component_means.values())
    std_cost = float(np.std(cols["cost_sek"], ddof=1))
    return EvaluationResult(
        policy_kind=policy_kind,
        w=w,
        n_mc=n_mc,
        seed=seed,
        sigma_eps=scenario.sigma_eps,
        mean_cost=mean_cost,
        std_cost=std_cost,
        component_means=component_means,
        records=cols,
    )


def reference_bu_rollout(
    scenario: Scenario, w: HeuristicParams, n_bu: int, seed: int, k: int
) -> dict:
    """Step-by-step rollout through the public Belief/policy API.

    Mirrors the fused kernel rollout draw for draw; used to validate the
    kernel against the modular path.
    """
    req = scenario.requirements
    t_max = req.t_max
    truth_rng, noise_rng, belief_rng = _rollout_streams(seed, k)
    truth_arr = sample_soil_array(scenario.priors, truth_rng, 1)[0]
    truth = SoilSample.from_array(truth_arr)
    ctx = ModelContext.from_scenario(scenario)
    belief = init_belief_with_rng(
        scenario.priors, n_bu, belief_rng, ctx, ActionSchedule(h0=w.h0)
    )
    xi = noise_rng.standard_normal(t_max)

    schedule = ActionSchedule(h0=w.h0)
    truth_traj = simulate_trajectory(
        truth, scenario.geometry, scenario.pvd, schedule, t_max + scenario.costs.delay_cap,
        scenario.solver.series_tol,
    )
    decision_week = -1
    h_add = 0.0
    grid_exhausted = False
    for t in range(1, t_max + 1):
        z = float(truth_traj.settlement_m[t]) + scenario.sigma_eps * float(xi[t - 1])
        belief = update(belief, Measurement(t=t, z_s=z, sigma_eps=scenario.sigma_eps))
        decision = heuristic_bu_decide(
            belief, t, w, req, scenario.policy_options
        )
        if decision.action == "keep_measuring":
            continue
        decision_week = t
        if decision.is_adjust:
            h_add = decision.h_add
            grid_exhausted = decision.grid_exhausted
            schedule = schedule.with_increment(t, h_add)
            truth_traj = simulate_trajectory(
                truth, scenario.geometry, scenario.pvd, schedule,
                t_max + scenario.costs.delay_cap, scenario.solver.series_tol,
            )
        break

    breakdown = total_cost(
        truth_traj, schedule, req, scenario.costs, scenario.geometry.road_length,
        scenario.policy_options,
    )
    return {
        "decision_week": decision_week,
        "h_add_m": h_add,
        "grid_exhausted": grid_exhausted,
        "s_tmax_m": float(truth_traj.settlement_m[t_max]),
        "ocr_tmax": float(truth_traj.ocr[t_max]),
        "delay_weeks": breakdown.delay_weeks,
        "cost_sek": breakdown.total,
        "components": {
            "surcharge_initial": breakdown.surcharge_initial,
            "surcharge_increase": breakdown.surcharge_increase,
            "delay": breakdown.delay,
            "ocr_penalty": breakdown.ocr_penalty,
        },
    }


@dataclass(frozen=True)
class CeConfig:
    """Cross-entropy search space and sizes for one optimization."""

    names: tuple
    init_mean: np.ndarray
    init_std: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_ce: int = 100
    n_iter_max: int = 50
    elite_fraction: float = 0.1
    smoothing_alpha: float = 0.7
    convergence_std_tol: float = 1e-3
    master_seed: int = 0

    def __post_init__(self):
        d = len(self.names)
        for arr_name in ("init_mean", "init_std", "lo", "hi"):
            arr = getattr(self, arr_name)
            if np.asarray(arr).shape != (d,):
                raise ScenarioError(f"{arr_name} must have shape ({d},)")
        if not (0.0 < self.elite_fraction < 1.0):
            raise ScenarioError("elite_fraction must lie in (0, 1)")
        if not (0.0 < self.smoothing_alpha <= 1.0):
            raise ScenarioError("smoothing_alpha must lie in (0, 1]")
        if self.n_elite < 2:
            raise ScenarioError("n_ce * elite_fraction must be >= 2")
        if np.any(np.asarray(self.lo) >= np.asarray(self.hi)):
            raise ScenarioError("bounds must satisfy lo < hi")

    @property
    def n_elite(self) -> int:
        return max(2, int(round(self.n_ce * self.elite_fraction)))

    @classmethod
    def from_bounds(cls, bounds: dict, ce: CeSettings, master_seed: int) -> "CeConfig":
        names = tuple(bounds.keys())
        ps: list[ParamSearch] = [bounds[n] for n in names]
        return cls(
            names=names,
            init_mean=np.array([p.init_mean for p in ps]),
            init_std=np.array([p.init_std for p in ps]),
            lo=np.array([p.lo for p in ps]),
            hi=np.array([p.hi for p in ps]),
            n_ce=ce.n_ce,
            n_iter_max=ce.n_iter_max,
            elite_fraction=ce.elite_fraction,
            smoothing_alpha=ce.smoothing_alpha,
            convergence_std_tol=ce.convergence_std_tol,
            master_seed=master_seed,
        )


@dataclass
class CeResult:
    w_opt: np.ndarray
    trace: list
    converged: bool
    n_iterations: int


def _sample_truncated(rng, mean, std, lo, hi, max_tries=10_000):
    d = mean.shape[0]
    out = np.empty(d)
    for j in range(d):
        for _ in range(max_tries):
            x = mean[j] + std[j] * rng.standard_normal()
            if lo[j] <= x <= hi[j]:
                out[j] = x
                break
        else:
            out[j] = min(max(mean[j], lo[j]), hi[j])
    return out


def cross_entropy_optimize(objective, cfg: CeConfig) -> CeResult:
    """Minimize a noisy objective by iterated elite refitting.

    objective(w, eval_seed) -> cost; within one iteration every candidate
    receives the same eval_seed (common random numbers). Candidates whose
    evaluation raises NumericError score +inf; an iteration where every
    candidate fails aborts the optimization.
    """
    rng = stream(cfg.master_seed, "ce")
    mean = np.asarray(cfg.init_mean, dtype=float).copy()
    std = np.asarray(cfg.init_std, dtype=float).copy()
    trace: list[dict] = []
    converged = False
    it = 0
    for it in range(1, cfg.n_iter_max + 1):
        eval_seed = _derive_seed(cfg.master_seed, it)
        candidates = np.empty((cfg.n_ce, mean.shape[0]))
        costs = np.empty(cfg.n_ce)
        n_failed = 0
        for j in range(cfg.n_ce):
            candidates[j] = _sample_truncated(rng, mean, std, cfg.lo, cfg.hi)
            try:
                costs[j] = float(objective(candidates[j], eval_seed))
            except NumericError:
                costs[j] = math.inf
                n_failed += 1
        if n_failed == cfg.n_ce:
            raise OptimizationFailedError(
                f"every candidate of iteration {it} failed", trace
            )
        order = np.argsort(costs, kind="stable")
        elite = candidates[order[: cfg.n_elite]]
        elite_costs = costs[order[: cfg.n_elite]]
        elite_mean = elite.mean(axis=0)
        elite_std = elite.std(axis=0, ddof=1)
        mean = cfg.smoothing_alpha * elite_mean + (1.0 - cfg.smoothing_alpha) * mean
        std = cfg.smoothing_alpha * elite_std + (1.0 - cfg.smoothing_alpha) * std
        trace.append(
            {
                "iteration": it,
                "eval_seed": eval_seed,
                "mean": [float(v) for v in mean],
                "std": [float(v) for v in std],
                "elite_mean_cost": float(np.mean(elite_costs)),
                "best_cost": float(elite_costs[0]),
                "best_w": [float(v) for v in candidates[order[0]]],
                "n_failed": n_failed,
            }
        )
        if np.all(std < cfg.convergence_std_tol):
            converged = True
            break
    return CeResult(w_opt=mean, trace=trace, converged=converged, n_iterations=it)


def _heuristic_from_vector(names, w) -> HeuristicParams:
    d = dict(zip(names, w))
    return HeuristicParams(
        h0=float(d["h0_m"]),
        cov_th=float(d.get("cov_th", 1.0)),
        p_th=float(d.get("p_th", 0.5)),
    )


@dataclass
class StudyRow:
    policy: str
    sigma_eps: float | None
    w: dict
    expected_cost: float
    std_cost: float
    components: dict
    n_mc: int
    settlement_ok_rate: float
    ocr_ok_rate: float
    adjust_rate: float
    best_restart: int


@dataclass
class StudyResult:
    scenario_hash: str
    master_seed: int
    final_eval_seed: int
    rows: list
    traces: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "master_seed": self.master_seed,
            "final_eval_seed": self.final_eval_seed,
            "rows": [
                {
                    "policy": r.policy,
                    "sigma_eps_m": r.sigma_eps,
                    "w": r.w,
                    "expected_cost_sek": r.expected_cost,
                    "std_cost_sek": r.std_cost,
                    "components_sek": r.components,
                    "n_mc": r.n_mc,
                    "settlement_ok_rate": r.settlement_ok_rate,
                    "ocr_ok_rate": r.ocr_ok_rate,
                    "adjust_rate": r.adjust_rate,
                    "best_restart": r.best_restart,
                }
                for r in self.rows
            ],
        }

    def to_table_text(self) -> str:
        """Delimited comparison table (layout of the results tables)."""
        header = (
            "policy\tsigma_eps_m\th0_m\tcov_th\tp_th\texpected_cost_msek\tstd_cost_msek"
            "\tc_sur_initial_msek\tc_sur_increase_msek\tc_delay_msek\tc_ocr_msek"
        )
        lines = [header]
        for r in self.rows:
            w = r.w
            lines.append(
                "\t".join(
                    [
                        r.policy,
                        "-" if r.sigma_eps is None else repr(r.sigma_eps),
                        repr(round(w.get("h0_m", 0.0), 6)),
                        "-" if "cov_th" not in w else repr(round(w["cov_th"], 6)),
                        "-" if "p_th" not in w else repr(round(w["p_th"], 6)),
                        repr(round(r.expected_cost / 1e6, 6)),
                        repr(round(r.std_cost / 1e6, 6)),
                        repr(round(r.components["surcharge_initial"] / 1e6, 6)),
                        repr(round(r.components["surcharge_increase"] / 1e6, 6)),
                        repr(round(r.components["delay"] / 1e6, 6)),
                        repr(round(r.components["ocr_penalty"] / 1e6, 6)),
                    ]
                )
            )
        return "\n".join(lines) + "\n"


def _evaluation_rates(result: EvaluationResult, scenario: Scenario) -> tuple[float, float, float]:
    recs = result.records
    cmp_residual = scenario.policy_options.settlement_comparator == CMP_RESIDUAL
    s = recs["s_tmax_m"]
    if cmp_residual:
        s_ok = float(np.mean(s <= scenario.requirements.s_target))
    else:
        s_ok = float(np.mean(s >= scenario.requirements.s_target))
    ocr_ok = float(np.mean(recs["ocr_tmax"] >= scenario.requirements.ocr_target))
    adj = float(np.mean(recs["h_add_m"] > 0))
    return s_ok, ocr_ok, adj


def optimize_policy(
    scenario: Scenario,
    policy_kind: str,
    master_seed: int,
    restarts: int | None = None,
    ce_settings: CeSettings | None = None,
) -> tuple[HeuristicParams, dict, list, int]:
    """CE-optimize one policy with restarts; best restart wins on a common
    final evaluation. Returns (w_opt, per-restart finals, traces, best)."""
    study = scenario.study
    ce = ce_settings if ce_settings is not None else study.ce
    n_restarts = restarts if restarts is not None else study.restarts
    bounds = study.bu_bounds if policy_kind == POLICY_BU else study.static_bounds
    final_seed = _derive_seed(master_seed, FINAL_EVAL_INDEX)

    results = []
    traces = []
    for r in range(n_restarts):
        cfg = CeConfig.from_bounds(bounds, ce, _derive_seed(master_seed, 2000 + r))

        def objective(w_vec, eval_seed):
            w = _heuristic_from_vector(cfg.names, w_vec)
            return evaluate_policy(
                w, scenario, policy_kind, ce.n_mc, ce.n_bu, eval_seed
            ).mean_cost

        ce_result = cross_entropy_optimize(objective, cfg)
        w_opt = _heuristic_from_vector(cfg.names, ce_result.w_opt)
        final = evaluate_policy(
            w_opt, scenario, policy_kind, study.final_n_mc, ce.n_bu, final_seed
        )
        results.append((w_opt, final))
        traces.append(ce_result.trace)
    best = int(np.argmin([f.mean_cost for _, f in results]))
    w_best, final_best = results[best]
    return w_best, {"final": final_best, "all": results}, traces, best


def run_study(
    scenario: Scenario,
    sigma_eps_list=None,
    master_seed: int = 0,
    restarts: int | None = None,
    ce_settings: CeSettings | None = None,
    final_n_mc: int | None = None,
) -> StudyResult:
    """Optimize and compare the belief-updated and static policies.

    One BU row per measurement-error value; the static baseline (whose
    objective is independent of sigma_eps) is optimized once. All final
    evaluations share one evaluation seed, so rows are comparable under
    common random numbers.
    """
    sig_list = list(scenario.study.sigma_eps_list if sigma_eps_list is None else sigma_eps_list)
    if final_n_mc is not None:
        scenario = scenario.with_overrides({"study.final_n_mc": int(final_n_mc)})
    rows: list[StudyRow] = []
    traces: dict = {}
    final_seed = _derive_seed(master_seed, FINAL_EVAL_INDEX)

    for sigma in sig_list:
        scn = scenario.with_sigma_eps(float(sigma))
        w_opt, evals, tr, best = optimize_policy(
            scn, POLICY_BU, master_seed, restarts, ce_settings
        )
        final: EvaluationResult = evals["final"]
        s_ok, ocr_ok, adj = _evaluation_rates(final, scn)
        rows.append(
            StudyRow(
                policy="bu",
                sigma_eps=float(sigma),
                w={"h0_m": w_opt.h0, "cov_th": w_opt.cov_th, "p_th": w_opt.p_th},
                expected_cost=final.mean_cost,
                std_cost=final.std_cost,
                components=final.component_means,
                n_mc=final.n_mc,
                settlement_ok_rate=s_ok,
                ocr_ok_rate=ocr_ok,
                adjust_rate=adj,
                best_restart=best,
            )
        )
        traces[f"bu_sigma_{sigma}"] = tr

    if sig_list:
        w_static, evals_s, tr_s, best_s = optimize_policy(
            scenario, POLICY_STATIC, master_seed, restarts, ce_settings
        )
        final_s: EvaluationResult = evals_s["final"]
        s_ok, ocr_ok, adj = _evaluation_rates(final_s, scenario)
        rows.append(
            StudyRow(
                policy="static",
                sigma_eps=None,
                w={"h0_m": w_static.h0},
                expected_cost=final_s.mean_cost,
                std_cost=final_s.std_cost,
                components=final_s.component_means,
                n_mc=final_s.n_mc,
                settlement_ok_rate=s_ok,
                ocr_ok_rate=ocr_ok,
                adjust_rate=adj,
                best_restart=best_s,
            )
        )
        traces["static"] = tr_s

    return StudyResult(
        scenario_hash=scenario.hash(),
        master_seed=master_seed,
        final_eval_seed=final_seed,
        rows=rows,
        traces=traces,
    )
