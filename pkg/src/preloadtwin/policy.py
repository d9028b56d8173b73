"""Decision rules and project economics.

Two policies are provided:
  * the belief-updated heuristic: measure weekly until the posterior
    spread of S(t_max) drops below a gate threshold, then place the
    smallest surcharge increment (from a fixed grid) that pushes the
    predicted probability of missing the settlement target under p_th;
  * the static baseline: choose h0 once, never adjust.

Costs: initial surcharge placement, optional increment (with a
remobilization charge), a per-week delay penalty capped at delay_cap, and
a fixed penalty when the OCR requirement is missed. Per-meter rates scale
with road length. The default SEK rates are calibration placeholders
(flagged non_paper in the scenario file), so absolute costs are only
meaningful relative to each other unless real rates are supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .belief import Belief, gate_statistic, prob_above_target, prob_below_target
from .consolidation import ActionSchedule, Trajectory
from .errors import ScenarioError

GATE_COV = "cov"
GATE_STD = "std"
CMP_ACHIEVED = "achieved"
CMP_RESIDUAL = "residual"
PROB_NONCOMPLIANCE = "noncompliance"
PROB_PRINTED = "printed"


@dataclass(frozen=True)
class Requirements:
    """Unloading-time requirements on settlement and overconsolidation."""

    s_target: float = 1.27
    ocr_target: float = 1.10
    t_max: int = 72

    def __post_init__(self):
        if self.s_target <= 0:
            raise ScenarioError(f"s_target must be > 0, got {self.s_target}")
        if self.ocr_target < 1:
            raise ScenarioError(f"ocr_target must be >= 1, got {self.ocr_target}")
        if self.t_max < 1:
            raise ScenarioError(f"t_max must be >= 1, got {self.t_max}")


@dataclass(frozen=True)
class CostParams:
    """SEK cost rates; per-meter rates are multiplied by road length."""

    c_sur_initial: float = 8000.0      # SEK per m height per m road
    c_sur_increase: float = 8000.0     # SEK per m height per m road
    remobilization: float = 400.0      # SEK per m road, charged once per increment
    c_delay: float = 250000.0          # SEK per week of delay
    delay_cap: int = 52                # weeks
    c_ocr_penalty: float = 3.0e6       # SEK, fixed

    def __post_init__(self):
        for name in ("c_sur_initial", "c_sur_increase", "remobilization", "c_delay", "c_ocr_penalty"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be >= 0")
        if self.delay_cap < 0:
            raise ScenarioError("delay_cap must be >= 0")


@dataclass(frozen=True)
class HeuristicParams:
    """The three tunables of the belief-updated policy."""

    h0: float
    cov_th: float
    p_th: float

    def __post_init__(self):
        if self.h0 < 0:
            raise ScenarioError(f"h0 must be >= 0, got {self.h0}")
        if not (self.cov_th > 0):
            raise ScenarioError(f"cov_th must be > 0, got {self.cov_th}")
        if not (0.0 < self.p_th < 1.0):
            raise ScenarioError(f"p_th must lie in (0, 1), got {self.p_th}")

    def as_array(self) -> np.ndarray:
        return np.array([self.h0, self.cov_th, self.p_th])


@dataclass(frozen=True)
class PolicyOptions:
    """Config-exposed comparator/gate conventions (spec open questions)."""

    settlement_comparator: str = CMP_ACHIEVED
    uncertainty_gate: str = GATE_COV
    prob_comparator: str = PROB_NONCOMPLIANCE
    increment_grid_start: float = 0.1
    increment_grid_stop: float = 3.0
    increment_grid_step: float = 0.1

    def __post_init__(self):
        if self.settlement_comparator not in (CMP_ACHIEVED, CMP_RESIDUAL):
            raise ScenarioError("settlement_comparator must be achieved|residual")
        if self.uncertainty_gate not in (GATE_COV, GATE_STD):
            raise ScenarioError("uncertainty_gate must be cov|std")
        if self.prob_comparator not in (PROB_NONCOMPLIANCE, PROB_PRINTED):
            raise ScenarioError("prob_comparator must be noncompliance|printed")
        if not (0 < self.increment_grid_start <= self.increment_grid_stop):
            raise ScenarioError("need 0 < grid start <= stop")
        if self.increment_grid_step <= 0:
            raise ScenarioError("grid step must be > 0")

    def grid(self) -> np.ndarray:
        n = int(round((self.increment_grid_stop - self.increment_grid_start) / self.increment_grid_step)) + 1
        return self.increment_grid_start + self.increment_grid_step * np.arange(n)


def settlement_ok(s_tmax: float, req: Requirements, options: PolicyOptions | None = None) -> bool:
    cmp_residual = options is not None and options.settlement_comparator == CMP_RESIDUAL
    if cmp_residual:
        return bool(s_tmax <= req.s_target)
    return bool(s_tmax >= req.s_target)


def check_requirements(traj: Trajectory, req: Requirements, options: PolicyOptions | None = None) -> dict:
    """Evaluate both unloading requirements on a trajectory."""
    if traj.t_end < req.t_max:
        raise ScenarioError(
            f"trajectory ends at week {traj.t_end}, before t_max={req.t_max}"
        )
    s = float(traj.settlement_m[req.t_max])
    ocr = float(traj.ocr[req.t_max])
    return {
        "settlement_ok": settlement_ok(s, req, options),
        "ocr_ok": bool(ocr >= req.ocr_target),
        "s_tmax_m": s,
        "ocr_tmax": ocr,
    }


def delay_weeks(traj: Trajectory, req: Requirements, costs: CostParams,
                options: PolicyOptions | None = None) -> tuple[int, bool]:
    """Weeks past t_max until the settlement target is achieved.

    Returns (delay, never_reached). Under the residual comparator a miss
    cannot heal (settlement only grows), so the delay is charged at the
    cap. The trajectory must extend to t_max + delay_cap when the target
    is not met at t_max.
    """
    s = float(traj.settlement_m[req.t_max])
    if settlement_ok(s, req, options):
        return 0, False
    cmp_residual = options is not None and options.settlement_comparator == CMP_RESIDUAL
    if cmp_residual:
        return costs.delay_cap, True
    if traj.t_end < req.t_max + costs.delay_cap:
        raise ScenarioError(
            f"trajectory ends at week {traj.t_end}; delay accounting needs "
            f"coverage through {req.t_max + costs.delay_cap}"
        )
    for w in range(req.t_max, req.t_max + costs.delay_cap + 1):
        if traj.settlement_m[w] >= req.s_target:
            return w - req.t_max, False
    return costs.delay_cap, True


@dataclass(frozen=True)
class CostBreakdown:
    surcharge_initial: float
    surcharge_increase: float
    delay: float
    ocr_penalty: float
    delay_weeks: int
    target_never_reached: bool

    @property
    def total(self) -> float:
        return self.surcharge_initial + self.surcharge_increase + self.delay + self.ocr_penalty


def total_cost(
    traj: Trajectory,
    schedule: ActionSchedule,
    req: Requirements,
    costs: CostParams,
    road_length: float,
    options: PolicyOptions | None = None,
) -> CostBreakdown:
    """Total project cost of one realized trajectory under a schedule."""
    checks = check_requirements(traj, req, options)
    c1 = costs.c_sur_initial * schedule.h0 * road_length
    c2 = 0.0
    if schedule.has_increment:
        c2 = (costs.remobilization + costs.c_sur_increase * schedule.h_add) * road_length
    dw, never = delay_weeks(traj, req, costs, options)
    c_delay = costs.c_delay * min(dw, costs.delay_cap)
    c_ocr = 0.0 if checks["ocr_ok"] else costs.c_ocr_penalty
    return CostBreakdown(
        surcharge_initial=c1,
        surcharge_increase=c2,
        delay=c_delay,
        ocr_penalty=c_ocr,
        delay_weeks=dw,
        target_never_reached=never,
    )


@dataclass(frozen=True)
class Decision:
    """Policy output at one decision epoch."""

    action: str                      # keep_measuring | no_action_needed | adjust
    h_add: float = 0.0
    gate_value: float | None = None
    prob_noncompliant: float | None = None
    grid_exhausted: bool = False

    @property
    def is_adjust(self) -> bool:
        return self.action == "adjust"


def _noncompliance_prob(belief: Belief, req: Requirements, options: PolicyOptions) -> float:
    if options.prob_comparator == PROB_PRINTED or options.settlement_comparator == CMP_RESIDUAL:
        return prob_above_target(belief, req.s_target, req.t_max)
    return prob_below_target(belief, req.s_target, req.t_max)


def _candidate_noncompliance(
    belief: Belief, req: Requirements, options: PolicyOptions, t: int, h_add: float
) -> float:
    """Probability of missing the target if h_add were placed at week t."""
    h0, _, _ = belief.schedule.kernel_args()
    g = belief.ctx.geom_pack()
    vals, err = kernels.s_tmax_candidates(
        belief.pack, g, h0, float(t), float(h_add), float(req.t_max), belief.ctx.series_tol
    )
    if np.any(err >= 0):
        from .errors import StressRangeExceededError

        i = int(np.argmax(err >= 0))
        raise StressRangeExceededError(math.nan, float(belief.pack[i, 0]), layer=int(err[i]))
    if options.prob_comparator == PROB_PRINTED or options.settlement_comparator == CMP_RESIDUAL:
        return float(np.sum(belief.weights[vals > req.s_target]))
    return float(np.sum(belief.weights[vals < req.s_target]))


def heuristic_bu_decide(
    belief: Belief,
    t: int,
    w: HeuristicParams,
    req: Requirements,
    options: PolicyOptions | None = None,
    grid: np.ndarray | None = None,
) -> Decision:
    """Belief-updated decision at week t (gate, then minimal increment).

    Tie conventions are frozen: the gate opens strictly below cov_th; a
    probability exactly equal to p_th counts as compliant.
    """
    options = options if options is not None else PolicyOptions()
    if belief.schedule.has_increment:
        raise ScenarioError("decision requested after the single increment was placed")
    if grid is None:
        grid = options.grid()
    gate = gate_statistic(belief, options.uncertainty_gate)
    if gate >= w.cov_th:
        return Decision(action="keep_measuring", gate_value=gate)
    p = _noncompliance_prob(belief, req, options)
    if p <= w.p_th:
        return Decision(action="no_action_needed", gate_value=gate, prob_noncompliant=p)
    for a in grid:
        p_a = _candidate_noncompliance(belief, req, options, t, float(a))
        if p_a <= w.p_th:
            return Decision(
                action="adjust", h_add=float(a), gate_value=gate, prob_noncompliant=p
            )
    return Decision(
        action="adjust",
        h_add=float(grid[-1]),
        gate_value=gate,
        prob_noncompliant=p,
        grid_exhausted=True,
    )


def heuristic_static_decide(t: int) -> Decision:
    """Static baseline: never adjusts after construction starts."""
    return Decision(action="no_action_needed")
