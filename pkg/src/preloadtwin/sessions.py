"""Session logs and the shared measure/decide/act session engine.

A session log is an append-only, line-delimited JSON record of everything
that happened to one belief: init, measurements, belief summaries,
decisions, final state. Replaying a log against its scenario rebuilds the
belief bit-identically (hash-verified), which is what makes the CLI and
the HTTP service provably equivalent: both drive the same SessionRunner.

Log format (version 1): first line a header record, then one JSON object
per event with non-decreasing week stamps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .belief import (
    Belief,
    Measurement,
    ModelContext,
    apply_action,
    gate_statistic,
    init_belief,
    posterior_stats,
    update,
    weighted_quantile,
)
from .consolidation import ActionSchedule
from .errors import ScenarioError, SessionLogError, UnsupportedActionError
from .policy import Decision, HeuristicParams, heuristic_bu_decide
from .scenario import Scenario, canonical_json

LOG_FORMAT = "preloadtwin-session-log"
LOG_VERSION = 1

STATUS_MEASURING = "measuring"
STATUS_PENDING = "decision-pending"
STATUS_ADJUSTED = "adjusted"
STATUS_CLOSED = "closed"

FAR_RESIDUAL_SIGMAS = 8.0


@dataclass
class SessionLog:
    """Append-only event sequence with non-decreasing week stamps."""

    events: list = field(default_factory=list)

    def append(self, event: dict) -> None:
        if "kind" not in event or "t" not in event:
            raise SessionLogError("event needs 'kind' and 't'")
        if self.events and event["t"] < self.events[-1]["t"]:
            raise SessionLogError(
                f"event at week {event['t']} precedes last logged week {self.events[-1]['t']}"
            )
        self.events.append(event)

    def header(self) -> dict:
        return {"format": LOG_FORMAT, "version": LOG_VERSION}

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(self.header()) + "\n")
            for ev in self.events:
                fh.write(canonical_json(ev) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SessionLog":
        path = Path(path)
        if not path.exists():
            raise SessionLogError(f"session log not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise SessionLogError(f"session log is empty: {path}")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise SessionLogError(f"bad header line: {exc}") from exc
        if header.get("format") != LOG_FORMAT:
            raise SessionLogError(f"not a session log (format={header.get('format')!r})")
        if header.get("version") != LOG_VERSION:
            raise SessionLogError(f"log version {header.get('version')} unsupported")
        log = cls()
        for i, ln in enumerate(lines[1:], start=2):
            try:
                log.append(json.loads(ln))
            except json.JSONDecodeError as exc:
                raise SessionLogError(f"line {i}: bad JSON: {exc}") from exc
        return log


_QUANTILE_KEYS = {0.025: "q025", 0.5: "q50", 0.975: "q975"}


def _quantiles(stats: dict, keys=(0.025, 0.5, 0.975)) -> dict:
    return {_QUANTILE_KEYS[k]: stats["quantiles"][k] for k in keys}


class SessionRunner:
    """Drives one measure -> update -> decide -> act loop.

    Used directly by the CLI `update` subcommand and wrapped by the HTTP
    service, so both produce identical belief histories for identical
    event sequences.
    """

    def __init__(
        self,
        scenario: Scenario,
        seed: int,
        heuristic: HeuristicParams | None = None,
        n_particles: int | None = None,
    ):
        self.scenario = scenario
        self.seed = int(seed)
        self.heuristic = heuristic if heuristic is not None else scenario.heuristic
        self.n_particles = n_particles if n_particles is not None else scenario.n_particles
        self.ctx = ModelContext.from_scenario(scenario)
        self.belief: Belief = init_belief(
            scenario.priors,
            self.n_particles,
            self.seed,
            self.ctx,
            ActionSchedule(h0=self.heuristic.h0),
        )
        self.status = STATUS_MEASURING
        self.decision_final = False
        self.event_index = 0
        self.measurements: list[dict] = []
        self.ci_history: list[dict] = []
        self.last_decision: Decision | None = None
        self.log = SessionLog()
        self.log.append(
            {
                "kind": "init",
                "t": 0,
                "seed": self.seed,
                "scenario_hash": scenario.hash(),
                "n_particles": self.n_particles,
                "heuristic": {
                    "h0_m": self.heuristic.h0,
                    "cov_th": self.heuristic.cov_th,
                    "p_th": self.heuristic.p_th,
                },
            }
        )
        self._log_belief_summary(0)

    # ── belief summaries ────────────────────────────────────────────

    def _noncompliance_prob(self, belief: Belief | None = None) -> float:
        from .policy import _noncompliance_prob

        b = belief if belief is not None else self.belief
        return _noncompliance_prob(b, self.scenario.requirements, self.scenario.policy_options)

    def _belief_stats(self) -> dict:
        req = self.scenario.requirements
        s_stats = posterior_stats(
            self.belief, "S_at", req.t_max, quantile_levels=(0.025, 0.5, 0.975)
        )
        ocr_stats = posterior_stats(
            self.belief, "OCR_at", req.t_max, quantile_levels=(0.025, 0.5, 0.975)
        )
        gate = gate_statistic(self.belief, self.scenario.policy_options.uncertainty_gate)
        return {
            "s_tmax": {
                "mean_m": s_stats["mean"],
                "std_m": s_stats["std"],
                "cov": s_stats["cov"],
                **{k + "_m": v for k, v in _quantiles(s_stats).items()},
            },
            "ocr_tmax": {
                "mean": ocr_stats["mean"],
                "std": ocr_stats["std"],
                **_quantiles(ocr_stats),
            },
            "prob_noncompliant": self._noncompliance_prob(),
            "gate_statistic": gate,
            "gate_open": gate < self.heuristic.cov_th,
        }

    def _log_belief_summary(self, t: int) -> None:
        stats = self._belief_stats()
        self.ci_history.append({"t": t, **stats})
        self.log.append(
            {"kind": "belief_summary", "t": t, "stats": stats, "belief_hash": self.belief.content_hash()}
        )
        self.event_index += 1

    def summary(self) -> dict:
        """Current posterior payload (drives the dashboard panels)."""
        req = self.scenario.requirements
        weeks = list(range(req.t_max + 1))
        levels = ((0.05, "q05_m"), (0.25, "q25_m"), (0.5, "q50_m"), (0.75, "q75_m"), (0.95, "q95_m"))
        fan = {"weeks_list": weeks}
        for _, key in levels:
            fan[key] = [0.0]
        for t in weeks[1:]:
            values = self.belief.s_cache[:, t]
            for p, key in levels:
                fan[key].append(weighted_quantile(values, self.belief.weights, p))
        sched = self.belief.schedule
        timeline_weeks = [0, req.t_max]
        heights = [sched.h0, sched.h0]
        if sched.has_increment:
            timeline_weeks = [0, sched.t_add, sched.t_add, req.t_max]
            heights = [sched.h0, sched.h0, sched.h0 + sched.h_add, sched.h0 + sched.h_add]
        return {
            "scenario_hash": self.scenario.hash(),
            "event_index": self.event_index,
            "session_status": self.status,
            "week": self.belief.t_current,
            "n_particles": self.belief.n_s,
            "settlement_fan": fan,
            "measurements": list(self.measurements),
            "surcharge_timeline": {"weeks_list": timeline_weeks, "height_m": heights},
            "ci_history": list(self.ci_history),
            "s_target_m": req.s_target,
            "ocr_target": req.ocr_target,
            "t_max_weeks": req.t_max,
            "recommendation": self.recommendation(),
            **self._belief_stats(),
        }

    # ── event handlers ──────────────────────────────────────────────

    def add_measurement(self, t: int, z_s: float) -> dict:
        if self.status == STATUS_CLOSED:
            raise ScenarioError("session is closed")
        if self.measurements and t <= self.measurements[-1]["t"]:
            raise ScenarioError(
                f"measurement at week {t} not after last measured week "
                f"{self.measurements[-1]['t']}"
            )
        z = Measurement(t=int(t), z_s=float(z_s), sigma_eps=self.scenario.sigma_eps)
        residuals = np.abs(z.z_s - self.belief.s_cache[:, z.t]) / z.sigma_eps
        far_off = bool(np.min(residuals) > FAR_RESIDUAL_SIGMAS)
        self.belief = update(self.belief, z)
        self.measurements.append({"t": int(t), "z_s_m": float(z_s)})
        self.log.append(
            {"kind": "measurement", "t": int(t), "z_s_m": float(z_s), "sigma_eps_m": z.sigma_eps}
        )
        self.event_index += 1
        self._log_belief_summary(int(t))

        if self.status == STATUS_MEASURING and not self.decision_final:
            rec = self.recommendation()
            if rec["action"] != "keep_measuring":
                self.status = STATUS_PENDING
        payload = self.summary()
        if far_off:
            payload["degenerate_update_warning"] = (
                f"measurement lies more than {FAR_RESIDUAL_SIGMAS:.0f} sigma from every "
                "particle prediction; posterior is dominated by the nearest particles"
            )
        return payload

    def recommendation(self) -> dict:
        """Heuristic suggestion with its rationale fields."""
        if self.status == STATUS_CLOSED:
            return {"action": "closed"}
        if self.belief.schedule.has_increment:
            return {"action": "no_action_needed", "reason": "increment already placed"}
        if self.decision_final:
            return {"action": "no_action_needed", "reason": "requirement on track at decision"}
        decision = heuristic_bu_decide(
            self.belief,
            self.belief.t_current,
            self.heuristic,
            self.scenario.requirements,
            self.scenario.policy_options,
        )
        self.last_decision = decision
        out = {
            "action": decision.action,
            "h_add_m": decision.h_add,
            "gate_statistic": decision.gate_value,
            "gate_threshold": self.heuristic.cov_th,
            "p_threshold": self.heuristic.p_th,
        }
        if decision.prob_noncompliant is not None:
            out["prob_noncompliant"] = decision.prob_noncompliant
        if decision.grid_exhausted:
            out["grid_exhausted"] = True
        return out

    def whatif(self, h_add: float, fast: bool = False) -> dict:
        """Read-only increment exploration at the current week."""
        if self.status != STATUS_PENDING:
            raise ScenarioError(f"what-if requires status {STATUS_PENDING}, session is {self.status}")
        if h_add < 0:
            raise ScenarioError(f"h_add must be >= 0, got {h_add}")
        req = self.scenario.requirements
        costs = self.scenario.costs
        belief = self.belief
        weights = belief.weights
        pack = belief.pack
        if fast and belief.n_s > 100:
            pack = pack[:100]
            weights = np.full(100, 1.0 / 100)

        t = belief.t_current
        g = belief.ctx.geom_pack()
        h0 = belief.schedule.h0
        marginal_cost = 0.0
        if h_add > 0:
            marginal_cost = (
                costs.remobilization + costs.c_sur_increase * h_add
            ) * self.scenario.geometry.road_length

        if h_add == 0:
            rows = pack.shape[0]
            s_vals = belief.s_cache[:rows, req.t_max]
            ocr_vals = belief.ocr_cache[:rows, req.t_max]
        else:
            s_vals, err = kernels.s_tmax_candidates(
                pack, g, h0, float(t), float(h_add), float(req.t_max), belief.ctx.series_tol
            )
            if np.any(err >= 0):
                raise ScenarioError("candidate increment exceeds the modulus stress range")
            ocr_vals = _ocr_tmax_under_increment(pack, g, h0, float(t), float(h_add), req.t_max, belief.ctx.series_tol)

        cmp_residual = self.scenario.policy_options.settlement_comparator == "residual"
        printed = self.scenario.policy_options.prob_comparator == "printed"
        if printed or cmp_residual:
            prob = float(np.sum(weights[s_vals > req.s_target]))
        else:
            prob = float(np.sum(weights[s_vals < req.s_target]))

        def wq(values, p):
            from .belief import weighted_quantile

            return weighted_quantile(np.asarray(values), weights, p)

        return {
            "scenario_hash": self.scenario.hash(),
            "event_index": self.event_index,
            "h_add_m": float(h_add),
            "fast": bool(fast),
            "prob_noncompliant": prob,
            "s_tmax": {
                "mean_m": float(np.sum(weights * s_vals)),
                "q025_m": wq(s_vals, 0.025),
                "q50_m": wq(s_vals, 0.5),
                "q975_m": wq(s_vals, 0.975),
            },
            "ocr_tmax": {
                "q025": wq(ocr_vals, 0.025),
                "q50": wq(ocr_vals, 0.5),
                "q975": wq(ocr_vals, 0.975),
            },
            "marginal_cost_sek": marginal_cost,
        }

    def commit_action(self, h_add: float) -> dict:
        """Engineer's (possibly overriding) choice at a decision point."""
        if self.status == STATUS_CLOSED:
            raise ScenarioError("session is closed")
        if self.status != STATUS_PENDING:
            raise ScenarioError(f"commit requires status {STATUS_PENDING}, session is {self.status}")
        if self.belief.schedule.has_increment:
            raise UnsupportedActionError("the single surcharge increment was already placed")
        rec = self.recommendation()
        t = self.belief.t_current
        override = abs(float(h_add) - float(rec.get("h_add_m", 0.0))) > 1e-12
        if h_add > 0:
            self.belief = apply_action(self.belief, t, float(h_add))
            self.status = STATUS_ADJUSTED
            self.decision_final = True
        else:
            self.status = STATUS_MEASURING
            if not override:
                # recommended no-action accepted: the decision is final
                self.decision_final = True
        self.log.append(
            {
                "kind": "decision",
                "t": t,
                "recommendation": rec,
                "committed": {"h_add_m": float(h_add)},
                "override": override,
                "posterior": self._belief_stats(),
            }
        )
        self.event_index += 1
        self._log_belief_summary(t)
        return self.summary()

    def close(self) -> dict:
        if self.status == STATUS_CLOSED:
            raise ScenarioError("session already closed")
        stats = self._belief_stats()
        req = self.scenario.requirements
        compliance = {
            "prob_noncompliant": stats["prob_noncompliant"],
            "settlement_on_track": stats["prob_noncompliant"] <= self.heuristic.p_th,
            "ocr_median_ok": stats["ocr_tmax"]["q50"] >= req.ocr_target,
        }
        self.log.append(
            {
                "kind": "final",
                "t": self.belief.t_current,
                "compliance": compliance,
                "schedule": {
                    "h0_m": self.belief.schedule.h0,
                    "t_add_weeks": self.belief.schedule.t_add,
                    "h_add_m": self.belief.schedule.h_add,
                },
            }
        )
        self.event_index += 1
        self.status = STATUS_CLOSED
        return {
            "scenario_hash": self.scenario.hash(),
            "event_index": self.event_index,
            "session_status": self.status,
            "compliance": compliance,
        }


def _ocr_tmax_under_increment(pack, g, h0, t_add, h_add, t_max, tol):
    """OCR(t_max) per particle if h_add were placed at week t_add."""
    from .kernels.common import G_CLAY, G_CRUST, G_EMB_H, P_CH, P_CV, P_GAMMA_CL, P_GAMMA_EMB

    emb_h = g[G_EMB_H]
    zc = g[G_CRUST] + g[G_CLAY] / 2.0
    sigma0 = kernels.sigma0_at(pack[:, P_GAMMA_CL], g, zc)
    preload = pack[:, P_GAMMA_EMB] * (emb_h + h0)
    perm = pack[:, P_GAMMA_EMB] * emb_h
    inc = pack[:, P_GAMMA_EMB] * h_add
    drain, de2, mu = g[6], g[7], g[8]
    u_base = kernels.u_at(pack[:, P_CV], pack[:, P_CH], drain, de2, mu, float(t_max), tol)
    du = kernels.u_at(pack[:, P_CV], pack[:, P_CH], drain, de2, mu, float(t_max) - t_add, tol)
    return (sigma0 + u_base * preload + du * inc) / (sigma0 + u_base * perm)


def replay(log: SessionLog, scenario: Scenario) -> Belief:
    """Rebuild the belief from a log, verifying hashes along the way."""
    if not log.events or log.events[0]["kind"] != "init":
        raise SessionLogError("log must start with an init event")
    init_ev = log.events[0]
    if init_ev["scenario_hash"] != scenario.hash():
        raise SessionLogError(
            "scenario hash mismatch: log was recorded against a different scenario"
        )
    h = init_ev["heuristic"]
    heuristic = HeuristicParams(h0=h["h0_m"], cov_th=h["cov_th"], p_th=h["p_th"])
    ctx = ModelContext.from_scenario(scenario)
    belief = init_belief(
        scenario.priors, init_ev["n_particles"], init_ev["seed"], ctx,
        ActionSchedule(h0=heuristic.h0),
    )
    for ev in log.events[1:]:
        kind = ev["kind"]
        if kind == "measurement":
            belief = update(
                belief, Measurement(t=ev["t"], z_s=ev["z_s_m"], sigma_eps=ev["sigma_eps_m"])
            )
        elif kind == "decision":
            h_add = ev["committed"]["h_add_m"]
            if h_add > 0:
                belief = apply_action(belief, ev["t"], h_add)
        elif kind == "belief_summary":
            if ev["belief_hash"] != belief.content_hash():
                raise SessionLogError(
                    f"belief hash mismatch at week {ev['t']}: log does not replay "
                    "against this scenario/engine"
                )
        elif kind in ("init", "final"):
            pass
        else:
            raise SessionLogError(f"unknown event kind {kind!r}")
    return belief
