#!/usr/bin/env python3
"""Regenerates the dashboard replay fixture from the session engine.

Drives the same seeded session the acceptance replay test uses (gate
opens at week 21, one increment committed) and captures the API payloads
the dashboard consumes. Output: frontend/test/fixtures/replay-session.json
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from preloadtwin import kernels
from preloadtwin.consolidation import pack_geometry
from preloadtwin.policy import HeuristicParams
from preloadtwin.priors import sample_soil_array
from preloadtwin.rngstream import stream
from preloadtwin.scenario import canonical_json, load_bundled_scenario
from preloadtwin.sessions import SessionRunner

FIXTURE_SEED = 0
N_WEEKS = 30


def main() -> int:
    scenario = load_bundled_scenario()
    heuristic = HeuristicParams(h0=1.09, cov_th=0.05, p_th=0.43)

    g = pack_geometry(scenario.geometry, scenario.pvd, scenario.solver.series_tol)
    pt = sample_soil_array(scenario.priors, stream(FIXTURE_SEED, "truth", 0), 1)
    ptp = pt.copy()
    ptp[:, 7] /= 52.0
    ptp[:, 8] /= 52.0
    S, _, _, _, _, _, _ = kernels.trajectory_batch(
        ptp, g, heuristic.h0, np.inf, 0.0, scenario.requirements.t_max,
        scenario.solver.series_tol,
    )
    xi = stream(FIXTURE_SEED, "noise", 0).standard_normal(scenario.requirements.t_max)

    runner = SessionRunner(scenario, FIXTURE_SEED, heuristic)
    created = runner.summary()

    steps = []
    decision = None
    for t in range(1, N_WEEKS + 1):
        z = float(S[0, t] + scenario.sigma_eps * xi[t - 1])
        summary = runner.add_measurement(t, z)
        steps.append(
            {
                "t_weeks": t,
                "z_s_m": z,
                "session_status": summary["session_status"],
                "gate_statistic": summary["gate_statistic"],
                "prob_noncompliant": summary["prob_noncompliant"],
                "s_tmax_q50_m": summary["s_tmax"]["q50_m"],
            }
        )
        if summary["session_status"] == "decision-pending" and decision is None:
            rec = runner.recommendation()
            whatif_zero = runner.whatif(0.0)
            whatif_rec = runner.whatif(rec["h_add_m"]) if rec["action"] == "adjust" else None
            pending_summary = summary
            post = runner.commit_action(rec.get("h_add_m", 0.0))
            decision = {
                "week": t,
                "recommendation": rec,
                "whatif_zero": whatif_zero,
                "whatif_recommended": whatif_rec,
                "pending_summary": pending_summary,
                "post_action_summary": post,
            }
    final = runner.close()

    fixture = {
        "generator": "scripts/make_dashboard_fixture.py",
        "seed": FIXTURE_SEED,
        "scenario_hash": scenario.hash(),
        "heuristic": {"h0_m": 1.09, "cov_th": 0.05, "p_th": 0.43},
        "created_summary": created,
        "steps": steps,
        "decision": decision,
        "final": final,
        "log_events": runner.log.events,
    }
    out = Path(__file__).resolve().parents[1] / "frontend" / "test" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    path = out / "replay-session.json"
    path.write_text(json.dumps(json.loads(canonical_json(fixture)), indent=1) + "\n", encoding="utf-8")
    print(f"wrote {path} (decision week {decision['week']}, h_add {decision['recommendation']['h_add_m']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
