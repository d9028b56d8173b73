"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The desk-scale study
(criteria 3, 4, 6) runs exactly twice through the CLI in a module fixture;
criterion 6 hashes the two output trees, criteria 3 and 4 analyze the
first run. Tolerances are frozen here, not configurable.
"""

import csv
import hashlib
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from preloadtwin import kernels
from preloadtwin.belief import (
    ModelContext,
    central_interval,
    init_belief_with_rng,
    update,
)
from preloadtwin.belief import Measurement as Meas
from preloadtwin.cli import main
from preloadtwin.consolidation import (
    ActionSchedule,
    combined_degree,
    pack_geometry,
    simulate_trajectory,
    vertical_degree,
)
from preloadtwin.optimizer import CeConfig, cross_entropy_optimize
from preloadtwin.policy import HeuristicParams
from preloadtwin.priors import sample_soil, sample_soil_array
from preloadtwin.rngstream import stream
from preloadtwin.scenario import load_bundled_scenario

DESK_SEED = 1234
DESK_OVERRIDES = [
    "--override", "study.ce.n_ce=50",
    "--override", "study.ce.n_iter_max=20",
    "--override", "study.ce.n_mc=50",
    "--override", "study.ce.n_bu=100",
    "--override", "study.restarts=1",
    "--override", "study.final_n_mc=1000",
]
FIXTURE_SEED = 0  # criterion 7: gate opens at week 21 with an increment


def _hash_tree(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def desk_study(tmp_path_factory):
    """The desk-scale study, run twice via the CLI (criteria 3, 4, 6)."""
    root = tmp_path_factory.mktemp("desk-study")
    durations = []
    for name in ("run1", "run2"):
        out = root / name
        t0 = time.perf_counter()
        code = main(["study", "--seed", str(DESK_SEED), "--out", str(out)] + DESK_OVERRIDES)
        durations.append(time.perf_counter() - t0)
        assert code == 0
    doc = json.loads((root / "run1" / "study.json").read_text(encoding="utf-8"))
    return {
        "root": root,
        "rows": doc["rows"],
        "durations": durations,
        "hashes": (_hash_tree(root / "run1"), _hash_tree(root / "run2")),
    }


def test_criterion_1_physics_oracles(scenario):
    t0 = time.perf_counter()

    # 1a: vertical degree at the classical 50% time factor vs the
    # 1000-term series oracle
    def series_oracle(tv, n_terms=1000):
        s = 0.0
        for m in range(n_terms):
            big_m = (2 * m + 1) * math.pi / 2.0
            s += (2.0 / big_m**2) * math.exp(-(big_m**2) * tv)
        return 1.0 - s

    cv, drain = 0.2, 7.75
    t_weeks = 0.197 * drain**2 / (cv / 52.0)
    u = vertical_degree(cv, drain, t_weeks)
    assert u == pytest.approx(0.500, abs=0.005)
    assert u == pytest.approx(series_oracle(0.197), abs=1e-9)

    # 1b: inclusion-exclusion combination, exact
    assert combined_degree(0.5, 0.5) == 0.75

    # 1c: settlement continuity at the increment week, 100 seeded scenarios
    worst = 0.0
    for seed in range(100):
        (soil,) = sample_soil(scenario.priors, seed, 1)
        rng = stream(seed, "fixture")
        t_add = int(rng.integers(4, 40))
        h_add = float(rng.uniform(0.1, 1.5))
        h0 = float(rng.uniform(0.5, 1.5))
        base = simulate_trajectory(
            soil, scenario.geometry, scenario.pvd, ActionSchedule(h0=h0), 72
        )
        inc = simulate_trajectory(
            soil, scenario.geometry, scenario.pvd,
            ActionSchedule(h0=h0, t_add=t_add, h_add=h_add), 72,
        )
        rel = abs(inc.settlement_m[t_add] - base.settlement_m[t_add]) / base.settlement_m[t_add]
        worst = max(worst, rel)
    assert worst <= 1e-6

    dt = time.perf_counter() - t0
    assert dt < 10.0
    print(f"\nCRITERION 1 PASS: Uv(0.197)={u:.4f}, combined(0.5,0.5)=0.75, "
          f"worst continuity jump {worst:.2e} over 100 scenarios [{dt:.1f}s < 10s]")


def test_criterion_2_filter_calibration(scenario):
    t0 = time.perf_counter()
    req = scenario.requirements
    ctx = ModelContext.from_scenario(scenario)
    g = pack_geometry(scenario.geometry, scenario.pvd, scenario.solver.series_tol)
    sigma = 0.05
    inside = 0
    for s in range(100):
        truth_rng = stream(s, "truth", 0)
        noise_rng = stream(s, "noise", 0)
        belief_rng = stream(s, "belief", 0)
        pt = sample_soil_array(scenario.priors, truth_rng, 1)
        ptp = pt.copy()
        ptp[:, 7] /= 52.0
        ptp[:, 8] /= 52.0
        S, _, _, _, _, _, _ = kernels.trajectory_batch(
            ptp, g, 1.0, np.inf, 0.0, req.t_max, scenario.solver.series_tol
        )
        belief = init_belief_with_rng(
            scenario.priors, 500, belief_rng, ctx, ActionSchedule(h0=1.0)
        )
        xi = noise_rng.standard_normal(20)
        for t in range(1, 21):
            z = float(S[0, t] + sigma * xi[t - 1])
            belief = update(belief, Meas(t=t, z_s=z, sigma_eps=sigma))
        lo, hi = central_interval(belief.s_cache[:, req.t_max], belief.weights, 0.95)
        if lo <= S[0, req.t_max] <= hi:
            inside += 1
    dt = time.perf_counter() - t0
    assert inside >= 90
    assert dt < 300.0
    print(f"\nCRITERION 2 PASS: truth inside central 95% interval in {inside}/100 "
          f"sessions (need >= 90) [{dt:.1f}s < 300s]")


@pytest.mark.slow
def test_criterion_3_table2_trend(desk_study):
    rows = {(r["policy"], r["sigma_eps_m"]): r for r in desk_study["rows"]}
    bu = [rows[("bu", s)] for s in (0.05, 0.1, 0.15)]

    def se(r):
        return r["std_cost_sek"] / math.sqrt(r["n_mc"])

    msgs = []
    for a, b in zip(bu, bu[1:]):
        comb = math.hypot(se(a), se(b))
        assert a["expected_cost_sek"] <= b["expected_cost_sek"] + comb, (
            f"expected cost not non-decreasing: sigma={a['sigma_eps_m']} gives "
            f"{a['expected_cost_sek']/1e6:.3f} MSEK vs sigma={b['sigma_eps_m']} "
            f"{b['expected_cost_sek']/1e6:.3f} MSEK (allowance {comb/1e6:.3f})"
        )
        msgs.append(
            f"{a['expected_cost_sek']/1e6:.3f} <= {b['expected_cost_sek']/1e6:.3f}+{comb/1e6:.3f}"
        )

    # absolute SEK comparison only runs when the companion cost rates are
    # supplied (the defaults are flagged non_paper calibration values)
    companion = os.environ.get("PRELOADTWIN_COMPANION_COSTS")
    absolute_msg = "absolute-SEK check skipped (companion cost rates not supplied)"
    if companion:
        published = {0.05: 6.42e6, 0.1: 6.51e6, 0.15: 6.88e6}
        doc = yaml.safe_load(Path(companion).read_text(encoding="utf-8"))
        assert isinstance(doc, dict) and "costs" in doc
        overrides = [f"costs.{k}={v}" for k, v in doc["costs"].items()]
        pytest.fail(
            "companion-cost evaluation requested; rerun the study with "
            f"--override {' --override '.join(overrides)} and compare against "
            f"{published} within 15%"
        )

    run_s = desk_study["durations"][0]
    assert run_s < 1800.0
    print(f"\nCRITERION 3 PASS: expected-cost trend over sigma_eps "
          f"{'; '.join(msgs)} MSEK; {absolute_msg} [{run_s:.0f}s < 1800s]")


@pytest.mark.slow
def test_criterion_4_table3_ordering(desk_study):
    rows = {(r["policy"], r["sigma_eps_m"]): r for r in desk_study["rows"]}
    static = rows[("static", None)]

    def se(r):
        return r["std_cost_sek"] / math.sqrt(r["n_mc"])

    msgs = []
    for sigma in (0.05, 0.1, 0.15):
        bu = rows[("bu", sigma)]
        comb = math.hypot(se(bu), se(static))
        gap = static["expected_cost_sek"] - bu["expected_cost_sek"]
        assert gap >= comb, (
            f"belief-updated policy must beat static by >= 1 combined SE at "
            f"sigma={sigma}: gap {gap/1e6:.3f} MSEK vs SE {comb/1e6:.3f} MSEK"
        )
        msgs.append(f"sigma={sigma}: gap {gap/1e6:.3f} MSEK = {gap/comb:.1f} SE")
    run_s = desk_study["durations"][0]
    assert run_s < 1200.0
    print(f"\nCRITERION 4 PASS: optimized adaptive policy beats optimized static "
          f"baseline under common random numbers ({'; '.join(msgs)})")


def test_criterion_5_ce_optimizer():
    t0 = time.perf_counter()
    w_star = np.array([0.6, 1.4, 0.3])

    def cfg(seed, n_ce, n_iter):
        return CeConfig(
            names=("x", "y", "z"),
            init_mean=np.ones(3), init_std=np.full(3, 0.5),
            lo=np.zeros(3), hi=np.full(3, 2.0),
            n_ce=n_ce, n_iter_max=n_iter, elite_fraction=0.1,
            smoothing_alpha=0.7, convergence_std_tol=1e-4, master_seed=seed,
        )

    clean = cross_entropy_optimize(
        lambda w, seed: float(np.sum((w - w_star) ** 2)), cfg(0, 100, 30)
    )
    clean_err = float(np.max(np.abs(clean.w_opt - w_star)))
    assert clean.n_iterations <= 30
    assert clean_err < 1e-2

    successes = 0
    for seed in range(10):
        noise_rng = np.random.default_rng(1000 + seed)

        def noisy(w, eval_seed):
            return float(np.sum((w - w_star) ** 2) + 0.1 * noise_rng.standard_normal())

        result = cross_entropy_optimize(noisy, cfg(seed, 400, 50))
        if float(np.max(np.abs(result.w_opt - w_star))) < 5e-2:
            successes += 1
    dt = time.perf_counter() - t0
    assert successes >= 9
    assert dt < 60.0
    print(f"\nCRITERION 5 PASS: noiseless error {clean_err:.1e} in "
          f"{clean.n_iterations} iterations; noisy recovery {successes}/10 [{dt:.1f}s < 60s]")


@pytest.mark.slow
def test_criterion_6_determinism(desk_study, tmp_path, scenario):
    # the full desk-scale study, twice, hash-equal
    h1, h2 = desk_study["hashes"]
    assert h1 == h2

    # every offline CLI subcommand, twice, hash-equal
    def run_twice(label, args):
        hashes = []
        for tag in ("x", "y"):
            out = tmp_path / f"{label}-{tag}"
            assert main(args + ["--out", str(out)]) == 0
            hashes.append(_hash_tree(out))
        assert hashes[0] == hashes[1], f"{label} outputs differ between runs"

    run_twice("simulate", ["simulate", "--seed", "3", "--n", "2"])

    meas = tmp_path / "meas.csv"
    g = pack_geometry(scenario.geometry, scenario.pvd, scenario.solver.series_tol)
    pt = sample_soil_array(scenario.priors, stream(9, "truth", 0), 1)
    ptp = pt.copy()
    ptp[:, 7] /= 52.0
    ptp[:, 8] /= 52.0
    S, _, _, _, _, _, _ = kernels.trajectory_batch(
        ptp, g, 1.0, np.inf, 0.0, 72, scenario.solver.series_tol
    )
    xi = stream(9, "noise", 0).standard_normal(72)
    with open(meas, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "z_s_m"])
        for t in range(1, 16):
            writer.writerow([t, repr(float(S[0, t] + 0.05 * xi[t - 1]))])
    run_twice("update", ["update", "--seed", "9", "--measurements", str(meas)])

    run_twice(
        "evaluate",
        ["evaluate", "--seed", "2", "--policy", "bu", "--h0", "1.0",
         "--n-mc", "10", "--n-bu", "40"],
    )
    run_twice(
        "optimize",
        ["optimize", "--seed", "2", "--policy", "static", "--restarts", "1",
         "--override", "study.ce.n_ce=8", "--override", "study.ce.n_iter_max=2",
         "--override", "study.ce.n_mc=6", "--override", "study.ce.n_bu=30",
         "--override", "study.ce.elite_fraction=0.25",
         "--override", "study.final_n_mc=20"],
    )

    # report runs against the overridden scenario that produced the study
    study_json = desk_study["root"] / "run1" / "study.json"
    hashes = []
    for tag in ("x", "y"):
        out = tmp_path / f"report-{tag}"
        assert main(
            ["report", "--seed", str(DESK_SEED), "--study-json", str(study_json),
             "--out", str(out)] + DESK_OVERRIDES
        ) == 0
        hashes.append(_hash_tree(out))
    assert hashes[0] == hashes[1]

    print("\nCRITERION 6 PASS: study and simulate/update/evaluate/optimize/report "
          "outputs bit-identical across repeated runs at a fixed master seed")


def test_criterion_7_dashboard_replay(tmp_path, scenario):
    from fastapi.testclient import TestClient

    from preloadtwin.service import create_app
    from preloadtwin.sessions import SessionLog, replay

    heuristic = HeuristicParams(h0=1.09, cov_th=0.05, p_th=0.43)
    g = pack_geometry(scenario.geometry, scenario.pvd, scenario.solver.series_tol)
    pt = sample_soil_array(scenario.priors, stream(FIXTURE_SEED, "truth", 0), 1)
    ptp = pt.copy()
    ptp[:, 7] /= 52.0
    ptp[:, 8] /= 52.0
    S, _, _, _, _, _, _ = kernels.trajectory_batch(
        ptp, g, heuristic.h0, np.inf, 0.0, 72, scenario.solver.series_tol
    )
    xi = stream(FIXTURE_SEED, "noise", 0).standard_normal(72)
    measurements = [
        (t, float(S[0, t] + scenario.sigma_eps * xi[t - 1])) for t in range(1, 31)
    ]

    # CLI path
    meas = tmp_path / "meas.csv"
    with open(meas, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["week", "z_s_m"])
        for t, z in measurements:
            writer.writerow([t, repr(z)])
    out = tmp_path / "cli"
    assert main(
        ["update", "--seed", str(FIXTURE_SEED), "--measurements", str(meas),
         "--h0", "1.09", "--cov-th", "0.05", "--p-th", "0.43", "--out", str(out)]
    ) == 0
    cli_summary = json.loads((out / "session_summary.json").read_text(encoding="utf-8"))

    # service path, committing every recommendation
    client = TestClient(create_app(scenario))
    doc = client.post(
        "/sessions",
        json={
            "seed": FIXTURE_SEED,
            "heuristic": {"h0_m": 1.09, "cov_th": 0.05, "p_th": 0.43},
        },
    ).json()
    sid = doc["session_id"]
    for t, z in measurements:
        d = client.post(
            f"/sessions/{sid}/measurements", json={"t_weeks": t, "z_s_m": z}
        ).json()
        if d["session_status"] == "decision-pending":
            rec = client.get(f"/sessions/{sid}/recommendation").json()["recommendation"]
            client.post(f"/sessions/{sid}/actions", json={"h_add_m": rec.get("h_add_m", 0.0)})
    client.post(f"/sessions/{sid}/close")
    service_events = client.get(f"/sessions/{sid}/log").json()["events"]

    # both paths agree on the decision and the resulting belief
    cli_log = SessionLog.load(out / "session.jsonl")
    cli_decisions = [e for e in cli_log.events if e["kind"] == "decision"]
    svc_decisions = [e for e in service_events if e["kind"] == "decision"]
    assert len(cli_decisions) == len(svc_decisions) == 1
    gate_week = cli_decisions[0]["t"]
    assert gate_week == svc_decisions[0]["t"] == 21
    h_add = cli_decisions[0]["committed"]["h_add_m"]
    assert h_add == svc_decisions[0]["committed"]["h_add_m"]
    assert h_add > 0.0  # single increment placed

    def digest(events):
        import json as _json

        return hashlib.sha256(
            _json.dumps(events, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()

    assert digest(cli_log.events) == digest(service_events)

    # replaying the service log offline reproduces the CLI belief hash
    svc_log = SessionLog()
    for ev in service_events:
        svc_log.append(ev)
    belief = replay(svc_log, scenario)
    assert belief.content_hash() == cli_summary["belief_hash"]

    # post-action compliance flags identical
    cli_final = [e for e in cli_log.events if e["kind"] == "final"][0]
    svc_final = [e for e in service_events if e["kind"] == "final"][0]
    assert cli_final["compliance"] == svc_final["compliance"]

    print(f"\nCRITERION 7 PASS: gate week {gate_week}, single increment "
          f"h_add={h_add} m, hash-equal CLI and service sessions")
