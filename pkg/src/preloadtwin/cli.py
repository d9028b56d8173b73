"""Command-line entry points for the offline workflows.

Subcommands: simulate, update, evaluate, optimize, study, report, serve.
Every subcommand is deterministic given (scenario, seed, overrides); all
output files start with a provenance header carrying the scenario hash
and master seed. Exit codes: 0 ok, 2 configuration error, 3 numeric
error, 4 service error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .consolidation import ActionSchedule, simulate_trajectory
from .errors import NumericError, PreloadTwinError, ScenarioError, ServiceError
from .optimizer import (
    POLICY_BU,
    POLICY_STATIC,
    evaluate_policy,
    optimize_policy,
    run_study,
)
from .policy import HeuristicParams, check_requirements, total_cost
from .priors import sample_soil
from .scenario import (
    Scenario,
    bundled_scenario_path,
    canonical_json,
    load_scenario,
)
from .sessions import SessionLog, SessionRunner, replay

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_SERVICE = 4


def _provenance_line(scenario: Scenario, seed: int) -> str:
    return f"# scenario_hash={scenario.hash()} master_seed={seed}"


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ScenarioError(f"override must look like dotted.path=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out[key.strip()] = value
    return out


def _load(args) -> Scenario:
    path = args.scenario if args.scenario else bundled_scenario_path()
    scenario = load_scenario(path)
    overrides = _parse_overrides(args.override or [])
    return scenario.with_overrides(overrides)


def _write_json(path: Path, doc, scenario: Scenario, seed: int) -> None:
    doc = {"provenance": {"scenario_hash": scenario.hash(), "master_seed": seed}, **doc}
    path.write_text(canonical_json(doc) + "\n", encoding="utf-8")


def cmd_simulate(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t_add = args.t_add if args.t_add is not None else None
    schedule = ActionSchedule(h0=args.h0, t_add=t_add, h_add=args.h_add if t_add else 0.0)
    horizon = scenario.requirements.t_max + scenario.costs.delay_cap
    samples = sample_soil(scenario.priors, args.seed, args.n)

    summaries = []
    for i, soil in enumerate(samples):
        traj = simulate_trajectory(
            soil, scenario.geometry, scenario.pvd, schedule, horizon,
            scenario.solver.series_tol,
        )
        csv_path = out / f"trajectory_{i:03d}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(_provenance_line(scenario, args.seed) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["week", "load_kpa", "settlement_m", "degree", "ocr", "s_inf_m"])
            for t in range(traj.t_end + 1):
                row = traj.at(t)
                writer.writerow(
                    [t, repr(row["load_kpa"]), repr(row["settlement_m"]),
                     repr(row["degree"]), repr(row["ocr"]), repr(row["s_inf_m"])]
                )
        checks = check_requirements(traj, scenario.requirements, scenario.policy_options)
        breakdown = total_cost(
            traj, schedule, scenario.requirements, scenario.costs,
            scenario.geometry.road_length, scenario.policy_options,
        )
        summaries.append(
            {
                "sample": i,
                "s_tmax_m": checks["s_tmax_m"],
                "ocr_tmax": checks["ocr_tmax"],
                "settlement_ok": checks["settlement_ok"],
                "ocr_ok": checks["ocr_ok"],
                "delay_weeks": breakdown.delay_weeks,
                "cost_sek": breakdown.total,
                "cost_components_sek": {
                    "surcharge_initial": breakdown.surcharge_initial,
                    "surcharge_increase": breakdown.surcharge_increase,
                    "delay": breakdown.delay,
                    "ocr_penalty": breakdown.ocr_penalty,
                },
            }
        )
    _write_json(out / "summary.json", {"rollouts": summaries}, scenario, args.seed)
    print(f"wrote {len(samples)} trajectories and summary.json to {out}")
    return EXIT_OK


def cmd_update(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    heuristic = HeuristicParams(
        h0=args.h0 if args.h0 is not None else scenario.heuristic.h0,
        cov_th=args.cov_th if args.cov_th is not None else scenario.heuristic.cov_th,
        p_th=args.p_th if args.p_th is not None else scenario.heuristic.p_th,
    )
    runner = SessionRunner(scenario, args.seed, heuristic, args.n_particles)

    measurements = []
    with open(args.measurements, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames is None or not {"week", "z_s_m"} <= set(reader.fieldnames):
            raise ScenarioError(
                f"measurements file needs columns week,z_s_m; got {reader.fieldnames}"
            )
        for row in reader:
            measurements.append((int(row["week"]), float(row["z_s_m"])))

    committed = []
    for t, z in measurements:
        runner.add_measurement(t, z)
        if args.auto_commit and runner.status == "decision-pending":
            rec = runner.recommendation()
            h_add = rec.get("h_add_m", 0.0) if rec["action"] == "adjust" else 0.0
            runner.commit_action(h_add)
            committed.append({"t": t, "h_add_m": h_add, "action": rec["action"]})
    final = runner.close()

    runner.log.dump(out / "session.jsonl")
    _write_json(
        out / "session_summary.json",
        {
            "status": final["session_status"],
            "compliance": final["compliance"],
            "decisions": committed,
            "belief_hash": runner.belief.content_hash(),
            "schedule": {
                "h0_m": runner.belief.schedule.h0,
                "t_add_weeks": runner.belief.schedule.t_add,
                "h_add_m": runner.belief.schedule.h_add,
            },
        },
        scenario,
        args.seed,
    )
    print(f"processed {len(measurements)} measurements; log and summary in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    w = HeuristicParams(h0=args.h0, cov_th=args.cov_th, p_th=args.p_th)
    result = evaluate_policy(w, scenario, args.policy, args.n_mc, args.n_bu, args.seed)
    records = {
        key: (list(val) if isinstance(val, list) else val.tolist())
        for key, val in result.records.items()
    }
    _write_json(
        out / "evaluation.json",
        {
            "policy": args.policy,
            "w": {"h0_m": w.h0, "cov_th": w.cov_th, "p_th": w.p_th},
            "n_mc": result.n_mc,
            "sigma_eps_m": result.sigma_eps,
            "mean_cost_sek": result.mean_cost,
            "std_cost_sek": result.std_cost,
            "component_means_sek": result.component_means,
            "records": records,
        },
        scenario,
        args.seed,
    )
    print(
        f"{args.policy} policy: expected cost {result.mean_cost/1e6:.3f} MSEK "
        f"(std {result.std_cost/1e6:.3f}) over {result.n_mc} rollouts"
    )
    return EXIT_OK


def cmd_optimize(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    w_opt, evals, traces, best = optimize_policy(
        scenario, args.policy, args.seed, restarts=args.restarts
    )
    final = evals["final"]
    with open(out / "ce_trace.jsonl", "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"scenario_hash": scenario.hash(), "master_seed": args.seed}) + "\n")
        for r, trace in enumerate(traces):
            for entry in trace:
                fh.write(canonical_json({"restart": r, **entry}) + "\n")
    _write_json(
        out / "optimum.json",
        {
            "policy": args.policy,
            "w_opt": {"h0_m": w_opt.h0, "cov_th": w_opt.cov_th, "p_th": w_opt.p_th},
            "best_restart": best,
            "expected_cost_sek": final.mean_cost,
            "std_cost_sek": final.std_cost,
            "component_means_sek": final.component_means,
            "n_mc_final": final.n_mc,
        },
        scenario,
        args.seed,
    )
    print(
        f"{args.policy} optimum: h0={w_opt.h0:.3f} cov_th={w_opt.cov_th:.3f} "
        f"p_th={w_opt.p_th:.3f} -> {final.mean_cost/1e6:.3f} MSEK"
    )
    return EXIT_OK


def _write_study_outputs(result, scenario: Scenario, seed: int, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "study_table.tsv").write_text(
        _provenance_line(scenario, seed) + "\n" + result.to_table_text(), encoding="utf-8"
    )
    _write_json(out / "study.json", result.to_json(), scenario, seed)
    with open(out / "ce_trace.jsonl", "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"scenario_hash": scenario.hash(), "master_seed": seed}) + "\n")
        for label, traces in result.traces.items():
            for r, trace in enumerate(traces):
                for entry in trace:
                    fh.write(canonical_json({"optimization": label, "restart": r, **entry}) + "\n")
    with open(out / "cost_breakdown.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(_provenance_line(scenario, seed) + "\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["policy", "sigma_eps_m", "surcharge_initial_sek", "surcharge_increase_sek",
             "delay_sek", "ocr_penalty_sek", "expected_cost_sek"]
        )
        for row in result.rows:
            writer.writerow(
                [
                    row.policy,
                    "" if row.sigma_eps is None else repr(row.sigma_eps),
                    repr(row.components["surcharge_initial"]),
                    repr(row.components["surcharge_increase"]),
                    repr(row.components["delay"]),
                    repr(row.components["ocr_penalty"]),
                    repr(row.expected_cost),
                ]
            )


def cmd_study(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    result = run_study(
        scenario,
        master_seed=args.seed,
        restarts=args.restarts,
        final_n_mc=args.final_n_mc,
    )
    _write_study_outputs(result, scenario, args.seed, out)
    print((out / "study_table.tsv").read_text(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    scenario = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.session_log:
        log = SessionLog.load(args.session_log)
        belief = replay(log, scenario)
        _write_json(
            out / "replay_report.json",
            {
                "events": len(log.events),
                "final_week": belief.t_current,
                "belief_hash": belief.content_hash(),
                "schedule": {
                    "h0_m": belief.schedule.h0,
                    "t_add_weeks": belief.schedule.t_add,
                    "h_add_m": belief.schedule.h_add,
                },
            },
            scenario,
            args.seed,
        )
        print(f"replayed {len(log.events)} events; report in {out}")
        return EXIT_OK
    if args.study_json:
        doc = json.loads(Path(args.study_json).read_text(encoding="utf-8"))
        if doc.get("provenance", {}).get("scenario_hash") != scenario.hash():
            raise ScenarioError("study.json was produced from a different scenario")
        lines = [
            "policy\tsigma_eps_m\texpected_cost_msek\tstd_cost_msek",
        ]
        for row in doc["rows"]:
            lines.append(
                "\t".join(
                    [
                        row["policy"],
                        "-" if row["sigma_eps_m"] is None else repr(row["sigma_eps_m"]),
                        repr(round(row["expected_cost_sek"] / 1e6, 6)),
                        repr(round(row["std_cost_sek"] / 1e6, 6)),
                    ]
                )
            )
        (out / "comparison.tsv").write_text(
            _provenance_line(scenario, args.seed) + "\n" + "\n".join(lines) + "\n",
            encoding="utf-8",
        )
        print(f"comparison table in {out}")
        return EXIT_OK
    raise ScenarioError("report needs --session-log or --study-json")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    scenario = _load(args)
    app = create_app(scenario)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preloadtwin",
        description=(
            "Probabilistic digital twin for surcharge-preloaded embankments: "
            "simulate consolidation, update beliefs from settlement "
            "measurements, and optimize preloading policies."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario YAML (default: bundled stockholm-highway73)")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument(
            "--override",
            action="append",
            metavar="PATH=VALUE",
            help="dotted-path scenario override, e.g. measurement.sigma_eps_m=0.1",
        )

    p = sub.add_parser("simulate", help="run deterministic trajectories from prior samples")
    common(p)
    p.add_argument("--n", type=int, default=3, help="number of soil realizations")
    p.add_argument("--h0", type=float, default=1.0, help="initial surcharge height [m]")
    p.add_argument("--t-add", type=int, default=None, help="increment week (optional)")
    p.add_argument("--h-add", type=float, default=0.0, help="increment height [m]")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("update", help="run a measurement session from a CSV file")
    common(p)
    p.add_argument("--measurements", required=True, help="CSV with columns week,z_s_m")
    p.add_argument("--h0", type=float, default=None)
    p.add_argument("--cov-th", type=float, default=None)
    p.add_argument("--p-th", type=float, default=None)
    p.add_argument("--n-particles", type=int, default=None)
    p.add_argument(
        "--auto-commit",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="commit the heuristic recommendation at decision points",
    )
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of one policy")
    common(p)
    p.add_argument("--policy", choices=[POLICY_BU, POLICY_STATIC], default=POLICY_BU)
    p.add_argument("--h0", type=float, required=True)
    p.add_argument("--cov-th", type=float, default=0.3)
    p.add_argument("--p-th", type=float, default=0.5)
    p.add_argument("--n-mc", type=int, default=100)
    p.add_argument("--n-bu", type=int, default=100)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="cross-entropy search for one policy")
    common(p)
    p.add_argument("--policy", choices=[POLICY_BU, POLICY_STATIC], default=POLICY_BU)
    p.add_argument("--restarts", type=int, default=None)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("study", help="full measurement-error study (comparison tables)")
    common(p)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--final-n-mc", type=int, default=None)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("report", help="re-render tables from stored results or replay a log")
    common(p)
    p.add_argument("--study-json", help="study.json produced by the study subcommand")
    p.add_argument("--session-log", help="session.jsonl produced by update or the service")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the session HTTP service")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8584)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ServiceError as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except PreloadTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
