import copy
import json

import numpy as np
import pytest
import yaml

from preloadtwin.belief import ModelContext, init_belief
from preloadtwin.consolidation import ActionSchedule
from preloadtwin.errors import ScenarioError, SessionLogError
from preloadtwin.policy import HeuristicParams
from preloadtwin.scenario import (
    bundled_scenario_path,
    load_bundled_scenario,
    load_scenario,
    parse_scenario,
    save_scenario,
    scenario_hash,
)
from preloadtwin.sessions import SessionLog, SessionRunner, replay


@pytest.fixture
def raw(scenario):
    return copy.deepcopy(scenario.raw)


class TestLoadScenario:
    def test_bundled_paper_values(self, scenario):
        assert scenario.requirements.s_target == pytest.approx(1.27)
        assert scenario.requirements.t_max == 72
        assert scenario.requirements.ocr_target == pytest.approx(1.10)
        assert scenario.priors.gamma_emb.mean() == pytest.approx(20.8, rel=1e-12)
        assert scenario.priors.cv.mean() == pytest.approx(0.2, rel=1e-12)
        assert scenario.priors.ch.mean() == pytest.approx(0.5, rel=1e-12)
        assert scenario.geometry.clay_thickness == pytest.approx(15.5)
        assert scenario.geometry.road_length == pytest.approx(550.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError):
            load_scenario(tmp_path / "nope.yaml")

    def test_unknown_key_rejected_with_path(self, raw):
        raw["geometry"]["clay_thikness_m"] = 15.5
        with pytest.raises(ScenarioError) as err:
            parse_scenario(raw)
        assert "geometry" in str(err.value)
        assert "clay_thikness_m" in str(err.value)

    def test_unknown_top_level_key(self, raw):
        raw["extra_block"] = {}
        with pytest.raises(ScenarioError):
            parse_scenario(raw)

    def test_invalid_drain_geometry(self, raw):
        raw["pvd"]["spacing_m"] = 0.01
        with pytest.raises((ScenarioError, Exception)):
            parse_scenario(raw)

    def test_provenance_required(self, raw):
        del raw["provenance"]["costs"]
        with pytest.raises(ScenarioError) as err:
            parse_scenario(raw)
        assert "provenance.costs" in str(err.value)

    def test_prior_entry_exclusivity(self, raw):
        raw["priors"]["ML_kpa"] = {"samples": [1.0, 2.0], "mean": 1.5, "cov": 0.1}
        with pytest.raises(ScenarioError):
            parse_scenario(raw)

    def test_prior_missing(self, raw):
        del raw["priors"]["cv_m2_yr"]
        with pytest.raises(ScenarioError) as err:
            parse_scenario(raw)
        assert "cv_m2_yr" in str(err.value)

    def test_bad_type_reports_path(self, raw):
        raw["requirements"]["t_max_weeks"] = "seventy-two"
        with pytest.raises(ScenarioError) as err:
            parse_scenario(raw)
        assert "requirements.t_max_weeks" in str(err.value)

    def test_variance_fraction_interpretation(self, raw):
        raw["solver"]["cov_interpretation"] = "variance_fraction"
        scn = parse_scenario(raw)
        # variance = 0.05 * 20.8 -> std = sqrt(1.04)
        assert scn.priors.gamma_emb.std() == pytest.approx(np.sqrt(0.05 * 20.8), rel=1e-9)
        assert scn.priors.gamma_emb.mean() == pytest.approx(20.8, rel=1e-12)


class TestRoundTrip:
    def test_save_load_identity(self, scenario, tmp_path):
        p = tmp_path / "round.yaml"
        save_scenario(scenario, p)
        again = load_scenario(p)
        assert again.raw == scenario.raw
        assert again.hash() == scenario.hash()

    def test_float_precision_survives(self, raw, tmp_path):
        raw["measurement"]["sigma_eps_m"] = 0.1 + 1e-17 + 0.023456789123456789
        scn = parse_scenario(raw)
        p = tmp_path / "prec.yaml"
        save_scenario(scn, p)
        assert load_scenario(p).sigma_eps == scn.sigma_eps

    def test_hash_sensitivity(self, raw):
        h0 = scenario_hash(parse_scenario(raw).raw)
        raw["costs"]["c_delay_sek_per_week"] = 123456.0
        h1 = scenario_hash(parse_scenario(raw).raw)
        assert h0 != h1


class TestOverrides:
    def test_override_applies(self, scenario):
        scn = scenario.with_overrides({"measurement.sigma_eps_m": 0.15})
        assert scn.sigma_eps == pytest.approx(0.15)
        assert scenario.sigma_eps == pytest.approx(0.05)

    def test_override_bad_path(self, scenario):
        with pytest.raises(ScenarioError):
            scenario.with_overrides({"measurement.nope": 1.0})

    def test_override_validated(self, scenario):
        with pytest.raises(ScenarioError):
            scenario.with_overrides({"measurement.sigma_eps_m": -0.1})


class TestSessionLog:
    def test_append_only_ordering(self):
        log = SessionLog()
        log.append({"kind": "init", "t": 0})
        log.append({"kind": "measurement", "t": 3})
        with pytest.raises(SessionLogError):
            log.append({"kind": "measurement", "t": 2})

    def test_dump_load_round_trip(self, tmp_path):
        log = SessionLog()
        log.append({"kind": "init", "t": 0, "seed": 1})
        log.append({"kind": "measurement", "t": 1, "z_s_m": 0.25, "sigma_eps_m": 0.05})
        p = tmp_path / "log.jsonl"
        log.dump(p)
        again = SessionLog.load(p)
        assert again.events == log.events

    def test_bad_header_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"format": "other"}\n', encoding="utf-8")
        with pytest.raises(SessionLogError):
            SessionLog.load(p)


class TestReplay:
    def test_empty_log_replays_to_prior(self, scenario):
        runner = SessionRunner(scenario, seed=7, n_particles=60)
        belief = replay(runner.log, scenario)
        ctx = ModelContext.from_scenario(scenario)
        prior = init_belief(
            scenario.priors, 60, 7, ctx, ActionSchedule(h0=scenario.heuristic.h0)
        )
        assert belief.content_hash() == prior.content_hash()

    def test_full_session_replay_bit_identical(self, scenario):
        runner = SessionRunner(
            scenario, seed=3, heuristic=HeuristicParams(1.0, 0.3, 0.5), n_particles=80
        )
        zs = [0.08, 0.17, 0.24, 0.33, 0.40]
        for t, z in enumerate(zs, start=1):
            runner.add_measurement(t, z)
            if runner.status == "decision-pending":
                rec = runner.recommendation()
                runner.commit_action(rec.get("h_add_m", 0.0))
        belief = replay(runner.log, scenario)
        assert belief.content_hash() == runner.belief.content_hash()

    def test_scenario_hash_mismatch_detected(self, scenario):
        runner = SessionRunner(scenario, seed=3, n_particles=40)
        other = scenario.with_sigma_eps(0.15)
        with pytest.raises(SessionLogError):
            replay(runner.log, other)

    def test_tampered_summary_detected(self, scenario, tmp_path):
        runner = SessionRunner(scenario, seed=3, n_particles=40)
        runner.add_measurement(1, 0.1)
        p = tmp_path / "log.jsonl"
        runner.log.dump(p)
        lines = p.read_text(encoding="utf-8").splitlines()
        idx = next(
            i for i, ln in enumerate(lines) if json.loads(ln).get("kind") == "measurement"
        )
        doc = json.loads(lines[idx])
        doc["z_s_m"] = 0.9
        lines[idx] = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(SessionLogError):
            replay(SessionLog.load(p), scenario)


class TestBundledFile:
    def test_yaml_is_strict_subset(self):
        # the shipped file parses cleanly and normalization is stable
        doc = yaml.safe_load(bundled_scenario_path().read_text(encoding="utf-8"))
        scn = parse_scenario(doc)
        assert scn.name == "stockholm-highway73"
        assert parse_scenario(scn.raw).raw == scn.raw

    def test_non_paper_blocks_flagged(self, scenario):
        assert scenario.provenance["costs"] == "non_paper"
        assert scenario.provenance["pvd"] == "non_paper"
        assert scenario.provenance["requirements"] == "paper"
