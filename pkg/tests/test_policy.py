import numpy as np
import pytest

from preloadtwin.belief import ModelContext, init_belief
from preloadtwin.consolidation import ActionSchedule, simulate_trajectory
from preloadtwin.errors import ScenarioError
from preloadtwin.policy import (
    CostParams,
    HeuristicParams,
    PolicyOptions,
    Requirements,
    check_requirements,
    heuristic_bu_decide,
    heuristic_static_decide,
    total_cost,
)
from preloadtwin.priors import sample_soil


@pytest.fixture
def req():
    return Requirements()


@pytest.fixture
def costs():
    return CostParams()


@pytest.fixture
def options():
    return PolicyOptions()


def long_trajectory(scenario, soil, schedule):
    horizon = scenario.requirements.t_max + scenario.costs.delay_cap
    return simulate_trajectory(
        soil, scenario.geometry, scenario.pvd, schedule, horizon,
        scenario.solver.series_tol,
    )


class TestCheckRequirements:
    def _traj_with(self, scenario, target_factor):
        # pick a soil whose achieved settlement lands on the requested side
        for seed in range(60):
            (soil,) = sample_soil(scenario.priors, seed, 1)
            traj = long_trajectory(scenario, soil, ActionSchedule(h0=1.0))
            s = traj.settlement_m[scenario.requirements.t_max]
            if target_factor > 1 and s >= scenario.requirements.s_target * target_factor:
                return traj
            if target_factor < 1 and s <= scenario.requirements.s_target * target_factor:
                return traj
        raise AssertionError("no suitable trajectory found")

    def test_inclusive_boundary(self, scenario, req, options):
        traj = self._traj_with(scenario, 1.05)
        req_eq = Requirements(
            s_target=float(traj.settlement_m[req.t_max]), ocr_target=1.10, t_max=req.t_max
        )
        checks = check_requirements(traj, req_eq, options)
        assert checks["settlement_ok"] is True

    def test_ocr_strictness(self, scenario, options):
        traj = self._traj_with(scenario, 1.02)
        ocr = traj.ocr[72]
        just_above = Requirements(s_target=1.27, ocr_target=ocr - 1e-9, t_max=72)
        just_below = Requirements(s_target=1.27, ocr_target=min(ocr + 0.01, 2.0), t_max=72)
        assert check_requirements(traj, just_above, options)["ocr_ok"] is True
        assert check_requirements(traj, just_below, options)["ocr_ok"] is False

    def test_target_comfortably_met(self, scenario, req, options):
        traj = self._traj_with(scenario, 1.02)
        assert check_requirements(traj, req, options)["settlement_ok"] is True

    def test_needs_coverage_to_t_max(self, scenario, req, options):
        (soil,) = sample_soil(scenario.priors, 0, 1)
        short = simulate_trajectory(
            soil, scenario.geometry, scenario.pvd, ActionSchedule(h0=1.0), 10
        )
        with pytest.raises(ScenarioError):
            check_requirements(short, req, options)


class TestTotalCost:
    def test_compliant_run_pays_surcharge_only(self, scenario, req, costs, options):
        for seed in range(60):
            (soil,) = sample_soil(scenario.priors, seed, 1)
            traj = long_trajectory(scenario, soil, ActionSchedule(h0=1.3))
            checks = check_requirements(traj, req, options)
            if checks["settlement_ok"] and checks["ocr_ok"]:
                b = total_cost(traj, ActionSchedule(h0=1.3), req, costs, 550.0, options)
                assert b.surcharge_increase == 0.0
                assert b.delay == 0.0
                assert b.ocr_penalty == 0.0
                assert b.total == pytest.approx(costs.c_sur_initial * 1.3 * 550.0)
                return
        raise AssertionError("no compliant trajectory found")

    def test_increment_adds_strictly(self, scenario, req, costs, options):
        (soil,) = sample_soil(scenario.priors, 1, 1)
        sched = ActionSchedule(h0=1.0, t_add=12, h_add=0.4)
        traj = long_trajectory(scenario, soil, sched)
        b = total_cost(traj, sched, req, costs, 550.0, options)
        assert b.surcharge_increase == pytest.approx(
            (costs.remobilization + costs.c_sur_increase * 0.4) * 550.0
        )
        assert b.total >= b.surcharge_initial + b.surcharge_increase

    def test_additivity_exact(self, scenario, req, costs, options):
        (soil,) = sample_soil(scenario.priors, 2, 1)
        sched = ActionSchedule(h0=0.8)
        traj = long_trajectory(scenario, soil, sched)
        b = total_cost(traj, sched, req, costs, 550.0, options)
        assert b.total == b.surcharge_initial + b.surcharge_increase + b.delay + b.ocr_penalty

    def test_delay_capped_and_flagged(self, scenario, req, options):
        # a tiny surcharge cannot reach the target within the cap
        (soil,) = sample_soil(scenario.priors, 3, 1)
        costs = CostParams()
        sched = ActionSchedule(h0=0.0)
        traj = long_trajectory(scenario, soil, sched)
        b = total_cost(traj, sched, req, costs, 550.0, options)
        if b.target_never_reached:
            assert b.delay_weeks == costs.delay_cap
            assert b.delay == costs.c_delay * costs.delay_cap

    def test_monotone_penalty(self, scenario, req, options):
        (soil,) = sample_soil(scenario.priors, 4, 1)
        sched = ActionSchedule(h0=0.4)
        traj = long_trajectory(scenario, soil, sched)
        cheap = CostParams(c_delay=1e4, c_ocr_penalty=0.0)
        dear = CostParams(c_delay=5e5, c_ocr_penalty=5e6)
        b_cheap = total_cost(traj, sched, req, cheap, 550.0, options)
        b_dear = total_cost(traj, sched, req, dear, 550.0, options)
        assert b_dear.total >= b_cheap.total

    def test_requires_delay_coverage(self, scenario, req, costs, options):
        (soil,) = sample_soil(scenario.priors, 5, 1)
        sched = ActionSchedule(h0=0.0)
        short = simulate_trajectory(soil, scenario.geometry, scenario.pvd, sched, 72)
        if short.settlement_m[72] < req.s_target:
            with pytest.raises(ScenarioError):
                total_cost(short, sched, req, costs, 550.0, options)


class TestHeuristicDecide:
    @pytest.fixture
    def belief(self, scenario):
        ctx = ModelContext.from_scenario(scenario)
        return init_belief(scenario.priors, 200, 17, ctx, ActionSchedule(h0=1.0))

    def test_cov_gate_blocks_action(self, belief, req, options):
        w = HeuristicParams(h0=1.0, cov_th=1e-6, p_th=0.5)
        decision = heuristic_bu_decide(belief, 1, w, req, options)
        assert decision.action == "keep_measuring"
        assert decision.gate_value >= w.cov_th

    def test_on_track_no_action(self, belief, req, options):
        w = HeuristicParams(h0=1.0, cov_th=10.0, p_th=0.999)
        decision = heuristic_bu_decide(belief, 1, w, req, options)
        assert decision.action == "no_action_needed"
        assert decision.prob_noncompliant <= w.p_th

    def test_minimal_increment_vs_bruteforce(self, belief, req, options):
        # exhaustive-grid oracle: chosen h_add succeeds, h_add - step fails
        from preloadtwin.policy import _candidate_noncompliance

        w = HeuristicParams(h0=1.0, cov_th=10.0, p_th=0.05)
        decision = heuristic_bu_decide(belief, 1, w, req, options)
        assert decision.action == "adjust"
        grid = options.grid()
        probs = {
            round(float(a), 3): _candidate_noncompliance(belief, req, options, 1, float(a))
            for a in grid
        }
        winners = [a for a in grid if probs[round(float(a), 3)] <= w.p_th]
        assert decision.h_add == pytest.approx(min(winners))
        below = decision.h_add - options.increment_grid_step
        if below >= options.increment_grid_start - 1e-12:
            assert probs[round(float(below), 3)] > w.p_th

    def test_grid_exhaustion_flag(self, belief, req, options):
        w = HeuristicParams(h0=1.0, cov_th=10.0, p_th=1e-9)
        decision = heuristic_bu_decide(belief, 1, w, req, options)
        assert decision.action == "adjust"
        assert decision.grid_exhausted
        assert decision.h_add == pytest.approx(options.grid()[-1])

    def test_p_th_monotonicity(self, belief, req, options):
        # raising p_th never increases the chosen increment
        chosen = []
        for p_th in (0.05, 0.2, 0.4, 0.6, 0.8):
            w = HeuristicParams(h0=1.0, cov_th=10.0, p_th=p_th)
            d = heuristic_bu_decide(belief, 1, w, req, options)
            chosen.append(d.h_add if d.is_adjust else 0.0)
        assert all(a >= b for a, b in zip(chosen, chosen[1:]))

    def test_decide_after_increment_rejected(self, belief, req, options):
        from preloadtwin.belief import apply_action

        acted = apply_action(belief, 5, 0.5)
        with pytest.raises(ScenarioError):
            heuristic_bu_decide(acted, 6, HeuristicParams(1.0, 0.5, 0.5), req, options)


class TestStaticHeuristic:
    def test_always_do_nothing(self):
        for t in (1, 10, 71):
            assert heuristic_static_decide(t).action == "no_action_needed"
            assert heuristic_static_decide(t).h_add == 0.0


class TestValidation:
    def test_requirements_bounds(self):
        with pytest.raises(ScenarioError):
            Requirements(s_target=-1.0)
        with pytest.raises(ScenarioError):
            Requirements(ocr_target=0.9)

    def test_heuristic_bounds(self):
        with pytest.raises(ScenarioError):
            HeuristicParams(h0=-0.1, cov_th=0.5, p_th=0.5)
        with pytest.raises(ScenarioError):
            HeuristicParams(h0=1.0, cov_th=0.5, p_th=1.5)

    def test_grid_spec(self):
        opts = PolicyOptions()
        grid = opts.grid()
        assert grid[0] == pytest.approx(0.1)
        assert grid[-1] == pytest.approx(3.0)
        assert len(grid) == 30
