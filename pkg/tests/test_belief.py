import math

import numpy as np
import pytest

from preloadtwin.belief import (
    Measurement,
    ModelContext,
    apply_action,
    central_interval,
    effective_sample_size,
    init_belief,
    likelihood,
    posterior_stats,
    posterior_weights,
    prob_below_target,
    update,
    weighted_quantile,
)
from preloadtwin.consolidation import ActionSchedule
from preloadtwin.errors import (
    DegenerateUpdateError,
    ScenarioError,
    UndefinedCovError,
    UnsupportedActionError,
)
from preloadtwin.priors import from_moments, SoilPriorSet


def tight_priors(cov=1e-6):
    # near-degenerate marginals: every particle predicts the same trajectory
    return SoilPriorSet(
        sigma_L=from_moments(450.0, cov),
        sigma_c=from_moments(45.0, cov),
        gamma_cl=from_moments(16.0, cov),
        gamma_emb=from_moments(20.8, cov),
        M0=from_moments(5000.0, cov),
        ML=from_moments(207.0, cov),
        wN=from_moments(0.7, cov),
        cv=from_moments(0.2, cov),
        ch=from_moments(0.5, cov),
    )


@pytest.fixture
def ctx(scenario):
    return ModelContext.from_scenario(scenario)


@pytest.fixture
def belief(scenario, ctx):
    return init_belief(scenario.priors, 100, 11, ctx, ActionSchedule(h0=1.0))


class TestInit:
    def test_uniform_weights(self, belief):
        assert belief.n_s == 100
        assert np.allclose(belief.weights, 0.01)
        assert belief.t_current == 0

    def test_determinism(self, scenario, ctx):
        a = init_belief(scenario.priors, 50, 3, ctx, ActionSchedule(h0=1.0))
        b = init_belief(scenario.priors, 50, 3, ctx, ActionSchedule(h0=1.0))
        assert a.content_hash() == b.content_hash()

    def test_too_few_particles(self, scenario, ctx):
        with pytest.raises(ScenarioError):
            init_belief(scenario.priors, 1, 3, ctx, ActionSchedule(h0=1.0))


class TestLikelihood:
    def test_density_at_mode(self):
        z = Measurement(t=5, z_s=1.0, sigma_eps=0.05)
        assert likelihood(z, 1.0) == pytest.approx(1.0 / (0.05 * math.sqrt(2 * math.pi)), rel=1e-12)
        assert likelihood(z, 1.0) == pytest.approx(7.9788, abs=5e-4)

    def test_one_sigma_point(self):
        z = Measurement(t=5, z_s=1.0, sigma_eps=0.05)
        mode = likelihood(z, 1.0)
        assert likelihood(z, 1.05) == pytest.approx(mode * math.exp(-0.5), rel=1e-12)


class TestUpdate:
    def test_identical_particles_uniform_posterior(self, scenario, ctx):
        b = init_belief(tight_priors(), 50, 1, ctx, ActionSchedule(h0=1.0))
        z = Measurement(t=10, z_s=float(b.s_cache[0, 10]) + 0.02, sigma_eps=0.05)
        w = posterior_weights(b, z)
        assert np.allclose(w, 1.0 / 50)

    def test_symmetric_pair_splits_evenly(self, belief):
        z_mid = Measurement(
            t=10,
            z_s=float((belief.s_cache[0, 10] + belief.s_cache[1, 10]) / 2),
            sigma_eps=0.05,
        )
        # restrict to the two symmetric particles
        from dataclasses import replace

        two = replace(
            belief,
            pack=belief.pack[:2],
            weights=np.array([0.5, 0.5]),
            s_cache=belief.s_cache[:2],
            ocr_cache=belief.ocr_cache[:2],
            s_inf=belief.s_inf[:2],
        )
        w = posterior_weights(two, z_mid)
        assert w == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_likelihood_dominance_ratio(self, belief):
        z = Measurement(t=12, z_s=float(belief.s_cache[0, 12]), sigma_eps=0.05)
        w = posterior_weights(belief, z)
        s = belief.s_cache[:, 12]
        for i in (3, 17, 40):
            expected = likelihood(z, float(s[i])) / likelihood(z, float(s[0]))
            assert w[i] / w[0] == pytest.approx(expected, rel=1e-9)

    def test_weights_sum_to_one_after_operations(self, belief):
        b = belief
        for t in (4, 9, 14):
            z = Measurement(t=t, z_s=float(np.mean(b.s_cache[:, t])), sigma_eps=0.05)
            b = update(b, z)
            assert float(np.sum(b.weights)) == pytest.approx(1.0, abs=1e-12)

    def test_time_advances_and_rejects_regression(self, belief):
        z = Measurement(t=10, z_s=0.4, sigma_eps=0.05)
        b = update(belief, z)
        assert b.t_current == 10
        with pytest.raises(ScenarioError):
            update(b, Measurement(t=5, z_s=0.4, sigma_eps=0.05))

    def test_far_measurement_still_updates(self, belief):
        # the shifted-exp weighting keeps a 1e18-sigma residual finite
        z = Measurement(t=10, z_s=1e9, sigma_eps=1e-9)
        b = update(belief, z)
        assert float(np.sum(b.weights)) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_update_error(self, belief):
        # residuals so large the squared z-score overflows for every particle
        z = Measurement(t=10, z_s=1e200, sigma_eps=1e-9)
        with np.errstate(over="ignore"):
            with pytest.raises(DegenerateUpdateError) as err:
                update(belief, z)
        assert math.isinf(err.value.max_log_likelihood)

    def test_input_belief_unchanged(self, belief):
        h = belief.content_hash()
        update(belief, Measurement(t=10, z_s=0.4, sigma_eps=0.05))
        assert belief.content_hash() == h

    def test_determinism_bitwise(self, scenario, ctx):
        def run():
            b = init_belief(scenario.priors, 80, 5, ctx, ActionSchedule(h0=1.0))
            for t in range(1, 12):
                b = update(b, Measurement(t=t, z_s=0.02 * t, sigma_eps=0.05))
            return b.content_hash()

        assert run() == run()

    def test_vanishing_information_limit(self, scenario, ctx):
        # sigma_eps = 1e3 m: posterior quantiles equal prior quantiles up to
        # resampling noise (KS < 0.05 at n = 1e4)
        prior = init_belief(scenario.priors, 10_000, 21, ctx, ActionSchedule(h0=1.0))
        post = prior
        for t in range(1, 6):
            post = update(post, Measurement(t=t, z_s=0.5, sigma_eps=1e3))
        a = np.sort(prior.s_cache[:, scenario.requirements.t_max])
        b = np.sort(post.s_cache[:, scenario.requirements.t_max])
        grid = np.linspace(min(a[0], b[0]), max(a[-1], b[-1]), 512)
        ks = np.max(
            np.abs(
                np.searchsorted(a, grid, side="right") / a.size
                - np.searchsorted(b, grid, side="right") / b.size
            )
        )
        assert ks < 0.05


class TestApplyAction:
    def test_zero_increment_is_noop(self, belief):
        assert apply_action(belief, 10, 0.0) is belief

    def test_positive_increment_monotone_per_particle(self, belief):
        b = apply_action(belief, 10, 0.5)
        t_max = belief.ctx.t_max
        assert np.all(b.s_cache[:, t_max] >= belief.s_cache[:, t_max] - 1e-12)
        assert b.schedule.has_increment

    def test_second_increment_rejected(self, belief):
        b = apply_action(belief, 10, 0.5)
        with pytest.raises(UnsupportedActionError):
            apply_action(b, 20, 0.3)

    def test_timeline_reflects_step(self, belief):
        b = apply_action(belief, 10, 0.5)
        # every particle's settlement beyond the increment week grows faster
        before = np.diff(belief.s_cache[:, 10:], axis=1).sum(axis=1)
        after = np.diff(b.s_cache[:, 10:], axis=1).sum(axis=1)
        assert np.all(after >= before - 1e-12)


class TestPosteriorStats:
    def test_single_repeated_particle(self, ctx, scenario, belief):
        from dataclasses import replace

        n = belief.n_s
        b = replace(
            belief,
            pack=np.repeat(belief.pack[:1], n, axis=0),
            s_cache=np.repeat(belief.s_cache[:1], n, axis=0),
            ocr_cache=np.repeat(belief.ocr_cache[:1], n, axis=0),
            s_inf=np.repeat(belief.s_inf[:1], n),
        )
        stats = posterior_stats(b, "S_at", scenario.requirements.t_max)
        assert stats["std"] == pytest.approx(0.0, abs=1e-12)
        qs = list(stats["quantiles"].values())
        assert max(qs) - min(qs) == 0.0

    def test_two_point_population_convention(self, belief):
        from dataclasses import replace

        two = replace(
            belief,
            pack=belief.pack[:2],
            weights=np.array([0.5, 0.5]),
            s_cache=np.array([[1.0], [2.0]]),
            ocr_cache=belief.ocr_cache[:2, :1],
            s_inf=belief.s_inf[:2],
        )
        stats = posterior_stats(two, "S_at", 0)
        assert stats["mean"] == pytest.approx(1.5)
        assert stats["std"] == pytest.approx(0.5)
        assert stats["cov"] == pytest.approx(1.0 / 3.0)

    def test_median_matches_sort_oracle(self, rng):
        values = rng.standard_normal(10_000) + 5.0
        weights = np.full(10_000, 1e-4)
        got = weighted_quantile(values, weights, 0.5)
        oracle = np.sort(values)[math.ceil(0.5 * 10_000) - 1]
        assert got == oracle

    def test_quantiles_match_sort_oracle_generic(self, rng):
        values = rng.exponential(size=2_000)
        weights = np.full(2_000, 1.0 / 2_000)
        for p in (0.05, 0.25, 0.5, 0.9):
            oracle = np.sort(values)[math.ceil(p * 2_000) - 1]
            assert weighted_quantile(values, weights, p) == oracle

    def test_permutation_invariance(self, belief, rng, scenario):
        from dataclasses import replace

        perm = rng.permutation(belief.n_s)
        shuffled = replace(
            belief,
            pack=belief.pack[perm],
            weights=belief.weights[perm],
            s_cache=belief.s_cache[perm],
            ocr_cache=belief.ocr_cache[perm],
            s_inf=belief.s_inf[perm],
        )
        t_max = scenario.requirements.t_max
        a = posterior_stats(belief, "S_at", t_max)
        b = posterior_stats(shuffled, "S_at", t_max)
        assert a["mean"] == pytest.approx(b["mean"], rel=1e-12)
        assert a["std"] == pytest.approx(b["std"], rel=1e-9)
        assert a["quantiles"] == b["quantiles"]

    def test_cov_guard(self, belief):
        stats_zero_week = belief.s_cache[:, 0]
        assert np.all(stats_zero_week == 0.0)
        with pytest.raises(UndefinedCovError):
            posterior_stats(belief, "S_at", 0)

    def test_s_inf_and_ocr_functionals(self, belief, scenario):
        assert posterior_stats(belief, "S_inf")["mean"] > 0
        assert posterior_stats(belief, "OCR_at", scenario.requirements.t_max)["mean"] > 1.0
        with pytest.raises(ScenarioError):
            posterior_stats(belief, "garbage")


class TestProbBelowTarget:
    def test_all_exceed(self, belief):
        assert prob_below_target(belief, 1e-6) == 0.0

    def test_weighted_fraction(self, belief):
        from dataclasses import replace

        two = replace(
            belief,
            pack=belief.pack[:2],
            weights=np.array([0.3, 0.7]),
            s_cache=np.array([[0.5], [2.0]]),
            ocr_cache=belief.ocr_cache[:2, :1],
            s_inf=belief.s_inf[:2],
        )
        assert prob_below_target(two, 1.0, 0) == pytest.approx(0.3, abs=1e-15)

    def test_matches_counting_oracle(self, belief, scenario):
        t_max = scenario.requirements.t_max
        target = float(np.median(belief.s_cache[:, t_max]))
        got = prob_below_target(belief, target)
        oracle = float(
            np.sum(belief.weights * (belief.s_cache[:, t_max] < target))
        )
        assert got == pytest.approx(oracle, abs=1e-12)


class TestCentralInterval:
    def test_contains_nominal_mass(self, rng):
        values = rng.standard_normal(500)
        weights = np.full(500, 1.0 / 500)
        lo, hi = central_interval(values, weights, 0.95)
        mass = float(np.sum(weights[(values >= lo) & (values <= hi)]))
        assert mass >= 0.95

    def test_degenerate_atoms(self):
        values = np.array([2.0, 2.0, 2.0])
        weights = np.array([0.2, 0.5, 0.3])
        assert central_interval(values, weights) == (2.0, 2.0)


class TestEffectiveSampleSize:
    def test_uniform_is_n(self):
        assert effective_sample_size(np.full(50, 0.02)) == pytest.approx(50.0)

    def test_point_mass_is_one(self):
        w = np.zeros(50)
        w[3] = 1.0
        assert effective_sample_size(w) == pytest.approx(1.0)


class TestPropertyLikelihoodHook:
    def test_hook_reweights_particles(self, belief):
        # a property observation on the soft-modulus column shifts the
        # posterior exactly as the combined data factor dictates
        target = float(np.median(belief.pack[:, 5]))

        def property_ll(pack):
            d = (pack[:, 5] - target) / (0.05 * target)
            return -0.5 * d * d

        z = Measurement(t=10, z_s=float(np.mean(belief.s_cache[:, 10])), sigma_eps=1e3)
        plain = update(belief, z)
        hooked = update(belief, z, property_log_likelihood=property_ll)

        def weighted_std(b, col):
            m = float(np.sum(b.weights * b.pack[:, col]))
            return float(np.sqrt(np.sum(b.weights * (b.pack[:, col] - m) ** 2)))

        assert weighted_std(hooked, 5) < weighted_std(plain, 5)

    def test_hook_shape_checked(self, belief):
        z = Measurement(t=10, z_s=0.4, sigma_eps=0.05)
        with pytest.raises(ScenarioError):
            update(belief, z, property_log_likelihood=lambda pack: np.zeros(3))
