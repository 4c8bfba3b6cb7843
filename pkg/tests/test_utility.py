import numpy as np
import pytest

from dynrisk import (
    AdaptedProcess,
    ConditionalValue,
    DensityProcess,
    DualFiniteUtility,
    EntropicUtility,
    FiniteFilteredSpace,
    RobustEntropicUtility,
    StoppingTime,
    TerminalDensity,
    UtilityProcess,
    argmax_density,
    check_axioms,
    cond_expect,
    entropic_process,
    normalized_scenario_process,
    pairing,
    penalty,
    penalty_consistency_check,
    robust_entropic_process,
    time_consistency_check,
)
from dynrisk.random_gen import random_adapted, random_density

NEG_INF = float("-inf")


def zero_gamma(space, t):
    return ConditionalValue.constant(space, t, 0.0)


def coherent_two_scenario(space):
    g = np.random.default_rng(21)
    a1 = random_density(space, 0, space.horizon, g, strict=True)
    a2 = random_density(space, 0, space.horizon, g, strict=True)
    return DualFiniteUtility(
        space, 0, space.horizon, [(a1, zero_gamma(space, 0)), (a2, zero_gamma(space, 0))]
    )


class TestDualFiniteUtility:
    def test_min_over_scenarios(self, four_tree):
        u = coherent_two_scenario(four_tree)
        g = np.random.default_rng(22)
        X = random_adapted(four_tree, 0, 2, g)
        pair = np.stack([pairing(X, a, 0).values for a, _ in u.scenarios])
        assert u.evaluate(X).values[0] == pytest.approx(pair.min(axis=0)[0])

    def test_insurance_is_reflected_evaluate(self, four_tree):
        u = coherent_two_scenario(four_tree)
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(23))
        direct = u.insurance(X)
        reflected = -(u.evaluate(-X))
        assert direct.max_residual(reflected) <= 1e-12

    def test_positive_gamma_rejected(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.0, 1.0]])
        bad = ConditionalValue.constant(two_uniform, 0, 0.5)
        with pytest.raises(ValueError, match="positive"):
            DualFiniteUtility(two_uniform, 0, 1, [(a, bad)])

    def test_unnormalized_gamma_family_rejected(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.0, 1.0]])
        b = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.2, 0.8]])
        g1 = ConditionalValue.constant(two_uniform, 0, -0.5)
        g2 = ConditionalValue.constant(two_uniform, 0, -1.0)
        with pytest.raises(ValueError, match="normalized"):
            DualFiniteUtility(two_uniform, 0, 1, [(a, g1), (b, g2)])

    def test_non_density_scenario_rejected(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.0, 0.5]])
        with pytest.raises(ValueError, match="density"):
            DualFiniteUtility(two_uniform, 0, 1, [(a, zero_gamma(two_uniform, 0))])

    def test_coherent_flag_and_gamma_norm(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.0, 1.0]])
        b = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.2, 0.8]])
        u = DualFiniteUtility(two_uniform, 0, 1, [(a, zero_gamma(two_uniform, 0))])
        assert u.coherent and u.gamma_norm() == 0.0
        g2 = ConditionalValue.constant(two_uniform, 0, -0.7)
        v = DualFiniteUtility(two_uniform, 0, 1, [(a, zero_gamma(two_uniform, 0)), (b, g2)])
        assert not v.coherent
        assert v.gamma_norm() == pytest.approx(0.7)

    def test_neg_inf_gamma_drops_scenario(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.0, 1.0]])
        b = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.8, 0.2]])
        dead = ConditionalValue(two_uniform, 0, [NEG_INF])
        u = DualFiniteUtility(two_uniform, 0, 1, [(a, zero_gamma(two_uniform, 0)), (b, dead)])
        X = AdaptedProcess(two_uniform, 0, [[0.0, 0.0], [-3.0, 5.0]])
        only_a = pairing(X, a, 0).values[0]
        assert u.evaluate(X).values[0] == pytest.approx(only_a)


class TestEntropic:
    def test_two_point_value(self, two_uniform):
        u = EntropicUtility(two_uniform, 1.0, 0)
        X = AdaptedProcess(two_uniform, 0, [[0.0, 0.0], [0.0, -np.log(3.0)]])
        assert u.evaluate(X).values[0] == pytest.approx(-np.log(2.0))

    def test_small_alpha_approaches_mean(self, four_tree):
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(24))
        u = EntropicUtility(four_tree, 1e-6, 0)
        mean = cond_expect(four_tree, X.slice_at(2), 0).values
        assert np.abs(u.evaluate(X).values - mean).max() <= 1e-5

    def test_large_alpha_approaches_min(self, four_tree):
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(25))
        u = EntropicUtility(four_tree, 200.0, 0)
        worst = X.slice_at(2).min()
        val = u.evaluate(X).values[0]
        assert worst - 1e-9 <= val <= worst + np.log(4.0) / 200.0 + 1e-9

    def test_decreasing_in_alpha(self, four_tree):
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(26))
        vals = [EntropicUtility(four_tree, al, 0).evaluate(X).values[0] for al in (0.5, 1.0, 2.0, 4.0)]
        assert all(vals[i] >= vals[i + 1] - 1e-12 for i in range(3))

    def test_rejects_bad_alpha(self, four_tree):
        with pytest.raises(ValueError):
            EntropicUtility(four_tree, 0.0, 0)

    def test_robust_single_uniform_matches_plain(self, four_tree):
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(27))
        flat = TerminalDensity(four_tree, np.ones(4))
        r = RobustEntropicUtility(four_tree, 1.5, [flat], 0)
        p = EntropicUtility(four_tree, 1.5, 0)
        assert r.evaluate(X).max_residual(p.evaluate(X)) <= 1e-12

    def test_robust_is_min_over_family(self, four_tree):
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(28))
        f = TerminalDensity.normalized(four_tree, [1.6, 0.8, 0.8, 0.8])
        g = TerminalDensity.normalized(four_tree, [0.5, 1.5, 1.0, 1.0])
        fam = RobustEntropicUtility(four_tree, 1.0, [f, g], 1)
        singles = [RobustEntropicUtility(four_tree, 1.0, [d], 1).evaluate(X).values for d in (f, g)]
        assert np.abs(fam.evaluate(X).values - np.minimum(*singles)).max() <= 1e-12


class TestPenalty:
    def test_zero_at_generators(self, four_tree):
        u = coherent_two_scenario(four_tree)
        for a, _ in u.scenarios:
            vals = penalty(u, a).values
            assert np.abs(vals).max() <= 1e-7

    def test_single_scenario_offset(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.2, 0.8]])
        gam = ConditionalValue.constant(two_uniform, 0, -0.7)
        u = DualFiniteUtility(two_uniform, 0, 1, [(a, gam)], validate=False)
        assert penalty(u, a).values[0] == pytest.approx(-0.7, abs=1e-7)

    def test_unbounded_direction_is_minus_inf(self, two_uniform):
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [1.0, 1.0]])
        u = DualFiniteUtility(two_uniform, 0, 1, [(a, zero_gamma(two_uniform, 0))])
        b = DensityProcess(two_uniform, 0, [[0.0, 0.0], [2.0, 0.0]])
        assert penalty(u, b).values[0] == NEG_INF

    def test_solver_routes_agree(self, four_tree):
        u = coherent_two_scenario(four_tree)
        g = np.random.default_rng(29)
        b = random_density(four_tree, 0, 2, g, strict=True)
        hi = penalty(u, b, solver="highs").values
        lo = penalty(u, b, solver="vertices").values
        with np.errstate(invalid="ignore"):
            close = np.abs(hi - lo) <= 1e-7
        assert np.all((np.isneginf(hi) & np.isneginf(lo)) | close)

    def test_dominated_mixture_has_zero_penalty(self, four_tree):
        # a convex combination of generators is priced like a generator
        u = coherent_two_scenario(four_tree)
        (a1, _), (a2, _) = u.scenarios
        mix = DensityProcess(four_tree, 0, 0.25 * a1.values + 0.75 * a2.values)
        assert np.abs(penalty(u, mix).values).max() <= 1e-7

    def test_requires_dual_form(self, four_tree):
        u = EntropicUtility(four_tree, 1.0, 0)
        a = DensityProcess.uniform(four_tree, 0, 2)
        with pytest.raises(TypeError):
            penalty(u, a)


class TestArgmaxDensity:
    def test_reproduces_insurance_value(self, four_tree):
        u = coherent_two_scenario(four_tree)
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(30))
        a_star, value, attained = argmax_density(u, X)
        assert attained
        assert value.max_residual(u.insurance(X)) <= 1e-12
        recomputed = pairing(X, a_star, 0)
        assert recomputed.max_residual(value) <= 1e-9

    def test_glues_across_atoms(self, four_tree):
        # scenarios tuned so each time-1 atom prefers a different density
        up_heavy = DensityProcess(four_tree, 0, [[0, 0, 0, 0], [0.9, 0.9, 0.1, 0.1], [0.1, 0.1, 0.9, 0.9]])
        down_heavy = DensityProcess(four_tree, 0, [[0, 0, 0, 0], [0.1, 0.1, 0.9, 0.9], [0.9, 0.9, 0.1, 0.1]])
        u = DualFiniteUtility(
            four_tree, 1, 2, [(up_heavy, zero_gamma(four_tree, 1)), (down_heavy, zero_gamma(four_tree, 1))]
        )
        X = AdaptedProcess(four_tree, 1, [[5.0, 5.0, 5.0, 5.0], [0.0, 0.0, 0.0, 0.0]])
        a_star, value, attained = argmax_density(u, X)
        assert not attained  # the glue mixes the two generators
        assert np.array_equal(a_star.slice_at(1)[:2], up_heavy.slice_at(1)[:2])
        assert np.array_equal(a_star.slice_at(1)[2:], down_heavy.slice_at(1)[2:])
        assert np.allclose(value.values, 4.5)


class TestAxioms:
    def test_entropic_profile(self, four_tree):
        rep = check_axioms(EntropicUtility(four_tree, 1.0, 0), sample_count=10, seed=1)
        assert rep.passed("locality", "monotonicity", "cash_invariance", "concavity", "relevance")
        coh = rep.results["coherence"]
        assert coh.passed is False
        assert coh.counterexample is not None
        assert rep.results["continuity"].passed is None

    def test_coherent_profile(self, four_tree):
        rep = check_axioms(coherent_two_scenario(four_tree), sample_count=10, seed=2)
        assert rep.passed("locality", "monotonicity", "cash_invariance", "concavity", "coherence")

    def test_relevance_fails_for_blind_scenario(self, two_uniform):
        # a density ignoring the second outcome cannot price its losses
        a = DensityProcess(two_uniform, 0, [[0.0, 0.0], [2.0, 0.0]])
        u = DualFiniteUtility(two_uniform, 0, 1, [(a, zero_gamma(two_uniform, 0))])
        rep = check_axioms(u, sample_count=5, seed=3)
        res = rep.results["relevance"]
        assert res.passed is False
        assert "not priced" in res.counterexample


class TestUtilityProcess:
    def test_stage_window_validation(self, four_tree):
        good = EntropicUtility(four_tree, 1.0, 1)
        with pytest.raises(ValueError, match="window"):
            UtilityProcess({0: good})
        with pytest.raises(ValueError, match="contiguous"):
            UtilityProcess({0: EntropicUtility(four_tree, 1.0, 0), 2: EntropicUtility(four_tree, 1.0, 2)})

    def test_evaluate_at_branch_dependent_stopping(self, four_tree):
        up = entropic_process(four_tree, 1.0)
        X = random_adapted(four_tree, 0, 2, np.random.default_rng(31))
        theta = StoppingTime(four_tree, [1, 1, 2, 2])
        glued = up.evaluate_at_stopping(theta, X)
        assert np.allclose(glued[:2], up.stage(1).evaluate(X.restrict(1)).lift()[:2])
        assert np.allclose(glued[2:], X.slice_at(2)[2:])

    def test_entropic_process_consistent(self, four_tree):
        rep = time_consistency_check(entropic_process(four_tree, 1.0), sample_count=5, seed=0)
        assert rep.passed
        assert rep.stopping_times == "all"
        assert rep.max_residual <= 1e-9

    def test_scenario_process_consistent(self, four_tree):
        a = random_density(four_tree, 0, 2, np.random.default_rng(32), strict=True)
        rep = time_consistency_check(normalized_scenario_process(four_tree, a), sample_count=5, seed=0)
        assert rep.passed, rep.failures[:2]

    def test_mixed_alpha_fails(self, four_tree):
        mixed = UtilityProcess(
            {
                0: EntropicUtility(four_tree, 1.0, 0),
                1: EntropicUtility(four_tree, 3.0, 1),
                2: EntropicUtility(four_tree, 3.0, 2),
            }
        )
        rep = time_consistency_check(mixed, sample_count=5, seed=0)
        assert not rep.passed
        assert rep.max_residual > 1e-3
        assert rep.failures

    def test_robust_entropic_process_consistency_reported(self, four_tree):
        f = TerminalDensity.normalized(four_tree, [1.6, 0.8, 0.8, 0.8])
        g = TerminalDensity.normalized(four_tree, [0.5, 1.5, 1.0, 1.0])
        rep = time_consistency_check(robust_entropic_process(four_tree, 1.0, [f, g]), sample_count=5, seed=0)
        assert rep.checked > 0 and np.isfinite(rep.max_residual)


class TestPenaltyConsistency:
    def test_single_scenario_decomposition_tight(self, four_tree):
        a = random_density(four_tree, 0, 2, np.random.default_rng(3), strict=True)
        up = normalized_scenario_process(four_tree, a)
        for t, s in [(0, 1), (0, 2), (1, 2), (1, 1)]:
            rep = penalty_consistency_check(up, t, s)
            assert rep.max_abs_residual <= 1e-8, (t, s, rep.max_abs_residual)

    def test_rejects_non_dual_stages(self, four_tree):
        up = entropic_process(four_tree, 1.0)
        with pytest.raises(TypeError):
            penalty_consistency_check(up, 0, 1)
