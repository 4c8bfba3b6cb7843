import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynrisk import (
    ConditionalValue,
    FiniteFilteredSpace,
    StoppingTime,
    cond_expect,
    dyadic_uniform,
    enumerate_events,
    enumerate_stopping_times,
    ess_inf_family,
    ess_sup_family,
    is_stopping_time,
)
from dynrisk.random_gen import random_space


class TestSpaceValidation:
    def test_probs_must_sum_to_one(self):
        with pytest.raises(ValueError):
            FiniteFilteredSpace([0.5, 0.4], [[[0, 1]], [[0], [1]]])

    def test_probs_must_be_positive(self):
        with pytest.raises(ValueError):
            FiniteFilteredSpace([1.0, 0.0], [[[0, 1]], [[0], [1]]])

    def test_f0_must_be_trivial(self):
        with pytest.raises(ValueError):
            FiniteFilteredSpace([0.5, 0.5], [[[0], [1]], [[0], [1]]])

    def test_partitions_must_refine(self):
        with pytest.raises(ValueError):
            FiniteFilteredSpace(
                [0.25] * 4,
                [[[0, 1, 2, 3]], [[0], [1], [2], [3]], [[0, 1], [2, 3]]],
            )

    def test_partition_must_cover(self):
        with pytest.raises(ValueError):
            FiniteFilteredSpace([0.5, 0.5], [[[0, 1]], [[0]]])

    def test_dyadic_shape(self):
        sp = dyadic_uniform(2)
        assert sp.n_outcomes == 4
        assert sp.horizon == 2
        assert sp.atoms(1) == ((0, 1), (2, 3))
        assert sp.n_atoms(2) == 4


class TestCondExpect:
    def test_constant(self, four_tree):
        v = cond_expect(four_tree, np.full(4, 7.5), 1)
        assert np.allclose(v.values, 7.5)

    def test_two_point_mean(self, two_uniform):
        v = cond_expect(two_uniform, [2.0, 4.0], 0)
        assert v.values.shape == (1,)
        assert v.values[0] == pytest.approx(3.0)

    def test_discrete_time_is_identity(self, two_uniform):
        v = cond_expect(two_uniform, [2.0, 4.0], 1)
        assert np.allclose(v.values, [2.0, 4.0])

    def test_weighted(self):
        sp = FiniteFilteredSpace([0.8, 0.2], [[[0, 1]], [[0], [1]]])
        v = cond_expect(sp, [1.0, 6.0], 0)
        assert v.values[0] == pytest.approx(2.0)

    @given(seed=st.integers(0, 200), data=st.data())
    @settings(max_examples=60, deadline=None)
    def test_tower_and_idempotence(self, seed, data):
        sp = random_space(np.random.default_rng(seed))
        y = np.random.default_rng(seed + 1).normal(size=sp.n_outcomes)
        s = data.draw(st.integers(0, sp.horizon))
        t = data.draw(st.integers(0, s))
        inner = cond_expect(sp, y, s)
        towered = cond_expect(sp, inner.lift(), t)
        direct = cond_expect(sp, y, t)
        assert np.abs(towered.values - direct.values).max() <= 1e-12
        again = cond_expect(sp, direct.lift(), t)
        assert np.array_equal(again.values, direct.values)

    def test_linear(self, four_tree):
        g = np.random.default_rng(3)
        y, z = g.normal(size=4), g.normal(size=4)
        lhs = cond_expect(four_tree, 2.0 * y - 0.5 * z, 1).values
        rhs = 2.0 * cond_expect(four_tree, y, 1).values - 0.5 * cond_expect(four_tree, z, 1).values
        assert np.abs(lhs - rhs).max() <= 1e-12


class TestConditionalValue:
    def test_rejects_plus_inf(self, two_uniform):
        with pytest.raises(ValueError):
            ConditionalValue(two_uniform, 1, [1.0, np.inf])

    def test_neg_inf_saturating_add(self, two_uniform):
        v = ConditionalValue(two_uniform, 1, [1.0, -np.inf])
        w = ConditionalValue(two_uniform, 1, [2.0, 3.0])
        assert np.array_equal((v + w).values, [3.0, -np.inf])

    def test_subtracting_neg_inf_errors(self, two_uniform):
        v = ConditionalValue(two_uniform, 1, [1.0, -np.inf])
        w = ConditionalValue(two_uniform, 1, [2.0, 3.0])
        with pytest.raises(ValueError):
            _ = w - v

    def test_from_outcomes_requires_measurability(self, four_tree):
        with pytest.raises(ValueError):
            ConditionalValue.from_outcomes(four_tree, 1, [1.0, 2.0, 3.0, 3.0])
        v = ConditionalValue.from_outcomes(four_tree, 1, [1.0, 1.0, 3.0, 3.0])
        assert np.array_equal(v.values, [1.0, 3.0])


class TestEssSup:
    def test_singleton(self, two_uniform):
        v = ConditionalValue(two_uniform, 1, [1.0, 3.0])
        assert ess_sup_family([v]).approx_eq(v)

    def test_pointwise_max(self, two_uniform):
        a = ConditionalValue(two_uniform, 1, [1.0, 3.0])
        b = ConditionalValue(two_uniform, 1, [2.0, 2.0])
        assert np.array_equal(ess_sup_family([a, b]).values, [2.0, 3.0])
        assert np.array_equal(ess_inf_family([a, b]).values, [1.0, 2.0])

    def test_neg_inf_dominated(self, two_uniform):
        a = ConditionalValue(two_uniform, 1, [-np.inf, 3.0])
        b = ConditionalValue(two_uniform, 1, [2.0, 2.0])
        assert np.array_equal(ess_sup_family([a, b]).values, [2.0, 3.0])

    def test_merge_order_irrelevant(self, two_uniform):
        g = np.random.default_rng(0)
        fam = [ConditionalValue(two_uniform, 1, g.normal(size=2)) for _ in range(5)]
        left = ess_sup_family(fam)
        right = ess_sup_family(fam[::-1])
        assert np.array_equal(left.values, right.values)

    def test_empty_family_rejected(self):
        with pytest.raises(ValueError):
            ess_sup_family([])


class TestStoppingTimes:
    def test_deterministic_valid(self, four_tree):
        ok, diag = is_stopping_time(four_tree, [1, 1, 1, 1])
        assert ok and diag is None

    def test_anticipating_invalid(self, four_tree):
        # {theta <= 0} = {0} is not a union of F_0 atoms
        ok, diag = is_stopping_time(four_tree, [0, 1, 1, 1])
        assert not ok
        assert diag[0] == 0

    def test_branch_dependent_valid(self, four_tree):
        ok, _ = is_stopping_time(four_tree, [1, 1, 2, 2])
        assert ok

    def test_constructor_rejects_invalid(self, four_tree):
        with pytest.raises(ValueError):
            StoppingTime(four_tree, [0, 1, 1, 1])

    def test_enumeration_contains_deterministic(self, four_tree):
        times = enumerate_stopping_times(four_tree)
        dets = [tuple(t.values) for t in times if len(set(t.values)) == 1]
        assert {(0, 0, 0, 0), (1, 1, 1, 1), (2, 2, 2, 2)} <= set(dets)
        for t in times:
            ok, _ = is_stopping_time(four_tree, t.values)
            assert ok

    def test_enumeration_count_binary_one_step(self, two_uniform):
        # theta ≡ 0 or theta ≡ 1: branch-dependent values at time 0 would anticipate
        assert len(enumerate_stopping_times(two_uniform)) == 2

    def test_events(self, four_tree):
        evs = enumerate_events(four_tree, 1)
        assert len(evs) == 4  # unions of the 2 atoms of F_1
        sizes = sorted(int(e.sum()) for e in evs)
        assert sizes == [0, 2, 2, 4]
