"""Tests for likelihood ratios on observed, fixed-response and full sigma-fields."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certify import random_model_spec, table_model
from gcmp import MASK, Observation, ParameterError, observe, observed_partition
from likelihood import (
    InvalidCompensatorIncrementError,
    InvalidTimesError,
    LRQuery,
    ObservationOffSupportError,
    SimultaneousJumpsError,
    all_observations,
    conditional_lr,
    full_lr,
    ignoring_lr,
    jacod_phi,
    lr,
    observation_atom,
    observed_lr,
    product,
    survival_counting_setup,
    survival_lr,
)
from pathspace import (
    cond_expect,
    disagreements,
    generate_partition,
    indicator,
    join,
    r_partition,
    rn_derivative,
    x_partition,
)
from scenarios import catalog, get_scenario, survival_hazard_spec

NUM, DEN = ("b", "q"), ("a", "p")
SEEDS = st.integers(min_value=0, max_value=2**32 - 1)
HORIZONS = st.integers(min_value=1, max_value=3)


def _make_random_model(seed: int, horizon: int):
    return table_model(random_model_spec(np.random.default_rng(seed), horizon))


def _path_index(model, x, r):
    return next(i for i, p in enumerate(model.space.paths) if p.x == x and p.r == r)


class TestObservedLikelihood:
    def test_atom_of_first_seen(self, m1_ignorable, first_seen):
        atom = observation_atom(m1_ignorable, first_seen)
        assert [m1_ignorable.space.paths[i].x for i in atom] == [(1, 0), (1, 1)]

    def test_ignorable_model(self, m1_ignorable, first_seen):
        psi0 = m1_ignorable.psi0
        value = observed_lr(m1_ignorable, first_seen, (0.3, psi0), (0.5, psi0))
        assert value.value == pytest.approx(0.6, abs=1e-12)
        assert len(value.atom) == 2

    def test_anticipating_model(self, m1_anticipating, first_seen):
        psi0 = m1_anticipating.psi0
        value = observed_lr(m1_anticipating, first_seen, (0.3, psi0), (0.5, psi0))
        assert float(value) == pytest.approx(0.76, abs=1e-12)

    def test_ignoring_likelihood(self, m1_anticipating, first_seen):
        value = ignoring_lr(m1_anticipating, first_seen, 0.3, 0.5)
        assert value.value == pytest.approx(0.6, abs=1e-12)

    def test_ignoring_matches_observed_when_ignorable(self, m1_ignorable):
        psi0 = m1_ignorable.psi0
        observed = observed_partition(m1_ignorable)
        for obs in all_observations(m1_ignorable):
            full = observed_lr(m1_ignorable, obs, (0.3, psi0), (0.5, psi0), observed)
            ignoring = ignoring_lr(m1_ignorable, obs, 0.3, 0.5)
            assert full.value == pytest.approx(ignoring.value, rel=1e-12)

    def test_fully_observed_path(self, m1_ignorable):
        obs = Observation((1, 1), (1, 1))
        assert ignoring_lr(m1_ignorable, obs, 0.3, 0.5).value == pytest.approx(0.36, abs=1e-12)

    def test_off_support(self, m1_ignorable):
        with pytest.raises(ObservationOffSupportError):
            observed_lr(m1_ignorable, Observation((0, 0), (MASK, MASK)), (0.3, m1_ignorable.psi0), (0.5, m1_ignorable.psi0))

    def test_observation_count(self, m1_ignorable):
        assert len(all_observations(m1_ignorable)) == 6


class TestRatios:
    def test_response_given_x(self, m1_ignorable):
        model = m1_ignorable
        psi0, psi1 = model.psi_grid[0], model.psi_grid[1]
        value = conditional_lr(model, r_partition(model.space), x_partition(model.space), (0.5, psi1), (0.5, psi0))
        assert value[_path_index(model, (1, 0), (1, 1))] == pytest.approx(1.4, abs=1e-12)

    def test_x_likelihood_is_free_of_psi(self, m1_ignorable):
        model = m1_ignorable
        psi0, psi1 = model.psi_grid
        sigma_x = x_partition(model.space)
        same = lr(LRQuery(model, (0.3, psi0), (0.5, psi0), sigma_x))
        mixed = lr(LRQuery(model, (0.3, psi1), (0.5, psi0), sigma_x))
        assert np.allclose(same.v, mixed.v, rtol=1e-12)
        assert same[_path_index(model, (1, 1), (1, 1))] == pytest.approx(0.36, abs=1e-12)

    def test_query_needs_tabulated_pairs(self, m1_ignorable):
        with pytest.raises(ParameterError):
            LRQuery(m1_ignorable, (0.4, m1_ignorable.psi0), (0.5, m1_ignorable.psi0), x_partition(m1_ignorable.space))

    def test_full_likelihood_factorizes(self, m1_ignorable):
        model = m1_ignorable
        psi0, psi1 = model.psi_grid
        full = full_lr(model, (0.3, psi1), (0.5, psi0))
        x_part = lr(LRQuery(model, (0.3, psi1), (0.5, psi0), x_partition(model.space)))
        r_given_x = conditional_lr(model, r_partition(model.space), x_partition(model.space), (0.3, psi1), (0.5, psi0))
        assert np.allclose(full.v, (x_part * r_given_x).v, rtol=1e-12)


class TestJacod:
    def test_single_mark(self):
        assert jacod_phi([0.3, 0.3], [0.5, 0.5], [0, 1]) == pytest.approx(0.84, abs=1e-12)

    def test_marked_jump(self):
        value = jacod_phi([[0.2, 0.3], [0.1, 0.1]], [[0.1, 0.4], [0.2, 0.2]], [[0, 1], [0, 0]])
        assert value == pytest.approx(0.75 * 0.8 / 0.6, abs=1e-12)

    def test_simultaneous_jumps(self):
        with pytest.raises(SimultaneousJumpsError):
            jacod_phi([[0.2, 0.3]], [[0.2, 0.3]], [[1, 1]])

    def test_boundary_increment_must_be_shared(self):
        with pytest.raises(InvalidCompensatorIncrementError):
            jacod_phi([1.0], [0.5], [1])

    def test_shared_certain_jump_is_neutral(self):
        assert jacod_phi([1.0, 0.3], [1.0, 0.5], [1, 0]) == pytest.approx(1.4)

    def test_increment_out_of_range(self):
        with pytest.raises(InvalidCompensatorIncrementError):
            jacod_phi([1.5], [0.5], [0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            jacod_phi([0.3, 0.3], [0.5], [0, 1])

    def test_counting_increments_are_binary(self):
        with pytest.raises(ValueError, match="0 or 1"):
            jacod_phi([0.3], [0.5], [2])


class TestSurvival:
    def test_censored(self):
        h = survival_hazard_spec(4)
        assert survival_lr(h, None, 2, 0.3, 0.5) == pytest.approx(1.96, abs=1e-12)

    def test_event(self):
        h = survival_hazard_spec(4)
        assert survival_lr(h, 1, 4, 0.3, 0.5) == pytest.approx(0.6, abs=1e-12)

    def test_matches_jacod(self):
        h = survival_hazard_spec(4)
        for event, censor in [(None, 0), (None, 4), (2, 2), (3, 4)]:
            lam, lam0, n = survival_counting_setup(h, event, censor, 0.3, 0.5)
            expected = survival_lr(h, event, censor, 0.3, 0.5)
            assert jacod_phi(lam, lam0, n) == pytest.approx(expected, rel=1e-12)

    def test_censoring_off_grid(self):
        with pytest.raises(InvalidTimesError):
            survival_lr(survival_hazard_spec(4), None, 5, 0.3, 0.5)

    def test_event_after_censoring(self):
        with pytest.raises(InvalidTimesError):
            survival_lr(survival_hazard_spec(4), 3, 2, 0.3, 0.5)

    def test_hazard_must_be_interior(self):
        with pytest.raises(InvalidCompensatorIncrementError):
            survival_hazard_spec(2).at(1.0, 1)


class TestProduct:
    def test_short_products_are_exact(self):
        assert product([0.5, 0.5, 4.0]) == 1.0

    def test_long_products_use_logs(self):
        factors = [0.5] * 40
        assert product(factors) == pytest.approx(0.5 ** 40, rel=1e-12)
        assert math.isfinite(product([1e-20] * 40))


class TestFullyObservedPaths:
    @pytest.mark.parametrize("name", [s.name for s in catalog()])
    def test_observed_ratio_is_the_x_ratio(self, name):
        model = get_scenario(name).build()
        full = 2 ** model.r_dim - 1
        fully_seen = [i for i, p in enumerate(model.space.paths) if all(r_t == full for r_t in p.r)]
        if not fully_seen:
            pytest.skip(f"{name} never observes a whole path")
        psi0 = model.psi0
        observed = observed_partition(model)
        for theta in model.theta_grid:
            x_ratio = rn_derivative(model.measure(theta, psi0), model.reference_measure, x_partition(model.space))
            for i in fully_seen:
                obs = observe(model.space.paths[i], model.r_dim)
                value = observed_lr(model, obs, (theta, psi0), model.reference, observed)
                assert value.value == pytest.approx(x_ratio[i], rel=1e-12)


class TestRandomModels:
    @settings(max_examples=100, deadline=None)
    @given(seed=SEEDS, horizon=HORIZONS)
    def test_coarse_ratios_are_conditional_expectations_of_the_full_ratio(self, seed, horizon):
        model = _make_random_model(seed, horizon)
        mu_num, mu_den = model.measure(*NUM), model.measure(*DEN)
        full = full_lr(model, NUM, DEN)
        for field in (x_partition(model.space), observed_partition(model)):
            coarse = rn_derivative(mu_num, mu_den, field)
            assert disagreements(coarse, cond_expect(full, field, mu_den), 1e-12).size == 0

    @settings(max_examples=50, deadline=None)
    @given(seed=SEEDS, horizon=HORIZONS)
    def test_conditional_ratio_has_unit_mean(self, seed, horizon):
        model = _make_random_model(seed, horizon)
        sigma_x = x_partition(model.space)
        value = conditional_lr(model, r_partition(model.space), sigma_x, NUM, DEN)
        assert np.allclose(cond_expect(value, sigma_x, model.measure(*DEN)).v, 1.0, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(seed=SEEDS, horizon=HORIZONS)
    def test_conditional_ratio_reweights_conditional_probabilities(self, seed, horizon):
        model = _make_random_model(seed, horizon)
        space = model.space
        sigma_x = x_partition(space)
        value = conditional_lr(model, r_partition(space), sigma_x, NUM, DEN)
        last_seen = indicator(space, lambda p: p.r[-1] == 1)
        lhs = cond_expect(last_seen * value, sigma_x, model.measure(*DEN))
        rhs = cond_expect(last_seen, sigma_x, model.measure(*NUM))
        assert disagreements(lhs, rhs, 1e-12).size == 0

    @settings(max_examples=50, deadline=None)
    @given(seed=SEEDS, horizon=HORIZONS)
    def test_nested_fields(self, seed, horizon):
        model = _make_random_model(seed, horizon)
        space = model.space
        observed, sigma_r = observed_partition(model), r_partition(space)
        assert np.allclose(conditional_lr(model, sigma_r, observed, NUM, DEN).v, 1.0, rtol=1e-12)
        value = conditional_lr(model, observed, sigma_r, NUM, DEN)
        ratio = lr(LRQuery(model, NUM, DEN, observed)) / lr(LRQuery(model, NUM, DEN, sigma_r))
        assert disagreements(value, ratio, 1e-12).size == 0

    @settings(max_examples=50, deadline=None)
    @given(seed=SEEDS, horizon=HORIZONS)
    def test_chain_rule(self, seed, horizon):
        model = _make_random_model(seed, horizon)
        space = model.space
        labels = dict(zip(space.paths, np.random.default_rng(seed).integers(0, 3, space.size).tolist()))
        first = generate_partition(space, lambda p: p.x[0], "X_1")
        second = generate_partition(space, lambda p: labels[p], "random")
        third = r_partition(space)
        whole = lr(LRQuery(model, NUM, DEN, join(join(first, second), third)))
        chained = (
            lr(LRQuery(model, NUM, DEN, first))
            * conditional_lr(model, second, first, NUM, DEN)
            * conditional_lr(model, third, join(first, second), NUM, DEN)
        )
        assert disagreements(whole, chained, 1e-12).size == 0

    @settings(max_examples=50, deadline=None)
    @given(seed=SEEDS, horizon=HORIZONS)
    def test_fields_with_the_same_join_give_the_same_ratio(self, seed, horizon):
        model = _make_random_model(seed, horizon)
        space = model.space
        sigma_x = x_partition(space)
        flipped = generate_partition(space, lambda p: tuple(r_t ^ x_t for r_t, x_t in zip(p.r, p.x)), "R xor X")
        assert join(flipped, sigma_x) == join(r_partition(space), sigma_x)
        a = conditional_lr(model, r_partition(space), sigma_x, NUM, DEN)
        b = conditional_lr(model, flipped, sigma_x, NUM, DEN)
        assert disagreements(a, b, 1e-12).size == 0
