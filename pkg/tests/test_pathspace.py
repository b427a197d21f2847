"""Tests for path spaces, partitions, conditional expectations and RN derivatives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from config import MAX_HORIZON
from pathspace import (
    CapExceededError,
    HorizonError,
    IncompatibleSpacesError,
    Measure,
    Path,
    PathFunction,
    PathSpace,
    TimeGrid,
    check_cap,
    cond_expect,
    disagreements,
    full_partition,
    generate_partition,
    is_measurable,
    join,
    r_partition,
    refines,
    rn_derivative,
    trivial_partition,
    x_partition,
)


def _make_space(horizon: int = 2) -> PathSpace:
    return PathSpace.exhaustive(TimeGrid(horizon), (0, 1))


def _make_measure(space: PathSpace, seed: int = 0) -> Measure:
    weights = np.random.default_rng(seed).uniform(0.1, 1.0, space.size)
    return Measure(space, weights / weights.sum())


class TestTimeGrid:
    def test_times_run_from_one(self):
        assert list(TimeGrid(3).times) == [1, 2, 3]

    def test_zero_horizon_rejected(self):
        with pytest.raises(HorizonError):
            TimeGrid(0)

    def test_horizon_above_maximum_rejected(self):
        with pytest.raises(HorizonError):
            TimeGrid(MAX_HORIZON + 1)


class TestPathSpace:
    def test_exhaustive_enumeration_size(self):
        space = _make_space(2)
        assert space.size == 16
        assert space.n_total == 16
        assert list(space.full_index) == list(range(16))

    def test_exhaustive_order_is_lexicographic(self):
        space = _make_space(1)
        assert space.paths == (Path((0,), (0,)), Path((0,), (1,)), Path((1,), (0,)), Path((1,), (1,)))

    def test_cap_refuses_large_spaces(self):
        with pytest.raises(CapExceededError):
            check_cap(2, 1, 2, cap=15)
        check_cap(2, 1, 2, cap=16)

    def test_from_paths_sorts_into_enumeration_order(self):
        paths = [Path((1, 1), (1, 1)), Path((0, 0), (1, 0))]
        space = PathSpace.from_paths(TimeGrid(2), (0, 1), 1, paths)
        assert space.paths[0] == Path((0, 0), (1, 0))
        full = _make_space(2)
        for i, path in enumerate(space.paths):
            assert full.paths[int(space.full_index[i])] == path

    def test_from_paths_rejects_unknown_symbol(self):
        with pytest.raises(ValueError, match="alphabet"):
            PathSpace.from_paths(TimeGrid(1), (0, 1), 1, [Path((2,), (1,))])

    def test_from_paths_rejects_code_out_of_range(self):
        with pytest.raises(ValueError, match="response code"):
            PathSpace.from_paths(TimeGrid(1), (0, 1), 1, [Path((1,), (2,))])

    def test_restrict_keeps_full_index(self):
        space = _make_space(2)
        sub = space.restrict([5, 3])
        assert list(sub.full_index) == [3, 5]


class TestPartitions:
    def test_x_partition_groups_paths_sharing_x(self):
        space = _make_space(1)
        part = x_partition(space)
        assert part.n_atoms == 2
        assert [list(a) for a in part.atoms] == [[0, 1], [2, 3]]

    def test_labels_are_canonical(self):
        space = _make_space(1)
        a = generate_partition(space, lambda p: p.x)
        b = generate_partition(space, lambda p: -p.x[0])
        assert a == b

    def test_join_of_x_and_r_is_full(self, m1_ignorable):
        space = m1_ignorable.space
        assert join(x_partition(space), r_partition(space)) == full_partition(space)

    def test_refines(self):
        space = _make_space(2)
        fine = x_partition(space)
        coarse = generate_partition(space, lambda p: p.x[0])
        assert refines(fine, coarse)
        assert not refines(coarse, fine)
        assert refines(fine, trivial_partition(space))

    def test_partitions_of_different_spaces_are_incompatible(self):
        a, b = _make_space(1), _make_space(1)
        with pytest.raises(IncompatibleSpacesError):
            join(x_partition(a), x_partition(b))


class TestMeasure:
    def test_must_sum_to_one(self):
        space = _make_space(1)
        with pytest.raises(ValueError, match="sums to"):
            Measure(space, np.full(4, 0.3))

    def test_must_be_positive(self):
        space = _make_space(1)
        with pytest.raises(ValueError, match="positive"):
            Measure(space, np.array([0.5, 0.5, 0.0, 0.0]))

    def test_probabilities_are_read_only(self):
        space = _make_space(1)
        mu = Measure(space, np.full(4, 0.25))
        with pytest.raises(ValueError):
            mu.p[0] = 1.0


class TestConditionalExpectation:
    def test_tower_property(self):
        space = _make_space(3)
        mu = _make_measure(space, seed=1)
        f = PathFunction(space, np.random.default_rng(2).normal(size=space.size))
        fine = x_partition(space)
        coarse = generate_partition(space, lambda p: p.x[0])
        twice = cond_expect(cond_expect(f, fine, mu), coarse, mu)
        once = cond_expect(f, coarse, mu)
        assert disagreements(twice, once, 1e-12).size == 0

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32 - 1), n_fine=st.integers(min_value=1, max_value=16))
    def test_tower_property_on_nested_partitions(self, seed, n_fine):
        space = _make_space(2)
        rng = np.random.default_rng(seed)
        fine_of = dict(zip(space.paths, rng.integers(0, n_fine, space.size).tolist()))
        merge = rng.integers(0, max(1, n_fine // 2), n_fine)
        fine = generate_partition(space, lambda p: fine_of[p], "fine")
        coarse = generate_partition(space, lambda p: int(merge[fine_of[p]]), "coarse")
        assert refines(fine, coarse)
        mu = _make_measure(space, seed=int(rng.integers(0, 1000)))
        f = PathFunction(space, rng.normal(size=space.size))
        twice = cond_expect(cond_expect(f, fine, mu), coarse, mu)
        assert disagreements(twice, cond_expect(f, coarse, mu), 1e-12).size == 0

    def test_result_is_measurable(self):
        space = _make_space(2)
        mu = _make_measure(space)
        f = PathFunction(space, np.arange(space.size, dtype=float))
        g = generate_partition(space, lambda p: p.r)
        assert is_measurable(cond_expect(f, g, mu), g)
        assert not is_measurable(f, g)

    def test_trivial_partition_gives_the_mean(self):
        space = _make_space(1)
        mu = Measure(space, np.full(4, 0.25))
        f = PathFunction(space, np.array([1.0, 2.0, 3.0, 4.0]))
        assert cond_expect(f, trivial_partition(space), mu)[0] == pytest.approx(2.5)


class TestRnDerivative:
    def test_bernoulli_ratio_on_sigma_x(self, m1_ignorable):
        model = m1_ignorable
        value = rn_derivative(model.measure(0.3, model.psi0), model.measure(0.5, model.psi0), x_partition(model.space))
        path = next(i for i, p in enumerate(model.space.paths) if p.x == (1, 1))
        assert value[path] == pytest.approx(0.36, abs=1e-12)

    def test_measurable_by_construction(self):
        space = _make_space(2)
        g = generate_partition(space, lambda p: (p.x[0], p.r[1]))
        value = rn_derivative(_make_measure(space, 3), _make_measure(space, 4), g)
        assert is_measurable(value, g)

    def test_identical_measures_give_one(self):
        space = _make_space(2)
        mu = _make_measure(space)
        value = rn_derivative(mu, mu, x_partition(space))
        assert np.allclose(value.v, 1.0)

    def test_incompatible_spaces(self):
        a, b = _make_space(1), _make_space(1)
        with pytest.raises(IncompatibleSpacesError):
            rn_derivative(_make_measure(a), _make_measure(b), x_partition(a))


class TestDisagreements:
    def test_relative_tolerance(self):
        space = _make_space(1)
        f = PathFunction(space, np.array([1e6, 1.0, 2.0, 3.0]))
        g = PathFunction(space, np.array([1e6 + 1e-4, 1.0, 2.5, 3.0]))
        assert list(disagreements(f, g, 1e-9)) == [2]

    def test_restricted_to_where(self):
        space = _make_space(1)
        f = PathFunction.constant(space, 1.0)
        g = PathFunction(space, np.array([1.0, 2.0, 1.0, 1.0]))
        assert disagreements(f, g, 1e-12, np.array([0, 2])).size == 0
