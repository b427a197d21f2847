"""Tests for the scenario catalog and the scenario-level checks."""

import numpy as np
import pytest

from certify import (
    Verdict,
    check_car_dyn,
    check_car_gcmp,
    check_car_rel,
    check_dependence_class,
    check_fixed_visit_mar,
    check_ignorable,
    check_independent_censoring,
    check_predictable,
    theorem_battery,
)
from gcmp import fixed_r_partition
from likelihood import conditional_lr
from pathspace import r_partition, x_partition
from scenarios import (
    DETECTION_LIMIT,
    UnknownScenarioError,
    catalog,
    certify_all,
    check_covariate_sufficiency,
    detection_clamp,
    expected_log_lr,
    freeze,
    get_scenario,
    ignoring_log_lr,
    interim_predictions,
    verify_scenario,
    vertical_preservation,
)

NAMES = [s.name for s in catalog()]


@pytest.fixture(scope="module")
def built():
    """Every catalog scenario built once with its defaults."""
    return {s.name: s.build() for s in catalog()}


class TestCatalog:
    def test_names_are_unique(self):
        assert len(NAMES) == len(set(NAMES))
        assert {"m1_ignorable", "m1_anticipating", "right_censor_independent", "detection_limit"} <= set(NAMES)

    def test_unknown_scenario(self):
        with pytest.raises(UnknownScenarioError):
            get_scenario("no_such_scheme")

    def test_params_are_frozen(self):
        params = get_scenario("m1_ignorable").params({"psi_grid": [[0.5, 0.5], [0.6, 0.6]]})
        assert params["psi_grid"] == ((0.5, 0.5), (0.6, 0.6))
        assert freeze([1, [2, 3]]) == (1, (2, 3))

    def test_truth_defaults_to_reference_psi(self, m1_ignorable):
        assert get_scenario("m1_ignorable").truth(m1_ignorable) == (0.3, (0.5, 0.5))

    def test_builds_are_deterministic(self):
        scenario = get_scenario("marker_visit_schedule")
        a, b = scenario.build(), scenario.build()
        assert a.space.paths == b.space.paths
        for pair in a.param_pairs():
            assert np.array_equal(a.measure(*pair).p, b.measure(*pair).p)


class TestDeclaredVerdicts:
    @pytest.mark.parametrize("name", NAMES)
    def test_verdicts_match_declarations(self, name, built):
        assert get_scenario(name).expected_certificates
        assert verify_scenario(get_scenario(name), built[name]) == {}

    @pytest.mark.parametrize("name", NAMES)
    def test_gcmp_agrees_with_rel(self, name, built):
        model = built[name]
        assert check_car_gcmp(model).verdict is check_car_rel(model).verdict

    @pytest.mark.parametrize("name", NAMES)
    def test_declared_dependence_class_is_honoured(self, name, built):
        cert = check_dependence_class(built[name])
        assert cert.holds, cert.detail

    @pytest.mark.parametrize("name", NAMES)
    def test_battery_passes(self, name, built):
        report = theorem_battery(built[name])
        assert report.ok, [a.name + a.scope for a in report.violations]


class TestSchemes:
    @pytest.mark.parametrize("name", ["right_censor_independent", "right_censor_informative"])
    def test_dyn_matches_independent_censoring(self, name, built):
        model = built[name]
        assert check_car_dyn(model).verdict is check_independent_censoring(model).verdict

    @pytest.mark.parametrize("name", ["interval_censor_fixed_visits", "interval_censor_informative"])
    def test_fixed_visit_mar_matches_dyn(self, name, built):
        model = built[name]
        assert check_fixed_visit_mar(model).verdict is check_car_dyn(model).verdict

    def test_adaptive_stopping_is_predictable_and_ignorable(self, built):
        model = built["adaptive_stopping_threshold"]
        assert check_predictable(model).holds
        assert np.allclose(model.q_prob(model.psi0), 1.0)
        for r in model.r_paths():
            assert check_ignorable(model, r).holds

    def test_adaptive_follow_up_compares_two_rates(self, built):
        model = built["adaptive_stopping_follow_up"]
        assert len(model.psi_grid) == 2
        assert check_car_gcmp(model).holds
        assert not check_predictable(model).holds
        psi0, psi1 = model.psi_grid
        theta = model.theta0
        ratio = conditional_lr(model, r_partition(model.space), x_partition(model.space), (theta, psi1), (theta, psi0))
        assert not np.allclose(ratio.v, 1.0)
        for r in model.r_paths():
            assert check_ignorable(model, r).holds

    def test_interim_predictions(self):
        assert interim_predictions((1, 0), (1.0, 1.5)) == pytest.approx((3 / 7, 9 / 14))
        assert interim_predictions((0, 0), (1.0, 1.5)) == pytest.approx((1 / 7, 3 / 14))

    def test_type2_response_is_deterministic(self, built):
        model = built["type2"]
        assert np.allclose(model.q_prob(model.psi0), 1.0)

    def test_type2_with_more_events(self):
        model = get_scenario("type2").build({"d": 2})
        assert check_car_dyn(model).holds
        assert check_predictable(model).holds

    def test_type2_withdrawal_compares_two_rates(self, built):
        model = built["type2_withdrawal"]
        assert model.psi_grid == (0.1, 0.25)
        assert check_car_dyn(model).holds
        assert check_car_gcmp(model).holds
        assert not check_predictable(model).holds
        psi0, psi1 = model.psi_grid
        theta = model.theta0
        ratio = conditional_lr(model, r_partition(model.space), x_partition(model.space), (theta, psi1), (theta, psi0))
        assert not np.allclose(ratio.v, 1.0)

    def test_randomized_type2_is_not_predictable(self, built):
        model = built["randomized_type2"]
        assert check_car_dyn(model).holds
        assert check_car_gcmp(model).holds
        assert not check_predictable(model).holds

    def test_detection_limit_preserves_ignorability(self, built):
        model = built["detection_limit"]
        assert vertical_preservation(model, DETECTION_LIMIT) == []
        assert detection_clamp("low") == detection_clamp("mid") == "<=mid"
        assert detection_clamp("high") == "high"

    def test_latent_dropout_witness(self, built):
        certs = certify_all(built["joint_model_dropout_latent"])
        cert = certs["ignorable"]
        assert cert.verdict is Verdict.FAILS
        assert cert.scope.startswith("[")
        low, high = cert.witness.values
        assert low != pytest.approx(high)

    def test_certify_all_with_vertical(self, built):
        certs = certify_all(built["detection_limit"], DETECTION_LIMIT)
        assert certs["ignorable[detection-limit]"].holds
        assert "independent censoring" not in certs

    def test_covariate_sufficiency(self, built):
        model = built["right_censor_covariate"]
        cert = check_covariate_sufficiency(model)
        assert cert.holds
        assert cert.detail["full_argmax"] == repr(model.theta0)


class TestExpectedLikelihood:
    def test_maximized_at_truth_when_ignorable(self, m1_ignorable):
        model = m1_ignorable
        values = expected_log_lr(
            model, (0.3, model.psi0),
            lambda th: ignoring_log_lr(model, th, lambda r: fixed_r_partition(model, r)),
        )
        assert values.idxmax() == 0.3
        assert values[0.5] == pytest.approx(0.0)

    def test_tuple_thetas_stay_flat(self, built):
        model = built["right_censor_covariate"]
        values = expected_log_lr(model, model.reference, lambda th: np.zeros(model.space.size))
        assert list(values.index) == list(model.theta_grid)
