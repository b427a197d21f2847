"""Shared fixtures: the canonical two-step models and the discrete survival models."""

import pytest

from gcmp import MASK, Observation
from scenarios import get_scenario


@pytest.fixture(scope="session")
def m1_ignorable():
    """Two steps, Bernoulli X, R_2 driven by the observed X_1."""
    return get_scenario("m1_ignorable").build()


@pytest.fixture(scope="session")
def m1_anticipating():
    """Two steps, Bernoulli X, R_2 driven by the unobserved X_2."""
    return get_scenario("m1_anticipating").build()


@pytest.fixture(scope="session")
def m2_independent():
    """Right-censored survival, hazard 0.3 vs 0.5, censoring uniform on 1..4."""
    return get_scenario("right_censor_independent").build()


@pytest.fixture(scope="session")
def m2_informative():
    return get_scenario("right_censor_informative").build()


@pytest.fixture
def first_seen():
    """Observation r=(1,0), x_obs=(1, MASK)."""
    return Observation((1, 0), (1, MASK))
