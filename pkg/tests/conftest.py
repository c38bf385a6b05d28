import pytest

from routesignal.config import reference_config


@pytest.fixture(scope="session")
def ref():
    """The shipped reference experiment (3 routes, 5 states)."""
    return reference_config()


@pytest.fixture(scope="session")
def ref_game(ref):
    return ref.game


@pytest.fixture(scope="session")
def ref_policy(ref):
    return ref.policy


@pytest.fixture(scope="session")
def ref_phat(ref):
    return ref.defection_prior
