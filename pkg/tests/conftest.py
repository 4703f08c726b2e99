import os
import sys

import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run the slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale reproductions (minutes)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow") or "slow" in (config.getoption("-m") or ""):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def std_normal_1d():
    from src.core.target_models import GaussianMixture, GaussianMixtureSpec
    return GaussianMixture(GaussianMixtureSpec(means=[[0.0]], variances=[1.0], weights=[1.0]))


@pytest.fixture
def example_mixture():
    from src.core.target_models import GaussianMixture, example_mixture_spec
    return GaussianMixture(example_mixture_spec(mu=3.0, sigma=1.0, w=0.5, dim=2))
