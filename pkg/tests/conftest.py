import numpy as np
import pytest

from refpanel.covariance import CovarianceModel
from refpanel.lab import generate
from refpanel.priors import SignalPrior
from refpanel.spec import ProblemSpec


@pytest.fixture
def anyio_backend():
    return "asyncio"


@pytest.fixture
def bg_prior():
    return SignalPrior.bernoulli_gaussian(0.05)


@pytest.fixture
def iid_spec(bg_prior):
    return ProblemSpec(gamma_x=0.5, gamma_w=0.5, gamma_s=0.5, h2_x=0.6, h2_s=0.6, prior=bg_prior)


@pytest.fixture
def wide_spec(bg_prior):
    """p > n_w: the panel alone cannot identify beta and alpha_min is positive."""
    return ProblemSpec(gamma_x=0.5, gamma_w=2.0, gamma_s=0.5, h2_x=0.6, h2_s=0.6, prior=bg_prior)


@pytest.fixture
def flat_spectrum_spec(iid_spec):
    """Sigma = I written as a spectrum, which routes through the general-covariance solvers."""
    return iid_spec.replace(covariance=CovarianceModel.spectrum(np.ones(8)))


@pytest.fixture
def small_dataset(iid_spec):
    return generate(iid_spec, p=200, seed=7)
