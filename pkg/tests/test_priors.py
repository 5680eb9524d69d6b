import numpy as np
import pytest

from refpanel.errors import InvalidPrior
from refpanel.priors import PriorKind, SignalPrior, prior_second_moment
from refpanel.quadrature import gauss_hermite


def test_bernoulli_gaussian_moments():
    prior = SignalPrior.bernoulli_gaussian(0.1, sigma_beta2=2.0)
    assert prior.kind is PriorKind.BERNOULLI_GAUSSIAN
    assert prior.second_moment == pytest.approx(0.2)
    assert prior.nonzero_probability == pytest.approx(0.1)
    assert prior_second_moment(prior) == prior.second_moment


@pytest.mark.parametrize("kappa", [0.0, -0.1, 1.5])
def test_bernoulli_gaussian_rejects_bad_kappa(kappa):
    with pytest.raises(InvalidPrior):
        SignalPrior.bernoulli_gaussian(kappa)


def test_discrete_weights_must_sum_to_one():
    with pytest.raises(InvalidPrior):
        SignalPrior.discrete([(1.0, 0.3), (-1.0, 0.3)])


def test_prior_needs_nonzero_mass():
    with pytest.raises(InvalidPrior):
        SignalPrior.discrete([(0.0, 1.0)])


def test_gaussian_mixture_second_moment():
    prior = SignalPrior.gaussian_mixture([(0.5, 1.0, 0.5), (0.5, -1.0, 0.5)])
    assert prior.second_moment == pytest.approx(1.5)


def test_sample_matches_moments():
    prior = SignalPrior.bernoulli_gaussian(0.3)
    draws = prior.sample(np.random.default_rng(3), 200_000)
    assert np.mean(draws != 0) == pytest.approx(0.3, abs=0.01)
    assert np.mean(draws**2) == pytest.approx(0.3, rel=0.03)


def test_quadrature_nodes_integrate_the_prior():
    prior = SignalPrior.gaussian_mixture([(0.25, 2.0, 1.0), (0.75, 0.0, 0.0)])
    nodes, weights = prior.quadrature_nodes(gauss_hermite())
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert weights @ nodes**2 == pytest.approx(prior.second_moment, rel=1e-12)
