import math

import numpy as np
import pytest

from refpanel.errors import OutOfRange
from refpanel.priors import SignalPrior
from refpanel.quadrature import expect_2d, gauss_hermite, normal_cdf, normal_pdf


def test_gauss_hermite_gaussian_moments():
    quad = gauss_hermite(40)
    assert quad.expect(lambda z: np.ones_like(z)) == pytest.approx(1.0, abs=1e-13)
    assert quad.expect(lambda z: z**2) == pytest.approx(1.0, abs=1e-12)
    assert quad.expect(lambda z: z**4) == pytest.approx(3.0, abs=1e-11)
    assert quad.expect(lambda z: z**3) == pytest.approx(0.0, abs=1e-12)


def test_gauss_hermite_rejects_nonpositive_order():
    with pytest.raises(OutOfRange):
        gauss_hermite(0)


def test_expect_2d_prior_second_moment():
    prior = SignalPrior.bernoulli_gaussian(0.2, sigma_beta2=3.0)
    value = expect_2d(prior, gauss_hermite(), lambda z, b: b**2 + 0.0 * z)
    assert value == pytest.approx(0.6, rel=1e-12)


def test_expect_2d_kinks_handle_absolute_value():
    prior = SignalPrior.discrete([(0.0, 0.5), (1.0, 0.5)])
    quad = gauss_hermite()

    def kinks(beta):
        return -beta[:, None]

    value = expect_2d(prior, quad, lambda z, b: np.abs(z + b), kinks=kinks)
    # E|z| = sqrt(2/pi); E|z + 1| = 2 phi(1) + (2 Phi(1) - 1)
    expected = 0.5 * math.sqrt(2.0 / math.pi) + 0.5 * (2.0 * normal_pdf(1.0) + 2.0 * normal_cdf(1.0) - 1.0)
    assert value == pytest.approx(expected, abs=1e-10)
