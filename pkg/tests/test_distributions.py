import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from robust_reserve.distributions import (
    BiddingStrategy,
    Gaussian,
    Laplace,
    MarketProfile,
    TruncatedLognormal,
    Uniform,
    ZeroNoise,
    competitor_max_cdf,
    competitor_max_pdf,
    noise_from_epsilon,
    top_order_cdfs,
    value_distribution_from_dict,
)

# scipy.stats.lognorm(s=0.5) truncated to [0, 2.5]
LOGNORMAL_CDF_AT_1 = 0.5172944029189781  # 0.5 / Phi(ln 2.5 / 0.5)
LOGNORMAL_Q70 = 1.2574707325941985


def test_lognormal_anchors(lognormal):
    assert lognormal.cdf(1.0) == pytest.approx(LOGNORMAL_CDF_AT_1, rel=1e-12)
    assert lognormal.quantile(0.7) == pytest.approx(LOGNORMAL_Q70, rel=1e-10)
    assert lognormal.cdf(0.0) == 0.0 and lognormal.cdf(2.5) == 1.0
    assert lognormal.cdf(-1.0) == 0.0 and lognormal.cdf(9.0) == 1.0
    total, _ = integrate.quad(lognormal.pdf, 0.0, 2.5)
    assert total == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-9, 1 - 1e-9))
def test_quantile_inverts_cdf(q):
    for dist in (Uniform(0.2, 1.7), TruncatedLognormal(mu=0.0, sigma=0.5, lo=0.0, hi=2.5)):
        assert float(dist.cdf(dist.quantile(q))) == pytest.approx(q, abs=1e-9)


def test_quantile_rejects_out_of_range():
    with pytest.raises(ValueError):
        Uniform().quantile(1.2)


def test_bad_parameters_raise():
    with pytest.raises(ValueError):
        Uniform(1.0, 0.5)
    with pytest.raises(ValueError):
        TruncatedLognormal(mu=0.0, sigma=-1.0)
    with pytest.raises(ValueError):
        Laplace(0.0)


def test_samples_stay_in_support(lognormal, rng):
    x = lognormal.sample(rng, 100_000)
    assert x.min() >= 0.0 and x.max() <= 2.5
    # empirical CDF agrees with the analytic one
    assert np.mean(x <= 1.0) == pytest.approx(LOGNORMAL_CDF_AT_1, abs=0.005)


def test_dict_round_trip(lognormal):
    assert value_distribution_from_dict(lognormal.to_dict()) == lognormal
    assert value_distribution_from_dict(Uniform(0, 2).to_dict()) == Uniform(0, 2)


def test_laplace_pieces():
    lap = Laplace(2.0)
    assert lap.cdf(0.0) == 0.5
    assert lap.pdf(0.0) == pytest.approx(1.0)
    assert float(lap.quantile(lap.cdf(0.37))) == pytest.approx(0.37)
    # H(x) = integral of the CDF up to x
    for x in (-1.3, 0.0, 0.8):
        ref, _ = integrate.quad(lap.cdf, -40, x, points=[0.0] if x > 0 else None)
        assert float(lap.integrated_cdf(x)) == pytest.approx(ref, abs=1e-10)


def test_gaussian_integrated_cdf():
    g = Gaussian(1.5)
    ref, _ = integrate.quad(g.cdf, -40, 0.4)
    assert float(g.integrated_cdf(0.4)) == pytest.approx(ref, abs=1e-10)


def test_zero_noise_is_degenerate(rng):
    z = noise_from_epsilon(math.inf)
    assert isinstance(z, ZeroNoise) and z.is_degenerate
    state = rng.bit_generator.state
    np.testing.assert_array_equal(z.sample(rng, 4), np.zeros(4))
    assert rng.bit_generator.state == state
    assert float(z.integrated_cdf(-0.5)) == 0.0 and float(z.integrated_cdf(0.5)) == 0.5


def test_strategy_inverse():
    s = BiddingStrategy(0.5)
    assert s(0.8) == pytest.approx(0.4)
    assert s.inverse(0.4) == pytest.approx(0.8)
    assert s.kind == "linear_shading" and BiddingStrategy().kind == "identity"


def test_order_statistics_two_uniform(uniform2):
    d1, d2 = top_order_cdfs(uniform2)
    x = np.array([0.25, 0.5, 0.9])
    np.testing.assert_allclose(d1(x), x**2)
    np.testing.assert_allclose(d2(x), 2 * x - x**2)


def test_order_statistics_heterogeneous_by_simulation(rng):
    prof = MarketProfile((Uniform(0, 1), Uniform(0.5, 2.0), TruncatedLognormal(mu=0.0, sigma=0.5)))
    v = prof.sample_values(rng, 200_000)
    srt = np.sort(v, axis=1)
    d1, d2 = top_order_cdfs(prof)
    for x in (0.6, 1.0, 1.5):
        assert float(d1(x)) == pytest.approx(np.mean(srt[:, -1] <= x), abs=0.005)
        assert float(d2(x)) == pytest.approx(np.mean(srt[:, -2] <= x), abs=0.005)


def test_competitor_max(uniform1, uniform2):
    assert float(competitor_max_cdf(uniform1, 0)(0.3)) == 1.0
    assert float(competitor_max_cdf(uniform2, 0)(0.3)) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        competitor_max_pdf(uniform1, 0)


def test_profile_shading_and_index(uniform2):
    shaded = uniform2.shaded(1, 0.5)
    assert shaded.strategies[1].alpha == 0.5 and shaded.strategies[0].alpha == 1.0
    # bidder 1 bids at most 0.5, so it contributes 1 at p=0.5
    assert float(shaded.bid_cdf_sum(0.5)) == pytest.approx(1.5)
    with pytest.raises(IndexError):
        uniform2.shaded(2, 0.5)
