import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from privaug import mechanisms as mech
from privaug.exceptions import InputError, ParameterError


def window_sum(mu, sigma, width=60):
    center = math.floor(mu)
    xs = np.arange(center - int(width * sigma) - 5, center + int(width * sigma) + 6)
    return math.fsum(mech.ddnorm(xs, mu, sigma))


def empirical_tv(draws, support, pmf):
    counts = np.array([np.count_nonzero(draws == x) for x in support]) / len(draws)
    outside = 1.0 - counts.sum()
    return 0.5 * (np.abs(counts - pmf).sum() + outside + max(0.0, 1.0 - pmf.sum()))


# ---------------------------------------------------------------------------
# Discrete Gaussian
# ---------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(0.05, 40))
def test_ddnorm_sums_to_one(mu, sigma):
    assert abs(window_sum(mu, sigma) - 1.0) < 1e-10


def test_ddnorm_standard_value():
    # sum_k exp(-k^2/2) by direct summation
    z = math.fsum(math.exp(-k * k / 2.0) for k in range(-40, 41))
    assert mech.ddnorm(0, 0.0, 1.0) == pytest.approx(1.0 / z, rel=1e-14)
    assert mech.ddnorm(2, 0.0, 1.0) == pytest.approx(math.exp(-2.0) / z, rel=1e-14)


def test_ddnorm_log_is_unnormalized_kernel():
    x = np.arange(-5, 6)
    np.testing.assert_allclose(mech.ddnorm(x, 0.3, 2.0, log=True), -((x - 0.3) ** 2) / 8.0)


def test_dgauss_logpmf_matches_log_of_pmf():
    x = np.arange(-20, 21)
    np.testing.assert_allclose(np.exp(mech.dgauss_logpmf(x, 1.7, 3.0)), mech.ddnorm(x, 1.7, 3.0), rtol=1e-13)


def test_dgauss_normalizer_periodic_in_mu():
    assert mech.dgauss_log_normalizer(0.25, 2.0) == pytest.approx(mech.dgauss_log_normalizer(7.25, 2.0), abs=1e-13)


def test_ddnorm_symmetric_about_integer_mu():
    x = np.arange(1, 10)
    np.testing.assert_allclose(mech.ddnorm(3 + x, 3.0, 1.5), mech.ddnorm(3 - x, 3.0, 1.5))


@pytest.mark.parametrize("bad", [dict(sigma=0.0), dict(sigma=-1.0), dict(sigma=math.inf), dict(mu=math.nan)])
def test_ddnorm_rejects_bad_parameters(bad):
    with pytest.raises(ParameterError):
        mech.ddnorm(0, **{"mu": 0.0, "sigma": 1.0, **bad})


def test_ddnorm_rejects_non_integer_x():
    with pytest.raises(ParameterError):
        mech.ddnorm(0.5)


@pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (0.4, 0.3), (-2.6, 6.32), (10.0, 15.0)])
def test_rdnorm_matches_pmf(mu, sigma):
    draws = mech.rdnorm(200_000, mu, sigma, np.random.default_rng(7))
    center = math.floor(mu + 0.5)
    half = math.ceil(8 * sigma) + 2
    support = np.arange(center - half, center + half + 1)
    assert empirical_tv(draws, support, mech.ddnorm(support, mu, sigma)) < 0.01


def test_rdnorm_deterministic_and_integer():
    a = mech.rdnorm(100, 0.5, 2.0, np.random.default_rng(3))
    b = mech.rdnorm(100, 0.5, 2.0, np.random.default_rng(3))
    assert a.dtype == np.int64
    np.testing.assert_array_equal(a, b)


def test_rdnorm_zero_count():
    assert mech.rdnorm(0, 0.0, 1.0, 1).shape == (0,)


def test_rdnorm_rejects_bad_count():
    with pytest.raises(ParameterError):
        mech.rdnorm(-1)
    with pytest.raises(ParameterError):
        mech.rdnorm(2.5)


# ---------------------------------------------------------------------------
# Discrete Laplace
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("t", [0.2, 0.5, 1.0, 2.0, 25.0])
def test_ddlaplace_normalized(t):
    half = math.ceil(t * 60) + 5
    xs = np.arange(-half, half + 1)
    assert math.fsum(mech.ddlaplace(xs, t)) == pytest.approx(1.0, abs=1e-12)


def test_ddlaplace_closed_form_at_zero():
    t = 1.5
    e = math.exp(1.0 / t)
    assert mech.ddlaplace(0, t) == pytest.approx((e - 1.0) / (e + 1.0), rel=1e-14)
    assert mech.ddlaplace(3, t, log=True) == pytest.approx(math.log((e - 1.0) / (e + 1.0)) - 3.0 / t, rel=1e-14)


@pytest.mark.parametrize("t", [0.5, 2.0, 7.0])
def test_rdlaplace_matches_pmf(t):
    draws = mech.rdlaplace(200_000, t, np.random.default_rng(11))
    half = math.ceil(t * math.log(1e12)) + 1
    support = np.arange(-half, half + 1)
    assert empirical_tv(draws, support, mech.ddlaplace(support, t)) < 0.01


def test_ddlaplace_rejects_bad_scale():
    with pytest.raises(ParameterError):
        mech.ddlaplace(0, 0.0)


# ---------------------------------------------------------------------------
# Continuous Laplace
# ---------------------------------------------------------------------------


def test_laplace_logdensity_integrates_to_one():
    u = np.linspace(-60, 60, 400_001)
    dens = np.exp(mech.laplace_logdensity(u, 0.5, 1.5))
    assert integrate.trapezoid(dens, u) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(0.1, 5), st.floats(0.05, 3))
def test_laplace_mechanism_privacy_ratio(output, epsilon, sensitivity):
    # Neighbouring statistics differ by at most the sensitivity.
    scale = sensitivity / epsilon
    s0 = 0.0
    for s1 in np.linspace(-sensitivity, sensitivity, 11):
        diff = mech.laplace_logdensity(output, s0, scale) - mech.laplace_logdensity(output, s1, scale)
        assert abs(diff) <= epsilon + 1e-12


def test_laplace_mechanism_noise_scale():
    rng = np.random.default_rng(0)
    out = mech.laplace_mechanism(np.zeros(200_000), 15.0, 10.0, rng)
    # mean absolute deviation of Laplace(b) is b
    assert np.mean(np.abs(out)) == pytest.approx(1.5, rel=0.01)


def test_laplace_mechanism_rejects_bad_epsilon():
    with pytest.raises(ParameterError):
        mech.laplace_mechanism([1.0], 1.0, 0.0)


# ---------------------------------------------------------------------------
# Randomized response
# ---------------------------------------------------------------------------


def test_randomized_response_flip_rate():
    bits = np.zeros((100_000, 2), dtype=int)
    out = mech.randomized_response(bits, 0.75, np.random.default_rng(5))
    assert out.mean() == pytest.approx(0.25, abs=0.005)


def test_randomized_response_keep_all():
    bits = np.array([[1, 0], [0, 1], [1, 1]])
    np.testing.assert_array_equal(mech.randomized_response(bits, 1.0, 0), bits)


def test_randomized_response_rejects_non_binary():
    with pytest.raises(InputError):
        mech.randomized_response([0, 2], 0.75)


def test_rr_loglik_hand_value():
    sdp = np.array([[1, 0], [1, 1]])
    x = np.array([[1, 1], [1, 1]])
    # three agreements, one disagreement
    assert mech.rr_loglik(sdp, x, 0.75) == pytest.approx(3 * math.log(0.75) + math.log(0.25))


def test_rr_loglik_impossible_under_full_keep():
    assert mech.rr_loglik([[1, 0]], [[1, 1]], 1.0) == -math.inf


@pytest.mark.parametrize("keep", [0.0, 1.2, -0.1])
def test_rr_rejects_bad_keep_prob(keep):
    with pytest.raises(ParameterError):
        mech.RandomizedResponseParams(keep)


# ---------------------------------------------------------------------------
# Budget conversion
# ---------------------------------------------------------------------------


def test_zcdp_epsilon_formula():
    rho, delta = 0.5, 1e-6
    assert mech.zcdp_epsilon(rho, delta) == pytest.approx(rho + 2 * math.sqrt(rho * math.log(1 / delta)))


def test_sigma_for_published_budget():
    sigma = mech.sigma_for_approx_dp(2.0, 2.0 * math.log(3.0), 1e-10)
    assert sigma == pytest.approx(6.32, abs=0.01)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 20), st.floats(1e-3, 10), st.floats(1e-15, 0.5))
def test_sigma_round_trip(sensitivity, epsilon, delta):
    sigma = mech.sigma_for_approx_dp(sensitivity, epsilon, delta)
    rho = sensitivity**2 / (2 * sigma**2)
    assert mech.zcdp_epsilon(rho, delta) == pytest.approx(epsilon, rel=1e-9)


def test_sigma_decreases_with_epsilon():
    sigmas = [mech.sigma_for_approx_dp(1.0, e, 1e-8) for e in (0.1, 0.5, 1.0, 4.0)]
    assert sigmas == sorted(sigmas, reverse=True)


@pytest.mark.parametrize("delta", [0.0, 1.0, 1.5])
def test_sigma_rejects_bad_delta(delta):
    with pytest.raises(ParameterError):
        mech.sigma_for_approx_dp(1.0, 1.0, delta)


def test_budget_from_zcdp():
    budget = mech.PrivacyBudget.from_zcdp(0.05, 1e-10)
    assert budget.epsilon == pytest.approx(mech.zcdp_epsilon(0.05, 1e-10))
    assert budget.delta == 1e-10
