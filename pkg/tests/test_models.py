import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from privaug import mechanisms
from privaug.exceptions import InputError, ParameterError
from privaug.models import regression, tables

counts4 = st.lists(st.integers(0, 30), min_size=4, max_size=4)


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


@given(counts4)
def test_table_records_round_trip(counts):
    np.testing.assert_array_equal(tables.cell_counts(tables.table_to_records(counts)), counts)


def test_cell_order():
    np.testing.assert_array_equal(tables.cell_counts(np.array([[1, 1], [1, 0], [0, 1], [0, 0], [0, 0]])), [1, 1, 1, 2])


def test_published_tables_total_400():
    assert sum(tables.PUBLISHED_RR_TABLE) == 400
    assert sum(tables.CONFIDENTIAL_TABLE) == 400


def test_table_to_records_rejects_negative():
    with pytest.raises(InputError):
        tables.table_to_records([1, -1, 0, 0])


def test_dirichlet_step_mean():
    x = tables.table_to_records([10, 20, 30, 40])
    rng = np.random.default_rng(0)
    draws = np.array([tables.dirichlet_posterior_step(x, None, rng) for _ in range(20_000)])
    np.testing.assert_allclose(draws.mean(axis=0), np.array([11, 21, 31, 41]) / 104, atol=0.003)


def test_multinomial_latent_frequencies():
    x = tables.multinomial_latent([0.1, 0.2, 0.3, 0.4], 100_000, np.random.default_rng(1))
    np.testing.assert_allclose(tables.cell_counts(x) / 1e5, [0.1, 0.2, 0.3, 0.4], atol=0.005)


def test_multinomial_latent_rejects_non_simplex():
    with pytest.raises(InputError):
        tables.multinomial_latent([0.5, 0.5, 0.5, 0.5], 3)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.int8, st.tuples(st.integers(1, 12), st.just(2)), elements=st.integers(0, 1)), st.data())
def test_match_statistic_reproduces_rr_likelihood(x, data):
    sdp = data.draw(hnp.arrays(np.int8, x.shape, elements=st.integers(0, 1)))
    keep = data.draw(st.floats(0.51, 0.99))
    matches = sum(tables.rr_match_stat(x[i], sdp, i)[0] for i in range(len(x)))
    direct = mechanisms.rr_loglik(sdp, x, keep)
    assert tables.rr_match_loglik(matches, x.size, keep) == pytest.approx(direct, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.int8, st.tuples(st.integers(1, 12), st.just(2)), elements=st.integers(0, 1)), st.data())
def test_matrix_statistic_sums_to_database(x, data):
    n = len(x)
    total = sum(tables.rr_record_stat(x[i], n, i) for i in range(n))
    np.testing.assert_array_equal(total, x)


def test_record_stat_rejects_bad_index():
    with pytest.raises(InputError):
        tables.rr_record_stat(np.array([1, 0]), 3, 3)


def test_cell_indicator_stat_sums_to_counts():
    x = tables.table_to_records([2, 0, 5, 1])
    total = sum(tables.cell_indicator_stat(row) for row in x)
    np.testing.assert_array_equal(total, [2, 0, 5, 1])


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(float, 4, elements=st.integers(-30, 60).map(float)),
    hnp.arrays(float, 4, elements=st.integers(0, 40).map(float)),
    st.floats(0.3, 10),
)
def test_compiled_dgauss_logdensity_matches(sdp, sx, sigma):
    model = tables.dgauss_table_model(n=40, sigma=sigma)
    expected = tables.dgauss_count_loglik(sdp, sx, sigma)
    assert model.privacy_logdensity(sdp, sx) == pytest.approx(expected)
    assert model.compiled_logdensity(sdp, sx, model.compiled_params) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("keep", [0.6, 0.75, 1.0])
def test_compiled_rr_logdensity_matches(keep):
    model = tables.rr_table_model(n=10, keep_prob=keep)
    sdp = np.zeros((10, 2))
    for m in (0.0, 7.0, 20.0):
        expected = tables.rr_match_loglik(m, 20, keep)
        got = model.compiled_logdensity(sdp.ravel(), np.array([m]), model.compiled_params)
        assert got == pytest.approx(expected) or (got == expected == -math.inf)


def test_table_model_validation():
    with pytest.raises(ParameterError):
        tables.TableModelSpec(mechanism="laplace")
    with pytest.raises(ParameterError):
        tables.TableModelSpec(prior=(1, 1, 1, 0))
    with pytest.raises(ParameterError):
        tables.TableModelSpec(sigma=-1)


def test_simulated_rr_release_shape():
    x, sdp = tables.simulate_rr_release([0.25] * 4, 50, 0.75, 0)
    assert x.shape == sdp.shape == (50, 2)
    assert set(np.unique(sdp)) <= {0.0, 1.0}


def test_naive_table_posterior_floors_negative_counts():
    post = tables.naive_table_posterior([-3, 10, 5, 5])
    np.testing.assert_allclose(post.mean(), np.array([1, 11, 6, 6]) / 24)


def test_odds_ratio():
    assert tables.odds_ratio(np.array([0.4, 0.1, 0.1, 0.4])) == pytest.approx(16.0)


# ---------------------------------------------------------------------------
# Regression
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("p,expected", [(1, 8), (2, 15), (3, 24)])
def test_sensitivity(p, expected):
    assert regression.l1_sensitivity_regression(p) == expected


def test_regression_model_defaults():
    spec = regression.RegressionModelSpec()
    assert spec.sensitivity == 15
    assert spec.noise_scale == pytest.approx(1.5)
    assert spec.stat_length == 9


def test_clamp():
    np.testing.assert_allclose(regression.clamp(np.array([-25.0, -5.0, 0.0, 12.0])), [-1.0, -0.5, 0.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, st.tuples(st.integers(1, 20), st.integers(2, 4)), elements=st.floats(-30, 30)))
def test_record_stats_sum_to_gram_blocks(dmat):
    p = dmat.shape[1] - 1
    total = regression.regression_record_stats(dmat).sum(axis=0)
    c = regression.clamp(dmat)
    y, design = c[:, 0], np.column_stack([np.ones(len(c)), c[:, 1:]])
    xty, yty, gram = regression.unpack_gram(total, len(c), p)
    np.testing.assert_allclose(xty, design.T @ y, atol=1e-12)
    assert yty == pytest.approx(y @ y)
    np.testing.assert_allclose(gram, design.T @ design, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    hnp.arrays(float, st.tuples(st.integers(1, 10), st.just(3)), elements=st.floats(-30, 30)),
    hnp.arrays(float, st.tuples(st.integers(1, 10), st.just(3)), elements=st.floats(-30, 30)),
)
def test_statistic_sensitivity_bound(a, b):
    # Replacing one record moves the statistic by at most the l1 sensitivity.
    sa = regression.regression_record_stat(a[0])
    sb = regression.regression_record_stat(b[0])
    assert np.abs(sa - sb).sum() <= regression.l1_sensitivity_regression(2) + 1e-12


def test_record_stat_layout():
    s = regression.regression_record_stat(np.array([2.0, 4.0, -6.0]))
    y, x1, x2 = 0.2, 0.4, -0.6
    np.testing.assert_allclose(s, [y, x1 * y, x2 * y, y * y, x1, x1 * x1, x2, x1 * x2, x2 * x2])


def test_conjugate_posterior_closed_form():
    spec = regression.RegressionModelSpec()
    dmat = regression.regression_latent(regression.TRUE_BETA, spec, np.random.default_rng(0))
    mean, cov = regression.regression_conjugate_posterior(dmat, spec)
    design = np.column_stack([np.ones(50), dmat[:, 1:]])
    precision = design.T @ design / 4.0 + np.eye(3) / 4.0
    np.testing.assert_allclose(cov, np.linalg.inv(precision), rtol=1e-10)
    np.testing.assert_allclose(mean, np.linalg.solve(precision, design.T @ dmat[:, 0] / 4.0), rtol=1e-10)


def test_posterior_step_moments():
    spec = regression.RegressionModelSpec()
    dmat = regression.regression_latent(regression.TRUE_BETA, spec, np.random.default_rng(1))
    mean, cov = regression.regression_conjugate_posterior(dmat, spec)
    rng = np.random.default_rng(2)
    draws = np.array([regression.regression_posterior_step(dmat, spec, rng) for _ in range(20_000)])
    np.testing.assert_allclose(draws.mean(axis=0), mean, atol=4 * np.sqrt(np.diag(cov) / 20_000).max())
    np.testing.assert_allclose(np.cov(draws.T), cov, rtol=0.05, atol=1e-3)


def test_latent_shape_and_column_order():
    spec = regression.RegressionModelSpec(n=20_000)
    d = regression.regression_latent([1.0, 0.0, 0.0], spec, np.random.default_rng(3))
    assert d.shape == (20_000, 3)
    assert d[:, 0].mean() == pytest.approx(1.0, abs=0.05)
    assert d[:, 1].mean() == pytest.approx(0.9, abs=0.05)


def test_laplace_loglik_matches_mechanism_density():
    sdp, sx = np.array([1.0, -2.0]), np.array([0.5, 0.0])
    expected = sum(mechanisms.laplace_logdensity(u, 0.0, 1.5) for u in sdp - sx)
    assert regression.laplace_regression_loglik(sdp, sx, 1.5) == pytest.approx(expected)
    model = regression.regression_model()
    assert model.compiled_logdensity(sdp, sx, model.compiled_params) == pytest.approx(expected)


def test_regression_rejects_mismatched_mu():
    with pytest.raises(ParameterError):
        regression.RegressionModelSpec(p=3)


# ---------------------------------------------------------------------------
# Naive baseline
# ---------------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.floats(-10, 10)))
def test_nearest_spd_is_positive_definite(a):
    k = a.shape[0]
    m = a[:k, :k] if a.shape[1] >= k else np.resize(a, (k, k))
    out = regression.nearest_spd(m)
    np.testing.assert_allclose(out, out.T)
    assert np.all(np.linalg.eigvalsh(out) > 0) or np.allclose(m, 0)


def test_nearest_spd_keeps_spd_input():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(regression.nearest_spd(a), a, atol=1e-12)


def test_nearest_spd_projection():
    a = np.diag([3.0, -1.0])
    np.testing.assert_allclose(regression.nearest_spd(a), np.diag([3.0, 3e-8]), atol=1e-12)


def test_naive_posterior_exact_statistic():
    spec = regression.RegressionModelSpec()
    dmat = regression.regression_latent(regression.TRUE_BETA, spec, np.random.default_rng(4))
    s = regression.regression_record_stats(dmat).sum(axis=0)
    beta_hat, cov = regression.naive_regression_posterior(s, 50)
    c = regression.clamp(dmat)
    design = np.column_stack([np.ones(50), c[:, 1:]])
    np.testing.assert_allclose(beta_hat, np.linalg.lstsq(design, c[:, 0], rcond=None)[0], rtol=1e-8)
    np.testing.assert_allclose(cov, 4.0 * np.linalg.inv(design.T @ design), rtol=1e-8)


def test_naive_posterior_differs_from_truth_under_noise():
    spec = regression.RegressionModelSpec()
    rng = np.random.default_rng(5)
    dmat, sdp = regression.simulate_regression_release(spec, regression.TRUE_BETA, rng)
    exact = regression.naive_regression_posterior(regression.regression_record_stats(dmat).sum(axis=0), 50)[0]
    noisy, cov = regression.naive_regression_posterior(sdp, 50)
    assert not np.allclose(noisy, exact, atol=1e-3)
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_nearest_spd_symmetrizes_then_clips():
    out = regression.nearest_spd(np.array([[0.0, 2.0], [0.0, 0.0]]))
    np.testing.assert_allclose(out, np.full((2, 2), 0.5), atol=1e-7)


def test_naive_table_posterior_published_counts():
    post = tables.naive_table_posterior([74, 102, 104, 120])
    np.testing.assert_allclose(post.alpha, [75, 103, 105, 121])


def test_naive_data_scale_matches_unclamped_ols():
    spec = regression.RegressionModelSpec()
    dmat = regression.regression_latent(regression.TRUE_BETA, spec, np.random.default_rng(7))
    dmat = np.clip(dmat, -9.0, 9.0)  # keep clamping inactive
    s = regression.regression_record_stats(dmat).sum(axis=0)
    beta_hat, cov = regression.naive_regression_posterior_data_scale(s, 50)
    design = np.column_stack([np.ones(50), dmat[:, 1:]])
    np.testing.assert_allclose(beta_hat, np.linalg.lstsq(design, dmat[:, 0], rcond=None)[0], rtol=1e-7)
    np.testing.assert_allclose(cov, 4.0 * np.linalg.inv(design.T @ design), rtol=1e-7)
