import math

import numpy as np
import pytest

from privaug import oracle
from privaug.engine import SamplerConfig, sample_private_posterior
from privaug.exceptions import CapacityError, InputError
from privaug.models import tables


@pytest.fixture(scope="module")
def rr_instance():
    _, sdp = tables.simulate_rr_release([0.4, 0.3, 0.2, 0.1], 5, 0.75, np.random.default_rng(3))
    return sdp


def test_simplex_grid():
    grid = oracle.simplex_grid(4, 0.25)
    assert len(grid) == math.comb(4 + 3, 3)
    np.testing.assert_allclose(grid.sum(axis=1), 1.0)


def test_binary_categories_match_cell_order():
    np.testing.assert_array_equal(oracle.binary_categories(2), tables.CELLS)


def test_rr_routes_agree(rr_instance):
    grid = oracle.simplex_grid(4, 0.05)
    direct = oracle.exact_rr_posterior(rr_instance, 0.75, grid)
    mix = oracle.rr_posterior_mixture(rr_instance, 0.75)
    via_mix = mix.logpdf(grid)
    via_mix = np.exp(via_mix - np.logaddexp.reduce(via_mix))
    np.testing.assert_allclose(direct.weights, via_mix, atol=1e-12)
    assert direct.weights.sum() == pytest.approx(1.0)


def test_count_routes_agree():
    grid = oracle.simplex_grid(4, 0.05)
    sdp = np.array([5.0, 2.0, 0.0, 0.0])
    direct = oracle.exact_count_posterior(sdp, 1.0, 8, grid)
    mix = oracle.count_posterior_mixture(sdp, 1.0, 8)
    via_mix = mix.logpdf(grid)
    via_mix = np.exp(via_mix - np.logaddexp.reduce(via_mix))
    np.testing.assert_allclose(direct.weights, via_mix, atol=1e-12)


def test_single_record_rr_mixture_by_hand():
    # One report (1, 1) under keep 3/4: cell likelihoods are 9/16, 3/16, 3/16, 1/16.
    mix = oracle.rr_posterior_mixture(np.array([[1.0, 1.0]]), 0.75)
    eta = np.array([9, 3, 3, 1]) / 16
    w = eta / eta.sum()
    expected = sum(w[c] * (np.ones(4) + np.eye(4)[c]) / 5 for c in range(4))
    np.testing.assert_allclose(mix.mean(), expected)


def test_mixture_marginal_masses_sum_to_one(rr_instance):
    mix = oracle.rr_posterior_mixture(rr_instance, 0.75)
    edges = oracle.uniform_bins(0.02).edges
    for j in range(4):
        assert mix.marginal_masses(j, edges).sum() == pytest.approx(1.0, abs=1e-12)
    assert np.exp(mix.log_weights).sum() == pytest.approx(1.0)


def test_mixture_samples_match_marginals(rr_instance):
    mix = oracle.rr_posterior_mixture(rr_instance, 0.75)
    draws = mix.sample(50_000, np.random.default_rng(0))
    assert np.all(oracle.marginal_tv(draws, mix) < 0.03)


def test_tv_distance_identical_is_zero():
    bins = oracle.uniform_bins(0.1)
    grid = oracle.GridPosterior(np.array([[0.05], [0.55]]), np.log([0.5, 0.5]))
    assert oracle.tv_distance(np.array([0.01, 0.6]), grid, bins) == pytest.approx(0.0)
    assert oracle.tv_distance(np.array([0.01, 0.02]), grid, bins) == pytest.approx(0.5)


def test_capacity_limit():
    with pytest.raises(CapacityError):
        oracle.rr_posterior_mixture(np.zeros((oracle.ENUMERATION_CAP + 1, 2)), 0.75)
    with pytest.raises(CapacityError):
        oracle.count_posterior_mixture([1, 1, 1, 1], 1.0, oracle.ENUMERATION_CAP + 1)


def test_bad_grid_rejected(rr_instance):
    with pytest.raises(InputError):
        oracle.exact_rr_posterior(rr_instance, 0.75, np.array([[0.5, 0.5, 0.5, 0.5]]))
    with pytest.raises(InputError):
        oracle.exact_rr_posterior(rr_instance, 0.75, np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]))


def test_non_binary_report_rejected():
    with pytest.raises(InputError):
        oracle.rr_posterior_mixture(np.array([[2.0, 0.0]]), 0.75)


def test_engine_matches_oracle_short_run(rr_instance):
    mix = oracle.rr_posterior_mixture(rr_instance, 0.75)
    out = sample_private_posterior(
        tables.rr_table_model(n=5), rr_instance, SamplerConfig(np.full(4, 0.25), niter=11_000, warmup=1000, seed=8)
    )
    assert np.all(oracle.marginal_tv(out.draws.pooled(), mix) < 0.08)
