"""Brute-force exact posteriors for tiny table instances.

Two independent routes are provided for each mechanism:

* direct evaluation of prior times marginal likelihood ``p(s_dp | theta)`` on
  a user-supplied grid of simplex points (:func:`exact_rr_posterior`,
  :func:`exact_count_posterior`);
* an exact mixture-of-Dirichlets expansion of the same posterior
  (:func:`rr_posterior_mixture`, :func:`count_posterior_mixture`), obtained by
  enumerating every vector of latent cell counts. Its one-dimensional
  marginals are Beta mixtures, so bin probabilities are exact.

The engine is certified by comparing its draws with these marginals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from .exceptions import CapacityError, InputError, ParameterError
from .mechanisms import dgauss_logpmf

# Largest n for which latent count vectors are enumerated.
ENUMERATION_CAP = 12


@dataclass(frozen=True)
class GridPosterior:
    """Normalized posterior masses on a finite set of parameter points."""

    grid: np.ndarray  # (G, K)
    log_weights: np.ndarray  # (G,)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


@dataclass(frozen=True)
class Bins:
    """Histogram bins along one coordinate of a point cloud."""

    edges: np.ndarray
    coord: int = 0

    @property
    def nbins(self) -> int:
        return len(self.edges) - 1

    def assign(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        values = pts if pts.ndim == 1 else pts[:, self.coord]
        idx = np.searchsorted(self.edges, values, side="right") - 1
        return np.clip(idx, 0, self.nbins - 1)


def uniform_bins(resolution: float = 0.02, coord: int = 0) -> Bins:
    nb = int(round(1.0 / resolution))
    return Bins(np.linspace(0.0, 1.0, nb + 1), coord)


@dataclass(frozen=True)
class DirichletMixture:
    """``sum_m w_m Dirichlet(alphas[m])`` with normalized log weights."""

    alphas: np.ndarray  # (M, K)
    log_weights: np.ndarray  # (M,)

    def logpdf(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        log_beta = np.sum(special.gammaln(self.alphas), axis=1) - special.gammaln(self.alphas.sum(axis=1))
        comp = special.xlogy(self.alphas[None, :, :] - 1.0, theta[:, None, :]).sum(axis=2) - log_beta[None, :]
        return special.logsumexp(comp + self.log_weights[None, :], axis=1)

    def mean(self) -> np.ndarray:
        comp_means = self.alphas / self.alphas.sum(axis=1, keepdims=True)
        return np.exp(self.log_weights) @ comp_means

    def marginal_masses(self, coord: int, edges) -> np.ndarray:
        """Exact probability of each bin for coordinate ``coord``."""
        a = self.alphas[:, coord]
        b = self.alphas.sum(axis=1) - a
        cdf = stats.beta.cdf(np.asarray(edges)[None, :], a[:, None], b[:, None])
        return np.exp(self.log_weights) @ np.diff(cdf, axis=1)

    def marginal_grid(self, coord: int, edges) -> GridPosterior:
        """One-dimensional :class:`GridPosterior` at bin midpoints."""
        edges = np.asarray(edges, dtype=float)
        masses = np.clip(self.marginal_masses(coord, edges), 0.0, None)
        masses = masses / masses.sum()
        with np.errstate(divide="ignore"):
            return GridPosterior(((edges[:-1] + edges[1:]) / 2.0)[:, None], np.log(masses))

    def sample(self, size: int, rng=None) -> np.ndarray:
        rng = np.random.default_rng(rng)
        comp = rng.choice(len(self.alphas), size=size, p=np.exp(self.log_weights))
        g = rng.gamma(self.alphas[comp])
        return g / g.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def binary_categories(width: int) -> np.ndarray:
    """All binary vectors of the given width, from all-ones down to all-zeros."""
    return np.array(list(itertools.product([1, 0], repeat=width)), dtype=float)


def simplex_grid(k: int, resolution: float = 0.02) -> np.ndarray:
    """Lattice points of the ``k``-simplex with spacing ``resolution``."""
    steps = int(round(1.0 / resolution))
    pts = [c for c in itertools.product(range(steps + 1), repeat=k - 1) if sum(c) <= steps]
    pts = np.array(pts, dtype=float)
    return np.column_stack([pts, steps - pts.sum(axis=1)]) / steps


def _check_grid(theta_grid, k: int) -> np.ndarray:
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    if grid.shape[1] != k:
        raise InputError(f"grid points must have {k} coordinates, got {grid.shape[1]}")
    if np.any(grid < 0) or np.any(np.abs(grid.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("grid points must lie on the probability simplex")
    if len(np.unique(grid, axis=0)) != len(grid):
        raise InputError("grid points must be distinct")
    return grid


def _check_prior(prior, k: int) -> np.ndarray:
    prior = np.ones(k) if prior is None else np.asarray(prior, dtype=float)
    if prior.shape != (k,) or np.any(prior <= 0):
        raise ParameterError(f"prior must be {k} positive concentrations")
    return prior


def _log_dirichlet_kernel(grid: np.ndarray, prior: np.ndarray) -> np.ndarray:
    return special.xlogy(prior - 1.0, grid).sum(axis=1)


def _normalize(grid, log_post) -> GridPosterior:
    return GridPosterior(grid, log_post - special.logsumexp(log_post))


def _count_vectors(n: int, k: int) -> np.ndarray:
    """All non-negative integer vectors of length ``k`` summing to ``n``."""
    out = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        prev, counts = -1, []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(n + k - 2 - prev)
        out.append(counts)
    return np.array(out, dtype=float)


def _log_multinomial_coef(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=1)
    return special.gammaln(n + 1) - special.gammaln(counts + 1).sum(axis=1)


def _log_beta(alphas: np.ndarray) -> np.ndarray:
    return special.gammaln(alphas).sum(axis=-1) - special.gammaln(alphas.sum(axis=-1))


def _mixture(counts: np.ndarray, log_w: np.ndarray, prior: np.ndarray) -> DirichletMixture:
    alphas = counts + prior
    log_w = log_w + _log_beta(alphas) - _log_beta(prior)
    keep = np.isfinite(log_w)
    alphas, log_w = alphas[keep], log_w[keep]
    return DirichletMixture(alphas, log_w - special.logsumexp(log_w))


# ---------------------------------------------------------------------------
# Randomized response
# ---------------------------------------------------------------------------


def _rr_log_eta(patterns: np.ndarray, keep_prob: float) -> np.ndarray:
    """``log eta(pattern_i | category c)``, shape ``(n, K)``."""
    if not (0.0 < keep_prob <= 1.0):
        raise ParameterError(f"keep_prob must lie in (0, 1], got {keep_prob!r}")
    cats = binary_categories(patterns.shape[1])
    matches = (patterns[:, None, :] == cats[None, :, :]).sum(axis=2)
    mismatches = patterns.shape[1] - matches
    return special.xlogy(matches, keep_prob) + special.xlogy(mismatches, 1.0 - keep_prob)


def _check_patterns(sdp_bits) -> np.ndarray:
    pats = np.asarray(sdp_bits, dtype=float)
    if pats.ndim == 1:
        pats = pats[:, None]
    if pats.ndim != 2 or not np.all((pats == 0) | (pats == 1)):
        raise InputError("sdp_bits must be an n x b binary matrix")
    if len(pats) > ENUMERATION_CAP:
        raise CapacityError(f"n={len(pats)} exceeds the enumeration cap {ENUMERATION_CAP}")
    return pats


def exact_rr_posterior(sdp_bits, keep_prob: float, theta_grid, prior=None) -> GridPosterior:
    """Grid posterior of cell probabilities given randomized-response reports.

    ``p(s_dp | theta) = prod_i sum_c theta_c eta(pattern_i | c)`` where the
    categories are the binary vectors of the record width, ordered from
    all-ones to all-zeros.
    """
    pats = _check_patterns(sdp_bits)
    k = 2 ** pats.shape[1]
    grid = _check_grid(theta_grid, k)
    prior = _check_prior(prior, k)
    log_eta = _rr_log_eta(pats, keep_prob)
    with np.errstate(divide="ignore"):
        per_record = special.logsumexp(np.log(grid)[:, None, :] + log_eta[None, :, :], axis=2)
    return _normalize(grid, _log_dirichlet_kernel(grid, prior) + per_record.sum(axis=1))


def rr_posterior_mixture(sdp_bits, keep_prob: float, prior=None) -> DirichletMixture:
    pats = _check_patterns(sdp_bits)
    k = 2 ** pats.shape[1]
    prior = _check_prior(prior, k)
    log_eta = _rr_log_eta(pats, keep_prob)
    # Expand prod_i sum_c eta_ic theta_c record by record, keyed by counts.
    poly = {(0,) * k: 0.0}
    for row in log_eta:
        nxt = {}
        for key, lw in poly.items():
            for c in range(k):
                if row[c] == -math.inf:
                    continue
                new = list(key)
                new[c] += 1
                new = tuple(new)
                nxt[new] = np.logaddexp(nxt[new], lw + row[c]) if new in nxt else lw + row[c]
        poly = nxt
    counts = np.array(list(poly.keys()), dtype=float)
    return _mixture(counts, np.array(list(poly.values())), prior)


# ---------------------------------------------------------------------------
# Discrete Gaussian counts
# ---------------------------------------------------------------------------


def _count_log_terms(sdp_counts, sigma: float, n: int):
    sdp = np.asarray(sdp_counts, dtype=float)
    if n > ENUMERATION_CAP:
        raise CapacityError(f"n={n} exceeds the enumeration cap {ENUMERATION_CAP}")
    if not (sigma > 0):
        raise ParameterError(f"sigma must be positive, got {sigma!r}")
    counts = _count_vectors(int(n), len(sdp))
    log_noise = dgauss_logpmf(sdp[None, :] - counts, 0.0, sigma).sum(axis=1)
    return counts, log_noise


def exact_count_posterior(sdp_counts, sigma: float, n: int, theta_grid, prior=None) -> GridPosterior:
    """Grid posterior of cell probabilities given discrete-Gaussian noisy counts.

    ``p(s_dp | theta) = sum_m Multinomial(m; n, theta) prod_j P[sdp_j - m_j]``
    summed over every count vector ``m`` with total ``n``.
    """
    counts, log_noise = _count_log_terms(sdp_counts, sigma, n)
    k = counts.shape[1]
    grid = _check_grid(theta_grid, k)
    prior = _check_prior(prior, k)
    log_mult = _log_multinomial_coef(counts)[None, :] + special.xlogy(counts[None, :, :], grid[:, None, :]).sum(axis=2)
    loglik = special.logsumexp(log_mult + log_noise[None, :], axis=1)
    return _normalize(grid, _log_dirichlet_kernel(grid, prior) + loglik)


def count_posterior_mixture(sdp_counts, sigma: float, n: int, prior=None) -> DirichletMixture:
    counts, log_noise = _count_log_terms(sdp_counts, sigma, n)
    prior = _check_prior(prior, counts.shape[1])
    return _mixture(counts, _log_multinomial_coef(counts) + log_noise, prior)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def tv_distance(draws, grid: GridPosterior, bins: Bins) -> float:
    """Total variation between binned draws and a grid posterior on the same bins."""
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise InputError("draws must be non-empty")
    emp = np.bincount(bins.assign(draws), minlength=bins.nbins) / len(draws)
    ref = np.bincount(bins.assign(grid.grid), weights=grid.weights, minlength=bins.nbins)
    return 0.5 * float(np.abs(emp - ref).sum())


def marginal_tv(draws: np.ndarray, mixture: DirichletMixture, resolution: float = 0.02) -> np.ndarray:
    """TV distance per coordinate between draws ``(N, K)`` and exact marginals."""
    draws = np.asarray(draws, dtype=float)
    bins = uniform_bins(resolution)
    return np.array(
        [tv_distance(draws[:, j], mixture.marginal_grid(j, bins.edges), bins) for j in range(draws.shape[1])]
    )
