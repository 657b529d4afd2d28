"""2x2 contingency table of binary records under two mechanisms.

Each record is a pair of bits ``(a, b)``; the four cells are ordered
``(1,1), (1,0), (0,1), (0,0)`` throughout, matching the parameter vector
``pi = (pi_11, pi_10, pi_01, pi_00)``. In the admissions data the first bit
is sex (male = 1) and the second is admission (admitted = 1).

Two releases are supported:

* randomized response on every bit of every record (record-level release);
* discrete Gaussian noise added to the four cell counts, with the total
  number of records published exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import stats

from ..engine import PrivacyModel
from ..exceptions import InputError, ParameterError
from ..mechanisms import (
    RandomizedResponseParams,
    dgauss_log_normalizer,
    dgauss_logpmf,
    randomized_response,
    rdnorm,
    rr_loglik,
)

CELLS = np.array([[1, 1], [1, 0], [0, 1], [0, 0]], dtype=float)
TABLE_VARNAMES = ("pi_11", "pi_10", "pi_01", "pi_00")

# Admissions tables in cell order (male-admitted, male-rejected,
# female-admitted, female-rejected).
CONFIDENTIAL_TABLE = (109, 127, 46, 118)
PUBLISHED_RR_TABLE = (104, 120, 74, 102)
PUBLISHED_DGAUSS_TABLE = (110, 131, 47, 110)
PUBLISHED_DGAUSS_SIGMA = 6.32


def _check_binary_matrix(dmat: np.ndarray, name: str = "dmat") -> np.ndarray:
    dmat = np.asarray(dmat, dtype=float)
    if dmat.ndim != 2 or dmat.shape[1] != 2:
        raise InputError(f"{name} must be an n x 2 matrix, got shape {dmat.shape}")
    if not np.all((dmat == 0) | (dmat == 1)):
        raise InputError(f"{name} must be binary")
    return dmat


def _check_prior(prior) -> np.ndarray:
    prior = np.ones(4) if prior is None else np.asarray(prior, dtype=float)
    if prior.shape != (4,) or not np.all(prior > 0) or not np.all(np.isfinite(prior)):
        raise ParameterError("prior must be four positive finite concentrations")
    return prior


def cell_index(dmat: np.ndarray) -> np.ndarray:
    """Cell number 0..3 of each row of a binary ``n x 2`` matrix."""
    dmat = np.asarray(dmat)
    return (2 * (1 - dmat[:, 0]) + (1 - dmat[:, 1])).astype(np.int64)


def cell_counts(dmat: np.ndarray) -> np.ndarray:
    dmat = _check_binary_matrix(dmat)
    return np.bincount(cell_index(dmat), minlength=4).astype(float)


def table_to_records(counts: Sequence[int]) -> np.ndarray:
    """Binary record matrix whose rows realise the given cell counts."""
    counts = np.asarray(counts)
    if counts.shape != (4,) or np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise InputError("counts must be four non-negative integers")
    return np.repeat(CELLS, counts.astype(np.int64), axis=0)


def dirichlet_posterior_step(dmat: np.ndarray, prior=None, rng=None) -> np.ndarray:
    """Draw ``pi | x ~ Dirichlet(counts + prior)`` via normalised gammas."""
    prior = _check_prior(prior)
    rng = np.random.default_rng(rng)
    g = rng.gamma(cell_counts(dmat) + prior)
    return g / g.sum()


def multinomial_latent(theta: np.ndarray, n: int, rng=None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (4,) or np.any(theta < 0) or abs(theta.sum() - 1.0) > 1e-9:
        raise InputError(f"theta must be a probability 4-vector, got {theta!r}")
    rng = np.random.default_rng(rng)
    idx = rng.choice(4, size=int(n), p=theta / theta.sum())
    return CELLS[idx]


# ---------------------------------------------------------------------------
# Record statistics
# ---------------------------------------------------------------------------


def rr_record_stat(xi: np.ndarray, n: int, i: int) -> np.ndarray:
    """``n x 2`` matrix that is zero except for row ``i`` (0-based), set to ``xi``.

    Summing over records rebuilds the database itself, so ``sx`` is the
    full latent matrix and the mechanism compares it with ``sdp`` entrywise.
    """
    if not (0 <= i < n):
        raise InputError(f"record index {i} out of range for n={n}")
    out = np.zeros((n, 2))
    out[i] = xi
    return out


def rr_match_stat(xi: np.ndarray, sdp: np.ndarray, i: int) -> np.ndarray:
    """Number of bits of record ``i`` that agree with its released row.

    The randomized-response likelihood depends on the database only through
    the total number of agreeing bits, so this scalar is an equivalent and
    far cheaper record-additive statistic than :func:`rr_record_stat`.
    """
    return np.array([float(np.count_nonzero(np.asarray(xi) == np.asarray(sdp)[i]))])


def cell_indicator_stat(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi)
    if xi.shape != (2,) or not np.all((xi == 0) | (xi == 1)):
        raise InputError(f"record must be two binary values, got {xi!r}")
    out = np.zeros(4)
    out[2 * (1 - int(xi[0])) + (1 - int(xi[1]))] = 1.0
    return out


def dgauss_count_loglik(sdp: np.ndarray, sx: np.ndarray, sigma: float) -> float:
    """``sum_j log P[noise = sdp_j - sx_j]`` under a discrete Gaussian(0, sigma)."""
    return float(np.sum(dgauss_logpmf(np.asarray(sdp) - np.asarray(sx), 0.0, sigma)))


def rr_match_loglik(matches: float, nbits: int, keep_prob: float) -> float:
    matches = float(np.asarray(matches).reshape(-1)[0])
    mismatches = nbits - matches
    out = matches * math.log(keep_prob) if matches else 0.0
    if mismatches:
        out += mismatches * math.log(1.0 - keep_prob) if keep_prob < 1.0 else -math.inf
    return out


@numba.njit
def _rr_match_logdens(sdp, sx, params):
    # params: log(keep), log(1 - keep), number of released bits
    matches = sx[0]
    mismatches = params[2] - matches
    out = 0.0
    if matches != 0.0:
        out += matches * params[0]
    if mismatches != 0.0:
        out += mismatches * params[1]
    return out


@numba.njit
def _dgauss_counts_logdens(sdp, sx, params):
    # params: sigma, log normalizer
    inv = 1.0 / (2.0 * params[0] * params[0])
    out = 0.0
    for k in range(sdp.shape[0]):
        d = sdp[k] - sx[k]
        out -= d * d * inv + params[1]
    return out


# ---------------------------------------------------------------------------
# Model assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TableModelSpec:
    """Table model configuration.

    ``mechanism`` is ``"rr"`` (uses ``keep_prob``) or ``"dgauss"`` (uses
    ``sigma``). ``statistic`` picks the record statistic for ``"rr"``:
    ``"matches"`` (scalar agreement count) or ``"matrix"`` (the record
    matrix itself); both give identical sampler behaviour.
    """

    n: int = 400
    mechanism: str = "rr"
    keep_prob: float = 0.75
    sigma: float = PUBLISHED_DGAUSS_SIGMA
    prior: tuple = field(default=(1.0, 1.0, 1.0, 1.0))
    statistic: str = "matches"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        if self.mechanism not in ("rr", "dgauss"):
            raise ParameterError(f"unknown mechanism {self.mechanism!r}")
        if self.statistic not in ("matches", "matrix"):
            raise ParameterError(f"unknown statistic {self.statistic!r}")
        RandomizedResponseParams(self.keep_prob)
        if not (self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma!r}")
        object.__setattr__(self, "prior", tuple(_check_prior(self.prior)))


def table_model(spec: TableModelSpec) -> PrivacyModel:
    prior = np.asarray(spec.prior)
    n = int(spec.n)

    def posterior_step(dmat, theta, rng):
        return dirichlet_posterior_step(dmat, prior, rng)

    def latent_sampler(theta, rng):
        return multinomial_latent(theta, n, rng)

    def record_proposer(theta, rng):
        return multinomial_latent(theta, 1, rng)[0]

    common = dict(
        posterior_step=posterior_step,
        latent_sampler=latent_sampler,
        npar=4,
        varnames=TABLE_VARNAMES,
    )

    if spec.mechanism == "dgauss":
        sigma = float(spec.sigma)
        logz = dgauss_log_normalizer(0.0, sigma)
        return PrivacyModel(
            privacy_logdensity=lambda sdp, sx: dgauss_count_loglik(sdp, sx, sigma),
            record_statistic=lambda xi, sdp, i: cell_indicator_stat(xi),
            batch_statistic=lambda x, sdp: np.eye(4)[cell_index(x)],
            compiled_logdensity=_dgauss_counts_logdens,
            compiled_params=np.array([sigma, logz]),
            **common,
        )

    keep = float(spec.keep_prob)
    if spec.statistic == "matrix":
        return PrivacyModel(
            privacy_logdensity=lambda sdp, sx: rr_loglik(sdp, sx, keep),
            record_statistic=lambda xi, sdp, i: rr_record_stat(xi, n, i),
            record_proposer=record_proposer,
            **common,
        )

    nbits = 2 * n
    log_miss = math.log(1.0 - keep) if keep < 1.0 else -math.inf
    return PrivacyModel(
        privacy_logdensity=lambda sdp, sx: rr_match_loglik(sx, nbits, keep),
        record_statistic=rr_match_stat,
        batch_statistic=lambda x, sdp: np.count_nonzero(x == sdp, axis=1).astype(float)[:, None],
        compiled_logdensity=_rr_match_logdens,
        compiled_params=np.array([math.log(keep), log_miss, float(nbits)]),
        **common,
    )


def rr_table_model(n: int = 400, keep_prob: float = 0.75, prior=None, statistic: str = "matches") -> PrivacyModel:
    prior = (1.0, 1.0, 1.0, 1.0) if prior is None else tuple(prior)
    return table_model(TableModelSpec(n=n, mechanism="rr", keep_prob=keep_prob, prior=prior, statistic=statistic))


def dgauss_table_model(n: int = 400, sigma: float = PUBLISHED_DGAUSS_SIGMA, prior=None) -> PrivacyModel:
    prior = (1.0, 1.0, 1.0, 1.0) if prior is None else tuple(prior)
    return table_model(TableModelSpec(n=n, mechanism="dgauss", sigma=sigma, prior=prior))


# ---------------------------------------------------------------------------
# Releases and baselines
# ---------------------------------------------------------------------------


def simulate_rr_release(theta, n: int, keep_prob: float = 0.75, rng=None):
    """Confidential records and their randomized-response release."""
    rng = np.random.default_rng(rng)
    x = multinomial_latent(theta, n, rng)
    return x, randomized_response(x, keep_prob, rng).astype(float)


def simulate_dgauss_release(theta, n: int, sigma: float = PUBLISHED_DGAUSS_SIGMA, rng=None):
    """Confidential records and their noisy cell counts."""
    rng = np.random.default_rng(rng)
    x = multinomial_latent(theta, n, rng)
    return x, cell_counts(x) + rdnorm(4, 0.0, sigma, rng)


def naive_table_posterior(noisy_counts, prior=None):
    """Dirichlet posterior that treats the noisy counts as exact.

    Negative counts are floored at zero. Returns a frozen
    ``scipy.stats.dirichlet``.
    """
    prior = _check_prior(prior)
    counts = np.maximum(np.asarray(noisy_counts, dtype=float), 0.0)
    if counts.shape != (4,):
        raise InputError("noisy_counts must have four entries")
    return stats.dirichlet(counts + prior)


def odds_ratio(pi: np.ndarray) -> np.ndarray:
    """Odds of admission for males relative to females, per draw."""
    pi = np.asarray(pi)
    return (pi[..., 0] * pi[..., 3]) / (pi[..., 1] * pi[..., 2])
