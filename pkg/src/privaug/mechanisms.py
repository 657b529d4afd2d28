"""Noise mechanisms for differential privacy.

Mass/density functions and exact samplers for the discrete Gaussian, discrete
Laplace and continuous Laplace distributions, randomized response on binary
records, and the zCDP to (epsilon, delta)-DP conversion used to calibrate the
discrete Gaussian.

None of the samplers here are hardened against floating-point or timing side
channels. They are meant for simulation and analysis, not for releasing real
data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .exceptions import InputError, ParameterError

ArrayLike = Union[float, int, np.ndarray, list]
RngLike = Union[None, int, np.random.Generator]

# Terms of the discrete Gaussian normalizer below this fraction of the
# running sum are dropped; the truncation error is below double precision.
_NORMALIZER_REL_TOL = 1e-17


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a finite positive number, got {value!r}")
    return value


def _check_count(count: int) -> int:
    if int(count) != count or count < 0:
        raise ParameterError(f"count must be a non-negative integer, got {count!r}")
    return int(count)


def _as_integer_array(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterError("x must be finite")
    if np.any(arr != np.round(arr)):
        raise ParameterError("x must be integer valued")
    return arr


def _scalar_or_array(value: np.ndarray, like: ArrayLike):
    if np.ndim(like) == 0:
        return float(value)
    return value


@dataclass(frozen=True)
class DiscreteGaussianParams:
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ParameterError(f"mu must be finite, got {self.mu!r}")
        _check_positive("sigma", self.sigma)


@dataclass(frozen=True)
class DiscreteLaplaceParams:
    t: float = 1.0

    def __post_init__(self):
        _check_positive("t", self.t)


@dataclass(frozen=True)
class LaplaceParams:
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.location):
            raise ParameterError(f"location must be finite, got {self.location!r}")
        _check_positive("scale", self.scale)


@dataclass(frozen=True)
class RandomizedResponseParams:
    """Per-bit randomized response.

    ``keep_prob`` is the probability that a reported bit equals the true bit.
    Flipping two fair coins (keep the answer on heads, otherwise answer with
    the second coin) gives ``keep_prob = 3/4``.
    """

    keep_prob: float = 0.75

    def __post_init__(self):
        if not (0.0 < self.keep_prob <= 1.0):
            raise ParameterError(f"keep_prob must lie in (0, 1], got {self.keep_prob!r}")


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float = 0.0
    rho: Optional[float] = None

    def __post_init__(self):
        if not (self.epsilon >= 0):
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if not (0.0 <= self.delta <= 1.0):
            raise ParameterError(f"delta must lie in [0, 1], got {self.delta!r}")
        if self.rho is not None and not (self.rho >= 0):
            raise ParameterError(f"rho must be >= 0, got {self.rho!r}")

    @classmethod
    def from_zcdp(cls, rho: float, delta: float) -> "PrivacyBudget":
        return cls(epsilon=zcdp_epsilon(rho, delta), delta=delta, rho=rho)


# ---------------------------------------------------------------------------
# Discrete Gaussian
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _dgauss_log_normalizer(frac_mu: float, sigma: float) -> float:
    # Z depends on mu only through its fractional part.
    half_width = math.ceil(sigma * math.sqrt(-2.0 * math.log(_NORMALIZER_REL_TOL))) + 2
    k = np.arange(-half_width, half_width + 1, dtype=float)
    terms = np.exp(-((k - frac_mu) ** 2) / (2.0 * sigma * sigma))
    # fsum of terms sorted ascending so small tails are not swallowed.
    return math.log(math.fsum(np.sort(terms)))


def dgauss_log_normalizer(mu: float, sigma: float) -> float:
    """Log of ``sum_{y in Z} exp(-(y - mu)^2 / (2 sigma^2))``."""
    params = DiscreteGaussianParams(float(mu), float(sigma))
    frac = params.mu - math.floor(params.mu)
    return _dgauss_log_normalizer(round(frac, 15), params.sigma)


def ddnorm(x: ArrayLike, mu: float = 0.0, sigma: float = 1.0, log: bool = False):
    """Discrete Gaussian probability mass.

    Parameters
    ----------
    x : int or array of int
        Points of evaluation.
    mu, sigma : float
        Location and scale.
    log : bool
        If true, return the log of the *unnormalized* mass
        ``-(x - mu)^2 / (2 sigma^2)``. This skips the normalizing constant,
        which is all an MCMC acceptance ratio needs.
    """
    params = DiscreteGaussianParams(float(mu), float(sigma))
    arr = _as_integer_array(x)
    log_kernel = -((arr - params.mu) ** 2) / (2.0 * params.sigma**2)
    if log:
        return _scalar_or_array(log_kernel, x)
    logz = dgauss_log_normalizer(params.mu, params.sigma)
    return _scalar_or_array(np.exp(log_kernel - logz), x)


def dgauss_logpmf(x: ArrayLike, mu: float = 0.0, sigma: float = 1.0):
    """Normalized log mass of the discrete Gaussian."""
    log_kernel = ddnorm(x, mu, sigma, log=True)
    return log_kernel - dgauss_log_normalizer(mu, sigma)


def rdnorm(count: int, mu: float = 0.0, sigma: float = 1.0, rng: RngLike = None) -> np.ndarray:
    """Exact discrete Gaussian draws.

    Rejection sampling from a discrete Laplace proposal centred at the integer
    nearest ``mu`` with scale ``floor(sigma) + 1``.
    """
    count = _check_count(count)
    params = DiscreteGaussianParams(float(mu), float(sigma))
    rng = _as_rng(rng)
    if count == 0:
        return np.zeros(0, dtype=np.int64)

    mu, sigma = params.mu, params.sigma
    center = math.floor(mu + 0.5)
    t = math.floor(sigma) + 1.0
    # Upper bound of log(target/proposal) over the real line.
    log_bound = sigma * sigma / (2.0 * t * t) + abs(mu - center) / t

    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        batch = 2 * (count - filled) + 16
        step = rdlaplace(batch, t, rng)
        y = center + step
        log_ratio = -((y - mu) ** 2) / (2.0 * sigma * sigma) + np.abs(step) / t - log_bound
        keep = np.log(rng.random(batch)) < log_ratio
        accepted = y[keep]
        take = min(accepted.size, count - filled)
        out[filled : filled + take] = accepted[:take]
        filled += take
    return out


# ---------------------------------------------------------------------------
# Discrete Laplace
# ---------------------------------------------------------------------------


def ddlaplace(x: ArrayLike, t: float = 1.0, log: bool = False):
    """Discrete Laplace mass ``(e^{1/t} - 1)/(e^{1/t} + 1) * e^{-|x|/t}``."""
    t = DiscreteLaplaceParams(float(t)).t
    arr = _as_integer_array(x)
    # log((e^a - 1)/(e^a + 1)) = log(tanh(a/2))
    log_norm = math.log(math.tanh(0.5 / t))
    out = log_norm - np.abs(arr) / t
    if not log:
        out = np.exp(out)
    return _scalar_or_array(out, x)


def rdlaplace(count: int, t: float = 1.0, rng: RngLike = None) -> np.ndarray:
    """Exact discrete Laplace draws as the difference of two geometrics."""
    count = _check_count(count)
    t = DiscreteLaplaceParams(float(t)).t
    rng = _as_rng(rng)
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    p = -math.expm1(-1.0 / t)
    return (rng.geometric(p, count) - rng.geometric(p, count)).astype(np.int64)


# ---------------------------------------------------------------------------
# Continuous Laplace
# ---------------------------------------------------------------------------


def laplace_logdensity(u: ArrayLike, location: float = 0.0, scale: float = 1.0):
    params = LaplaceParams(float(location), float(scale))
    arr = np.asarray(u, dtype=float)
    out = -math.log(2.0 * params.scale) - np.abs(arr - params.location) / params.scale
    return _scalar_or_array(out, u)


def laplace_mechanism(s: ArrayLike, sensitivity: float, epsilon: float, rng: RngLike = None) -> np.ndarray:
    """Release ``s + u`` with i.i.d. Laplace(0, sensitivity / epsilon) noise."""
    sensitivity = _check_positive("sensitivity", sensitivity)
    epsilon = _check_positive("epsilon", epsilon)
    rng = _as_rng(rng)
    s = np.asarray(s, dtype=float)
    return s + rng.laplace(0.0, sensitivity / epsilon, size=s.shape)


# ---------------------------------------------------------------------------
# Randomized response
# ---------------------------------------------------------------------------


def _as_bits(bits: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise InputError(f"{name} must contain only 0/1 entries")
    return arr.astype(np.int8)


def randomized_response(bits: ArrayLike, keep_prob: float = 0.75, rng: RngLike = None) -> np.ndarray:
    """Report each bit truthfully with probability ``keep_prob``, else flipped.

    For ``keep_prob >= 1/2`` this has the same distribution as keeping the
    bit with probability ``2 * keep_prob - 1`` and otherwise answering with a
    fair coin, which is the two-coin survey scheme at ``keep_prob = 3/4``.
    """
    keep_prob = RandomizedResponseParams(float(keep_prob)).keep_prob
    arr = _as_bits(bits, "bits")
    rng = _as_rng(rng)
    flips = rng.random(arr.shape) >= keep_prob
    return np.bitwise_xor(arr, flips.astype(np.int8))


def _xlogy(count: float, prob: float) -> float:
    return 0.0 if count == 0 else count * math.log(prob) if prob > 0 else -math.inf


def rr_loglik(sdp_bits: ArrayLike, x_bits: ArrayLike, keep_prob: float = 0.75) -> float:
    """Log-likelihood of reported bits given the true bits."""
    keep_prob = RandomizedResponseParams(float(keep_prob)).keep_prob
    sdp = _as_bits(sdp_bits, "sdp_bits")
    x = _as_bits(x_bits, "x_bits")
    if sdp.shape != x.shape:
        raise InputError(f"shape mismatch: {sdp.shape} vs {x.shape}")
    matches = int(np.count_nonzero(sdp == x))
    return _xlogy(matches, keep_prob) + _xlogy(sdp.size - matches, 1.0 - keep_prob)


# ---------------------------------------------------------------------------
# Budget accounting
# ---------------------------------------------------------------------------


def zcdp_epsilon(rho: float, delta: float) -> float:
    """Epsilon of the (epsilon, delta)-DP guarantee implied by rho-zCDP.

    ``epsilon = rho + 2 * sqrt(rho * log(1/delta))``.
    """
    rho = _check_positive("rho", rho)
    delta = float(delta)
    if not (0.0 < delta <= 1.0):
        raise ParameterError(f"delta must lie in (0, 1], got {delta!r}")
    return rho + 2.0 * math.sqrt(rho * -math.log(delta))


def sigma_for_approx_dp(l2_sensitivity: float, epsilon: float, delta: float) -> float:
    """Discrete Gaussian scale meeting (epsilon, delta)-DP through zCDP.

    Solves ``zcdp_epsilon(rho, delta) = epsilon`` for rho and returns
    ``l2_sensitivity / sqrt(2 rho)``.
    """
    l2_sensitivity = _check_positive("l2_sensitivity", l2_sensitivity)
    epsilon = _check_positive("epsilon", epsilon)
    delta = float(delta)
    if not (0.0 < delta < 1.0):
        raise ParameterError(f"delta must lie in (0, 1), got {delta!r}")
    log_inv_delta = -math.log(delta)
    # sqrt(L + eps) - sqrt(L), written without cancellation
    root_rho = epsilon / (math.sqrt(log_inv_delta + epsilon) + math.sqrt(log_inv_delta))
    return l2_sensitivity / (math.sqrt(2.0) * root_rho)
