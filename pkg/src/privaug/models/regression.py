"""Linear regression released through clamped sufficient statistics.

Records are rows ``(y, x_1, ..., x_p)``. Each value is clamped to
``[-bound, bound]`` and divided by ``bound``; the released statistic is the
sum over records of the unique entries of ``(d^T y, y^2, d^T d)`` with design
row ``d = (1, x)``, perturbed by i.i.d. Laplace noise of scale
``sensitivity / epsilon``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import linalg

from ..engine import PrivacyModel
from ..exceptions import InputError, NumericError, ParameterError
from ..mechanisms import laplace_logdensity, laplace_mechanism

TRUE_BETA = (-1.79, -2.89, -0.66)


def l1_sensitivity_regression(p: int) -> float:
    """l1-sensitivity ``p^2 + 4p + 3`` of the clamped unique-entry statistic."""
    if int(p) != p or p < 1:
        raise ParameterError(f"p must be a positive integer, got {p!r}")
    return float(p * p + 4 * p + 3)


@dataclass(frozen=True)
class RegressionModelSpec:
    n: int = 50
    p: int = 2
    mu_x: tuple = field(default=(0.9, -1.17))
    sigma_noise: float = 2.0
    tau2: float = 4.0
    clamp_bound: float = 10.0
    epsilon: float = 10.0
    sensitivity: float = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        if int(self.p) != self.p or self.p < 1:
            raise ParameterError(f"p must be a positive integer, got {self.p!r}")
        object.__setattr__(self, "mu_x", tuple(float(m) for m in self.mu_x))
        if len(self.mu_x) != self.p:
            raise ParameterError(f"mu_x has {len(self.mu_x)} entries, expected p={self.p}")
        for name in ("sigma_noise", "tau2", "clamp_bound", "epsilon"):
            if not (getattr(self, name) > 0):
                raise ParameterError(f"{name} must be positive")
        if self.sensitivity is None:
            object.__setattr__(self, "sensitivity", l1_sensitivity_regression(self.p))
        elif not (self.sensitivity > 0):
            raise ParameterError("sensitivity must be positive")

    @property
    def noise_scale(self) -> float:
        """Laplace scale ``sensitivity / epsilon``."""
        return self.sensitivity / self.epsilon

    @property
    def stat_length(self) -> int:
        q = self.p + 1
        return q + 1 + q * (q + 1) // 2 - 1


def clamp(z, bound: float = 10.0):
    """``min(max(z, -bound), bound) / bound``."""
    return np.clip(z, -bound, bound) / bound


def _upper_tri_colmajor(q: int):
    rows, cols = [], []
    for j in range(q):
        for r in range(j + 1):
            rows.append(r)
            cols.append(j)
    # Drop (0, 0): it is the constant 1 and sums to the public n.
    return np.array(rows[1:]), np.array(cols[1:])


def regression_record_stats(dmat: np.ndarray, bound: float = 10.0) -> np.ndarray:
    """Per-record statistics for an ``n x (p+1)`` matrix, shape ``(n, m)``."""
    dmat = np.asarray(dmat, dtype=float)
    if dmat.ndim != 2 or dmat.shape[1] < 2:
        raise InputError(f"records must have y followed by at least one covariate, got shape {dmat.shape}")
    c = clamp(dmat, bound)
    y = c[:, 0]
    design = np.column_stack([np.ones(len(c)), c[:, 1:]])
    rows, cols = _upper_tri_colmajor(design.shape[1])
    return np.column_stack([design * y[:, None], y * y, design[:, rows] * design[:, cols]])


def regression_record_stat(record, bound: float = 10.0, p: int = 2) -> np.ndarray:
    """Statistic of one record ``(y, x_1, ..., x_p)``.

    Layout: ``d * y`` (p+1 entries), ``y^2``, then the upper triangle of
    ``d^T d`` in column-major order without its leading constant entry.
    """
    record = np.asarray(record, dtype=float)
    if record.shape != (p + 1,):
        raise InputError(f"record must have length {p + 1}, got shape {record.shape}")
    return regression_record_stats(record[None, :], bound)[0]


def regression_latent(theta, spec: RegressionModelSpec, rng=None) -> np.ndarray:
    """Draw ``x ~ N(mu_x, I)`` and ``y = (1, x) theta + N(0, sigma_noise^2)``.

    Returns an ``n x (p+1)`` matrix with ``y`` in the first column.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.p + 1,):
        raise InputError(f"theta must have length {spec.p + 1}, got shape {theta.shape}")
    rng = np.random.default_rng(rng)
    x = np.asarray(spec.mu_x) + rng.standard_normal((spec.n, spec.p))
    y = theta[0] + x @ theta[1:] + spec.sigma_noise * rng.standard_normal(spec.n)
    return np.column_stack([y, x])


def regression_conjugate_posterior(dmat: np.ndarray, spec: RegressionModelSpec):
    """Mean and covariance of ``beta | x, y`` under ``beta ~ N(0, tau2 I)``."""
    dmat = np.asarray(dmat, dtype=float).reshape(-1, spec.p + 1)
    design = np.column_stack([np.ones(len(dmat)), dmat[:, 1:]])
    s2 = spec.sigma_noise**2
    precision = design.T @ design / s2 + np.eye(spec.p + 1) / spec.tau2
    try:
        chol = linalg.cho_factor(precision, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError("posterior precision is not positive definite") from exc
    mean = linalg.cho_solve(chol, design.T @ dmat[:, 0] / s2)
    cov = linalg.cho_solve(chol, np.eye(spec.p + 1))
    return mean, cov


def regression_posterior_step(dmat: np.ndarray, spec: RegressionModelSpec, rng=None) -> np.ndarray:
    """One draw from the conjugate normal posterior of the coefficients."""
    dmat = np.asarray(dmat, dtype=float).reshape(-1, spec.p + 1)
    rng = np.random.default_rng(rng)
    design = np.column_stack([np.ones(len(dmat)), dmat[:, 1:]])
    s2 = spec.sigma_noise**2
    precision = design.T @ design / s2 + np.eye(spec.p + 1) / spec.tau2
    try:
        lower = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise NumericError("posterior precision is not positive definite") from exc
    rhs = design.T @ dmat[:, 0] / s2
    mean = linalg.cho_solve((lower, True), rhs)
    z = rng.standard_normal(spec.p + 1)
    return mean + linalg.solve_triangular(lower.T, z, lower=False)


def laplace_regression_loglik(sdp, sx, scale: float) -> float:
    sdp, sx = np.asarray(sdp, dtype=float), np.asarray(sx, dtype=float)
    if sdp.shape != sx.shape:
        raise InputError(f"shape mismatch: {sdp.shape} vs {sx.shape}")
    return float(np.sum(laplace_logdensity(sdp - sx, 0.0, scale)))


@numba.njit
def _laplace_logdens(sdp, sx, params):
    # params: scale, log(2 * scale)
    out = 0.0
    for k in range(sdp.shape[0]):
        out -= abs(sdp[k] - sx[k]) / params[0] + params[1]
    return out


def regression_model(spec: RegressionModelSpec = None) -> PrivacyModel:
    spec = RegressionModelSpec() if spec is None else spec
    bound, scale = spec.clamp_bound, spec.noise_scale

    return PrivacyModel(
        posterior_step=lambda dmat, theta, rng: regression_posterior_step(dmat, spec, rng),
        latent_sampler=lambda theta, rng: regression_latent(theta, spec, rng),
        privacy_logdensity=lambda sdp, sx: laplace_regression_loglik(sdp, sx, scale),
        record_statistic=lambda xi, sdp, i: regression_record_stat(xi, bound, spec.p),
        batch_statistic=lambda x, sdp: regression_record_stats(x, bound),
        compiled_logdensity=_laplace_logdens,
        compiled_params=np.array([scale, np.log(2.0 * scale)]),
        npar=spec.p + 1,
        varnames=tuple(f"beta{k}" for k in range(spec.p + 1)),
    )


def simulate_regression_release(spec: RegressionModelSpec, beta=TRUE_BETA, rng=None):
    """Confidential records and their Laplace-perturbed clamped statistic."""
    rng = np.random.default_rng(rng)
    dmat = regression_latent(beta, spec, rng)
    s = regression_record_stats(dmat, spec.clamp_bound).sum(axis=0)
    return dmat, laplace_mechanism(s, spec.sensitivity, spec.epsilon, rng)


# ---------------------------------------------------------------------------
# Naive baseline
# ---------------------------------------------------------------------------


def nearest_spd(a: np.ndarray, jitter: float = 1e-8) -> np.ndarray:
    """Nearest symmetric positive definite matrix in Frobenius norm.

    Symmetrises, then raises eigenvalues to ``jitter * max_eigenvalue``
    (Higham's projection onto the PSD cone plus a small floor so the result is
    invertible).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix must be finite")
    sym = (a + a.T) / 2.0
    eigval, eigvec = np.linalg.eigh(sym)
    top = eigval.max()
    floor = jitter * top if top > 0 else jitter
    out = (eigvec * np.maximum(eigval, floor)) @ eigvec.T
    return (out + out.T) / 2.0


def unpack_gram(sdp, n: int, p: int = 2):
    """Rebuild ``(d^T y, y^T y, d^T d)`` from a released statistic."""
    sdp = np.asarray(sdp, dtype=float)
    q = p + 1
    rows, cols = _upper_tri_colmajor(q)
    gram = np.zeros((q, q))
    gram[0, 0] = n
    gram[rows, cols] = sdp[q + 1 :]
    gram[cols, rows] = sdp[q + 1 :]
    return sdp[:q], sdp[q], gram


def naive_regression_posterior(sdp, n: int, sigma_noise: float = 2.0, p: int = 2):
    """Flat-prior normal posterior that treats the noisy statistic as exact.

    Returns ``(beta_hat, covariance)`` on the clamped, rescaled data scale.
    """
    xty, _, gram = unpack_gram(sdp, n, p)
    try:
        inv = np.linalg.solve(gram, np.eye(p + 1))
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(gram)
    repaired = nearest_spd(inv)
    return repaired @ xty, sigma_noise**2 * repaired


def naive_regression_posterior_data_scale(sdp, n: int, sigma_noise: float = 2.0, bound: float = 10.0, p: int = 2):
    """Naive posterior with consistent units, reported on the data scale.

    The released Gram blocks are built from ``z / bound``, so the response
    noise on that scale has sd ``sigma_noise / bound``. The rescaled intercept
    is ``beta0 / bound`` and slopes are unchanged, so mapping back multiplies
    the intercept row and column by ``bound``.
    """
    beta_c, cov_c = naive_regression_posterior(sdp, n, sigma_noise / bound, p)
    scale = np.ones(p + 1)
    scale[0] = bound
    return beta_c * scale, cov_c * np.outer(scale, scale)
