"""Posterior summaries, convergence diagnostics and mixing analysis.

Rhat and effective sample sizes follow the rank-normalized split-chain
formulation of Vehtari et al. (2021). Each diagnostic takes a
``(chains, draws)`` array for a single variable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List

import numpy as np
from scipy import stats

from .engine import DrawsMatrix
from .exceptions import InputError, ParameterError

SUMMARY_COLUMNS = ("variable", "mean", "median", "sd", "mad", "q5", "q95", "rhat", "ess_bulk", "ess_tail")

# Effective sample size is capped at this multiple of the draw count.
ESS_CAP = 1.5
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class SummaryRow:
    variable: str
    mean: float
    median: float
    sd: float
    mad: float
    q5: float
    q95: float
    rhat: float
    ess_bulk: float
    ess_tail: float

    def as_dict(self) -> dict:
        return asdict(self)


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.size == 0:
        raise InputError("expected a non-empty (chains, draws) array")
    return x


def _split_chains(x: np.ndarray) -> np.ndarray:
    half = x.shape[1] // 2
    # Odd lengths drop the last draw.
    return np.vstack([x[:, :half], x[:, half : 2 * half]])


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _rhat(x: np.ndarray) -> float:
    n = x.shape[1]
    chain_var = x.var(axis=1, ddof=1)
    within = chain_var.mean()
    between = n * x.mean(axis=1).var(ddof=1)
    if within == 0:
        return math.nan if between == 0 else math.inf
    return math.sqrt(((n - 1) / n * within + between / n) / within)


def split_rhat(x) -> float:
    """Rank-normalized split-chain potential scale reduction.

    Returns NaN for a single chain or fewer than four draws per chain.
    """
    x = _as_chains(x)
    if x.shape[0] < 2 or x.shape[1] < 4:
        return math.nan
    if np.all(x == x.flat[0]):
        return math.nan
    return _rhat(_rank_normalize(_split_chains(x)))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Autocovariance of each row by FFT, biased (divided by n)."""
    n = x.shape[1]
    centered = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :n]
    return acov / n


def _ess(x: np.ndarray) -> float:
    m, n = x.shape
    if n < 4:
        return math.nan
    acov = _autocovariance(x)
    mean_var = acov[:, 0].mean() * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return math.nan

    rho = np.zeros(n)
    rho[0] = 1.0
    even, odd = 1.0, 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = odd
    # Initial positive sequence on sums of adjacent pairs.
    t = 1
    while t < n - 3 and even + odd > 0.0:
        even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if even + odd >= 0.0:
            rho[t + 1], rho[t + 2] = even, odd
        t += 2
    max_t = t - 2
    if even > 0:
        rho[max_t + 1] = even
    # Initial monotone sequence.
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2

    total = m * n
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + rho[max_t + 1 : max_t + 2].sum()
    tau = max(tau, 1.0 / ESS_CAP)
    return total / tau


def ess_bulk(x) -> float:
    x = _as_chains(x)
    if x.shape[1] < 4 or np.all(x == x.flat[0]):
        return math.nan
    return _ess(_rank_normalize(_split_chains(x)))


def ess_tail(x) -> float:
    """Minimum of the ESS of the 5% and 95% quantile indicators."""
    x = _as_chains(x)
    if x.shape[1] < 4 or np.all(x == x.flat[0]):
        return math.nan
    lo, hi = np.quantile(x, [0.05, 0.95])
    values = [_ess(_split_chains((x <= q).astype(float))) for q in (lo, hi)]
    return float(np.nanmin(values)) if not np.all(np.isnan(values)) else math.nan


def summarize_variable(name: str, x) -> SummaryRow:
    x = _as_chains(x)
    flat = x.ravel()
    median = float(np.median(flat))
    q5, q95 = np.quantile(flat, [0.05, 0.95])
    return SummaryRow(
        variable=name,
        mean=float(flat.mean()),
        median=median,
        sd=float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
        mad=float(MAD_SCALE * np.median(np.abs(flat - median))),
        q5=float(q5),
        q95=float(q95),
        rhat=split_rhat(x),
        ess_bulk=ess_bulk(x),
        ess_tail=ess_tail(x),
    )


def summarize(draws: DrawsMatrix) -> List[SummaryRow]:
    values = np.asarray(draws.values, dtype=float)
    if values.size == 0:
        raise InputError("no draws to summarize")
    return [summarize_variable(name, values[:, :, k]) for k, name in enumerate(draws.varnames)]


def format_table(rows: List[SummaryRow]) -> str:
    """Aligned plain-text rendering of a summary."""
    cells = [list(SUMMARY_COLUMNS)]
    for row in rows:
        d = row.as_dict()
        cells.append([d["variable"]] + [_fmt_short(d[c]) for c in SUMMARY_COLUMNS[1:]])
    widths = [max(len(r[j]) for r in cells) for j in range(len(SUMMARY_COLUMNS))]
    lines = []
    for r in cells:
        parts = [r[0].ljust(widths[0])] + [r[j].rjust(widths[j]) for j in range(1, len(r))]
        lines.append("  ".join(parts))
    return "\n".join(lines) + "\n"


def _fmt_short(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return f"{v:.3g}" if abs(v) < 1e4 else f"{v:.0f}"


# ---------------------------------------------------------------------------
# Mixing under privacy noise
# ---------------------------------------------------------------------------


def fraction_missing_info(epsilon: float, sigma: float) -> float:
    """Fraction of missing information ``1 - sigma^2 / (sigma^2 + epsilon^-2)``.

    This is the geometric convergence rate of the two-block Gibbs sampler in
    the Gaussian toy model: a single record ``x ~ N(theta, sigma^2)`` released
    as ``s = x + N(0, epsilon^-2)``, with a flat prior on ``theta``.
    """
    epsilon, sigma = float(epsilon), float(sigma)
    if not (epsilon > 0 and sigma > 0):
        raise ParameterError("epsilon and sigma must be positive")
    noise_var = epsilon**-2
    return noise_var / (sigma * sigma + noise_var)


def toy_model_chain(epsilon: float, sigma: float, s: float, niter: int, rng=None, theta0: float = None) -> np.ndarray:
    """Theta series from the toy two-block sampler.

    Alternates ``x | theta, s ~ N(mu, tau^2)`` (precision-weighted combination
    of the release and ``theta``) and ``theta | x ~ N(x, sigma^2)``.
    """
    fraction_missing_info(epsilon, sigma)
    if int(niter) != niter or niter < 1:
        raise ParameterError(f"niter must be a positive integer, got {niter!r}")
    rng = np.random.default_rng(rng)
    prec_s, prec_theta = epsilon**2, 1.0 / sigma**2
    tau = math.sqrt(1.0 / (prec_s + prec_theta))
    w_s = prec_s / (prec_s + prec_theta)
    z = rng.standard_normal((int(niter), 2))
    out = np.empty(int(niter))
    theta = float(s) if theta0 is None else float(theta0)
    for it in range(int(niter)):
        x = w_s * s + (1.0 - w_s) * theta + tau * z[it, 0]
        theta = x + sigma * z[it, 1]
        out[it] = theta
    return out


def lag1_autocorrelation(series) -> float:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise InputError("series must be a vector of length >= 3")
    c = x - x.mean()
    denom = float(c @ c)
    if denom == 0:
        return 0.0
    return float(c[:-1] @ c[1:]) / denom
