"""Data-augmentation MCMC for posteriors given privatized statistics.

The sampler targets ``p(theta, x | s_dp)`` by alternating

1. ``theta ~ p(theta | x)`` through the model's ``posterior_step``, and
2. a Metropolis-within-Gibbs scan over the confidential records: record
   ``i`` gets a proposal ``x_i* ~ f(. | theta)`` that is accepted with
   probability ``min(1, eta(s_dp | x*) / eta(s_dp | x))``.

Because the mechanism density depends on the database only through the
record-additive total ``sum_i t_i(x_i, s_dp)``, each proposal costs one
subtraction and one addition on that total instead of a full recomputation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .exceptions import ConfigError, InputError, NumericError, PrivaugError

ProgressHook = Callable[[int, int], None]

# Relative tolerance for the record-additivity cache check.
CACHE_RTOL = 1e-10


class SamplerError(PrivaugError, RuntimeError):
    """A chain failed while sampling.

    ``chain`` and ``record`` locate the failure when known.
    """

    def __init__(self, message: str, chain: Optional[int] = None, record: Optional[int] = None):
        super().__init__(message)
        self.chain = chain
        self.record = record


@dataclass(frozen=True)
class PrivacyModel:
    """Everything the sampler needs to know about data and mechanism.

    Attributes
    ----------
    posterior_step : callable ``(x, theta, rng) -> theta``
        One draw from ``p(theta | x)``. ``theta`` is the current value, for
        samplers that need a starting point.
    latent_sampler : callable ``(theta, rng) -> x``
        Draws a full ``n x p`` database from ``f(. | theta)``.
    privacy_logdensity : callable ``(sdp, sx) -> float``
        ``log eta(sdp | x)`` written as a function of the record-additive
        total ``sx``. Additive constants may be dropped.
    record_statistic : callable ``(xi, sdp, i) -> array``
        The per-record term ``t_i(x_i, sdp)``; ``i`` is 0-based.
    npar : int
        Dimension of ``theta``.
    varnames : sequence of str, optional
        Parameter names; defaults to ``theta1 ... thetaK``.
    record_proposer : callable ``(theta, rng) -> row``, optional
        Draws one record from ``f(. | theta)``. When omitted, each scan draws
        all ``n`` proposals at once with ``latent_sampler``, which is valid
        when records are i.i.d. given ``theta``.
    batch_statistic : callable ``(x, sdp) -> array``, optional
        Vectorised ``record_statistic`` returning shape ``(n, *stat_shape)``.
    compiled_logdensity : numba function ``(sdp, sx, params) -> float``, optional
        Same value as ``privacy_logdensity`` on flattened float arrays. Enables
        the compiled scan.
    compiled_params : array
        Extra parameters passed to ``compiled_logdensity``.
    """

    posterior_step: Callable
    latent_sampler: Callable
    privacy_logdensity: Callable
    record_statistic: Callable
    npar: int
    varnames: Optional[Sequence[str]] = None
    record_proposer: Optional[Callable] = None
    batch_statistic: Optional[Callable] = None
    compiled_logdensity: Optional[Callable] = None
    compiled_params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if int(self.npar) != self.npar or self.npar < 1:
            raise ConfigError(f"npar must be a positive integer, got {self.npar!r}")
        if self.varnames is None:
            object.__setattr__(self, "varnames", tuple(f"theta{k + 1}" for k in range(self.npar)))
        else:
            object.__setattr__(self, "varnames", tuple(str(v) for v in self.varnames))
        if len(self.varnames) != self.npar:
            raise ConfigError(f"varnames has {len(self.varnames)} entries but npar is {self.npar}")
        object.__setattr__(self, "compiled_params", np.ascontiguousarray(self.compiled_params, dtype=float))

    def with_logdensity(self, privacy_logdensity: Callable) -> "PrivacyModel":
        """Copy of the model with a different mechanism and no compiled path."""
        return PrivacyModel(
            posterior_step=self.posterior_step,
            latent_sampler=self.latent_sampler,
            privacy_logdensity=privacy_logdensity,
            record_statistic=self.record_statistic,
            npar=self.npar,
            varnames=self.varnames,
            record_proposer=self.record_proposer,
            batch_statistic=self.batch_statistic,
        )

    def without_compiled(self) -> "PrivacyModel":
        return self.with_logdensity(self.privacy_logdensity)


@dataclass(frozen=True)
class SamplerConfig:
    init_par: np.ndarray
    niter: int = 2000
    warmup: Optional[int] = None
    chains: int = 1
    seed: int = 0

    def __post_init__(self):
        init = np.atleast_1d(np.asarray(self.init_par, dtype=float))
        if init.ndim != 1 or not np.all(np.isfinite(init)):
            raise ConfigError("init_par must be a finite vector")
        object.__setattr__(self, "init_par", init)
        if int(self.niter) != self.niter or self.niter < 1:
            raise ConfigError(f"niter must be a positive integer, got {self.niter!r}")
        warmup = self.niter // 2 if self.warmup is None else self.warmup
        if int(warmup) != warmup or not (0 <= warmup < self.niter):
            raise ConfigError(f"warmup must satisfy 0 <= warmup < niter, got warmup={warmup!r}, niter={self.niter}")
        object.__setattr__(self, "warmup", int(warmup))
        if int(self.chains) != self.chains or self.chains < 1:
            raise ConfigError(f"chains must be a positive integer, got {self.chains!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

    @property
    def ndraws(self) -> int:
        return self.niter - self.warmup


@dataclass(frozen=True)
class DrawsMatrix:
    """Posterior draws with shape ``(chains, draws, npar)``."""

    values: np.ndarray
    varnames: tuple

    @property
    def nchains(self) -> int:
        return self.values.shape[0]

    @property
    def ndraws(self) -> int:
        return self.values.shape[1]

    def variable(self, name: str) -> np.ndarray:
        """``(chains, draws)`` array for one parameter."""
        return self.values[:, :, self.varnames.index(name)]

    def pooled(self) -> np.ndarray:
        return self.values.reshape(-1, self.values.shape[2])


@dataclass(frozen=True)
class SamplerOutput:
    draws: DrawsMatrix
    acceptance: np.ndarray  # (chains, niter)


# ---------------------------------------------------------------------------
# Single-step pieces
# ---------------------------------------------------------------------------


def mh_accept_logratio(log_eta_new: float, log_eta_old: float) -> float:
    """``min(1, exp(new - old))``, moving unconditionally off an impossible state."""
    if math.isnan(log_eta_new) or math.isnan(log_eta_old):
        raise NumericError("log-density is NaN")
    if log_eta_new == -math.inf and log_eta_old == -math.inf:
        return 1.0
    diff = log_eta_new - log_eta_old
    return 1.0 if diff >= 0.0 else math.exp(diff)


def update_statistic(total: np.ndarray, old_i: np.ndarray, new_i: np.ndarray) -> np.ndarray:
    total, old_i, new_i = (np.asarray(a, dtype=float) for a in (total, old_i, new_i))
    if not (total.shape == old_i.shape == new_i.shape):
        raise InputError(f"shape mismatch: {total.shape}, {old_i.shape}, {new_i.shape}")
    return total - old_i + new_i


def record_statistics(model: PrivacyModel, x: np.ndarray, sdp: np.ndarray) -> np.ndarray:
    """Per-record statistics stacked into an array of shape ``(n, *stat_shape)``."""
    if model.batch_statistic is not None:
        return np.asarray(model.batch_statistic(x, sdp), dtype=float)
    rows = []
    for i in range(x.shape[0]):
        try:
            rows.append(np.asarray(model.record_statistic(x[i], sdp, i), dtype=float))
        except PrivaugError:
            raise
        except Exception as exc:
            raise SamplerError(f"record_statistic failed at record {i}: {exc}", record=i) from exc
    shape = rows[0].shape
    for i, row in enumerate(rows):
        if row.shape != shape:
            raise SamplerError(f"record_statistic shape {row.shape} at record {i} differs from {shape}", record=i)
    return np.stack(rows)


def full_statistic(model: PrivacyModel, x: np.ndarray, sdp: np.ndarray) -> np.ndarray:
    """``sum_i t_i(x_i, sdp)`` computed from scratch."""
    return record_statistics(model, x, sdp).sum(axis=0)


def _propose(model: PrivacyModel, theta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if model.record_proposer is None:
        proposals = np.ascontiguousarray(model.latent_sampler(theta, rng), dtype=float)
    else:
        proposals = np.stack([np.asarray(model.record_proposer(theta, rng), dtype=float) for _ in range(n)])
    if proposals.ndim != 2 or proposals.shape[0] != n:
        raise SamplerError(f"proposals have shape {proposals.shape}, expected ({n}, p)")
    return proposals


def sweep_latent(
    model: PrivacyModel,
    x: np.ndarray,
    theta: np.ndarray,
    sdp: np.ndarray,
    total: np.ndarray,
    rng: np.random.Generator,
):
    """One Metropolis-within-Gibbs scan over the records, in order ``0..n-1``.

    Returns the updated database, the updated total and the mean of the ``n``
    acceptance probabilities. Inputs are not modified.
    """
    x = np.array(x, dtype=float)
    total = np.array(total, dtype=float)
    n = x.shape[0]
    proposals = _propose(model, theta, n, rng)
    uniforms = rng.random(n)
    stats_cur = record_statistics(model, x, sdp)
    stats_new = record_statistics(model, proposals, sdp)

    if model.compiled_logdensity is not None:
        flat_total = np.ascontiguousarray(total.ravel())
        mean_alpha, bad = _kernels.mh_sweep(
            model.compiled_logdensity,
            model.compiled_params,
            np.ascontiguousarray(np.asarray(sdp, dtype=float).ravel()),
            flat_total,
            x,
            proposals,
            np.ascontiguousarray(stats_cur.reshape(n, -1)),
            np.ascontiguousarray(stats_new.reshape(n, -1)),
            uniforms,
        )
        if bad >= 0:
            raise SamplerError(f"privacy log-density is NaN at record {bad}", record=int(bad))
        return x, flat_total.reshape(total.shape), float(mean_alpha)

    logdens = model.privacy_logdensity
    lp_cur = _call_logdensity(logdens, sdp, total, None)
    alpha_sum = 0.0
    for i in range(n):
        cand = total - stats_cur[i] + stats_new[i]
        lp_new = _call_logdensity(logdens, sdp, cand, i)
        try:
            alpha = mh_accept_logratio(lp_new, lp_cur)
        except NumericError as exc:
            raise SamplerError(f"{exc} at record {i}", record=i) from exc
        alpha_sum += alpha
        if uniforms[i] < alpha:
            x[i] = proposals[i]
            total = cand
            lp_cur = lp_new
    return x, total, alpha_sum / n


def _call_logdensity(logdens, sdp, sx, record):
    try:
        return float(logdens(sdp, sx))
    except PrivaugError:
        raise
    except Exception as exc:
        where = "initial state" if record is None else f"record {record}"
        raise SamplerError(f"privacy_logdensity failed at {where}: {exc}", record=record) from exc


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Random stream for one chain, independent of how many chains run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chain),))))


def initial_database(model: PrivacyModel, init_par: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    init_par = np.asarray(init_par, dtype=float)
    if init_par.shape != (model.npar,):
        raise ConfigError(f"init_par has length {init_par.size}, model expects npar={model.npar}")
    try:
        x = model.latent_sampler(init_par, rng)
    except PrivaugError as exc:
        raise ConfigError(f"latent_sampler failed at init_par: {exc}") from exc
    if not isinstance(x, np.ndarray) or x.ndim != 2 or not np.issubdtype(x.dtype, np.number):
        raise ConfigError("latent_sampler(init_par) must return a numeric n x p matrix")
    if x.shape[0] < 1 or not np.all(np.isfinite(x)):
        raise ConfigError("latent_sampler(init_par) returned an empty or non-finite matrix")
    return x.astype(float)


def _check_sdp(model: PrivacyModel, x: np.ndarray, sdp: np.ndarray) -> np.ndarray:
    """Evaluate the mechanism once at the initial database.

    The statistic need not have the shape of ``sdp`` (a model may reduce the
    release to a smaller sufficient total), so the check is that both
    callbacks accept the release and return something usable.
    """
    sdp = np.asarray(sdp, dtype=float)
    try:
        total = full_statistic(model, x, sdp)
        value = float(model.privacy_logdensity(sdp, total))
    except PrivaugError as exc:
        raise ConfigError(f"sdp is incompatible with the model: {exc}") from exc
    except Exception as exc:
        raise ConfigError(f"sdp is incompatible with the model: {exc}") from exc
    if math.isnan(value):
        raise ConfigError("privacy log-density is NaN at the initial database")
    return sdp


def sample_chain(
    model: PrivacyModel,
    sdp: np.ndarray,
    init_par: np.ndarray,
    niter: int,
    warmup: int,
    rng: np.random.Generator,
    chain: int = 0,
    progress: Optional[ProgressHook] = None,
    progress_every: int = 100,
    check_every: int = 0,
):
    """Run one chain.

    Returns ``(draws, acceptance)`` with shapes ``(niter - warmup, npar)`` and
    ``(niter,)``. The draw kept for an iteration is the ``theta`` sampled at
    its start, i.e. the value the latent scan conditioned on.

    ``check_every > 0`` recomputes the record-additive total from scratch
    every that many iterations and raises if the cached value drifted.
    """
    x = initial_database(model, init_par, rng)
    sdp = _check_sdp(model, x, sdp)
    theta = np.asarray(init_par, dtype=float)
    total = full_statistic(model, x, sdp)

    draws = np.empty((niter - warmup, model.npar))
    acceptance = np.empty(niter)
    for it in range(niter):
        theta = np.asarray(model.posterior_step(x, theta, rng), dtype=float)
        if theta.shape != (model.npar,) or not np.all(np.isfinite(theta)):
            raise SamplerError(f"posterior_step returned {theta!r} at iteration {it + 1}", chain=chain)
        x, total, acceptance[it] = sweep_latent(model, x, theta, sdp, total, rng)
        if it >= warmup:
            draws[it - warmup] = theta
        if check_every and (it + 1) % check_every == 0:
            check_cache(model, x, sdp, total)
        if progress is not None and ((it + 1) % progress_every == 0 or it + 1 == niter):
            progress(chain, it + 1)
    return draws, acceptance


def check_cache(model: PrivacyModel, x: np.ndarray, sdp: np.ndarray, total: np.ndarray) -> None:
    fresh = full_statistic(model, x, sdp)
    scale = max(float(np.max(np.abs(fresh), initial=0.0)), 1.0)
    err = float(np.max(np.abs(fresh - total), initial=0.0))
    if err > CACHE_RTOL * scale:
        raise NumericError(f"cached statistic drifted from recomputation by {err:.3g}")


def sample_private_posterior(
    model: PrivacyModel,
    sdp: np.ndarray,
    config: SamplerConfig,
    threads: int = 1,
    progress: Optional[ProgressHook] = None,
    progress_every: int = 100,
    check_every: int = 0,
) -> SamplerOutput:
    """Run ``config.chains`` independent chains and stack the results.

    Chain ``c`` uses the stream ``chain_rng(config.seed, c)``, so the output
    does not depend on ``threads`` or on scheduling.
    """
    # Fail on bad init before any chain starts.
    probe = initial_database(model, config.init_par, chain_rng(config.seed, 0))
    _check_sdp(model, probe, sdp)

    def run(c: int):
        try:
            return sample_chain(
                model,
                sdp,
                config.init_par,
                config.niter,
                config.warmup,
                chain_rng(config.seed, c),
                chain=c,
                progress=progress,
                progress_every=progress_every,
                check_every=check_every,
            )
        except SamplerError as exc:
            raise SamplerError(f"chain {c}: {exc}", chain=c, record=exc.record) from exc
        except Exception as exc:
            raise SamplerError(f"chain {c}: {exc}", chain=c) from exc

    if threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=min(threads, config.chains)) as pool:
            results = list(pool.map(run, range(config.chains)))
    else:
        results = [run(c) for c in range(config.chains)]

    draws = np.stack([r[0] for r in results])
    acceptance = np.stack([r[1] for r in results])
    return SamplerOutput(DrawsMatrix(draws, tuple(model.varnames)), acceptance)
