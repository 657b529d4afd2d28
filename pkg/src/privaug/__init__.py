"""Bayesian inference from differentially private statistics by data augmentation MCMC."""

from .engine import (
    DrawsMatrix,
    PrivacyModel,
    SamplerConfig,
    SamplerError,
    SamplerOutput,
    sample_chain,
    sample_private_posterior,
    sweep_latent,
)
from .exceptions import CapacityError, ConfigError, InputError, NumericError, ParameterError, PrivaugError

__version__ = "0.1.0"
