"""Bayesian reconstruction of Dirac streams from noisy Gaussian-filtered samples."""

from ._backend import compiled_available, default_backend
from .annihilator import annihilate_reconstruct
from .gibbs import ChainTrace, GibbsConfig, GibbsState, run_gibbs
from .llse import llse_refine
from .model import (
    INFINITE_SNR,
    AcquisitionConfig,
    FriSignal,
    NoiseSpec,
    SampleVector,
    add_noise,
    reconstruction_error,
    signal_inner_product,
    snr_db,
    synthesize_samples,
)

__version__ = "0.1.0"

__all__ = [
    "INFINITE_SNR",
    "AcquisitionConfig",
    "ChainTrace",
    "FriSignal",
    "GibbsConfig",
    "GibbsState",
    "NoiseSpec",
    "SampleVector",
    "add_noise",
    "annihilate_reconstruct",
    "compiled_available",
    "default_backend",
    "llse_refine",
    "reconstruction_error",
    "run_gibbs",
    "signal_inner_product",
    "snr_db",
    "synthesize_samples",
]
