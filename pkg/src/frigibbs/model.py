"""Acquisition model for Dirac streams filtered by a Gaussian kernel.

A stream of ``K`` weighted Diracs is convolved with a Gaussian of width
``sigma_h``, sampled every ``T`` seconds at ``n = 0 .. N-1`` and corrupted
by white Gaussian noise.  The quality metrics live here as well: the
sample-domain SNR and the normalized reconstruction error between two
filtered signals, the latter evaluated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

#: Returned by :func:`snr_db` when the noise energy is exactly zero.
INFINITE_SNR = math.inf


@dataclass(frozen=True)
class FriSignal:
    """Weights ``c`` and locations ``t`` (seconds) of ``K`` Diracs."""

    c: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float)).copy()
        t = np.atleast_1d(np.asarray(self.t, dtype=float)).copy()
        if c.ndim != 1 or c.shape != t.shape or c.size == 0:
            raise InvalidInputError(
                f"weights and locations must be equal-length 1-D vectors, got {c.shape} and {t.shape}"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(c))):
            raise InvalidInputError("weights and locations must be finite")
        c.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "t", t)

    @property
    def K(self) -> int:
        return self.c.size

    def canonical(self) -> "FriSignal":
        """Return the same signal with pairs sorted by location."""
        order = np.argsort(self.t, kind="stable")
        return FriSignal(self.c[order], self.t[order])

    def scaled(self, factor: float) -> "FriSignal":
        return FriSignal(self.c * factor, self.t)

    def __eq__(self, other):
        if not isinstance(other, FriSignal):
            return NotImplemented
        return np.array_equal(self.c, other.c) and np.array_equal(self.t, other.t)

    def __hash__(self):
        return hash((self.c.tobytes(), self.t.tobytes()))


@dataclass(frozen=True)
class AcquisitionConfig:
    sigma_h: float
    T: float
    N: int

    def __post_init__(self):
        if not (self.sigma_h > 0 and math.isfinite(self.sigma_h)):
            raise InvalidConfigError(f"sigma_h must be positive, got {self.sigma_h}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InvalidConfigError(f"T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidConfigError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "sigma_h", float(self.sigma_h))
        object.__setattr__(self, "T", float(self.T))

    @property
    def sample_times(self) -> np.ndarray:
        return np.arange(self.N) * self.T

    @property
    def window(self) -> tuple[float, float]:
        """Observation window ``[0, (N-1)T]``; the location domain."""
        return 0.0, (self.N - 1) * self.T


@dataclass(frozen=True)
class SampleVector:
    values: np.ndarray
    kind: str = "noisy"

    def __post_init__(self):
        if self.kind not in ("noiseless", "noisy"):
            raise InvalidInputError(f"unknown sample kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float).copy()
        if v.ndim != 1:
            raise InvalidInputError("samples must be a 1-D vector")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_e: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma_e >= 0:
            raise InvalidConfigError(f"sigma_e must be >= 0, got {self.sigma_e}")


def as_values(y) -> np.ndarray:
    """Plain float array view of a SampleVector or array-like."""
    if isinstance(y, SampleVector):
        return y.values
    return np.asarray(y, dtype=float)


def gaussian_kernel(tau, sigma_h: float):
    """Gaussian sampling kernel ``exp(-tau^2 / (2 sigma_h^2))``."""
    if not sigma_h > 0:
        raise InvalidConfigError(f"sigma_h must be positive, got {sigma_h}")
    tau = np.asarray(tau, dtype=float)
    out = np.exp(-(tau * tau) / (2.0 * sigma_h * sigma_h))
    return float(out) if out.ndim == 0 else out


def synthesize_samples(
    sig: FriSignal,
    acq: AcquisitionConfig,
    kernel: Callable | None = None,
) -> SampleVector:
    """Noiseless samples ``z[n] = sum_k c_k h(nT - t_k)``.

    ``kernel(tau, sigma_h)`` defaults to :func:`gaussian_kernel`.
    """
    kernel = gaussian_kernel if kernel is None else kernel
    tau = acq.sample_times[:, None] - sig.t[None, :]
    z = kernel(tau, acq.sigma_h) @ sig.c
    return SampleVector(z, kind="noiseless")


def noise_generator(seed: int) -> np.random.Generator:
    """Counter-based stream used for every noise draw."""
    return np.random.Generator(np.random.Philox(seed))


def add_noise(z, noise: NoiseSpec) -> SampleVector:
    z = as_values(z)
    if noise.sigma_e == 0:
        return SampleVector(z, kind="noisy")
    e = noise_generator(noise.seed).standard_normal(z.size)
    return SampleVector(z + noise.sigma_e * e, kind="noisy")


def snr_db(z, y) -> float:
    """Sample-domain SNR in dB; :data:`INFINITE_SNR` when ``y == z``."""
    z = as_values(z)
    y = as_values(y)
    if z.shape != y.shape:
        raise InvalidInputError(f"length mismatch: {z.shape} vs {y.shape}")
    noise = float(np.sum((z - y) ** 2))
    if noise == 0.0:
        return INFINITE_SNR
    return 10.0 * math.log10(float(np.sum(z * z)) / noise)


def signal_inner_product(a: FriSignal, b: FriSignal, sigma_h: float) -> float:
    """``integral z_a(t) z_b(t) dt`` for the Gaussian-filtered streams.

    The product of two Gaussians of width ``sigma_h`` integrates to
    ``sigma_h sqrt(pi) exp(-d^2 / (4 sigma_h^2))``.
    """
    if not sigma_h > 0:
        raise InvalidConfigError(f"sigma_h must be positive, got {sigma_h}")
    d = a.t[:, None] - b.t[None, :]
    cross = np.exp(-(d * d) / (4.0 * sigma_h * sigma_h))
    return float(sigma_h * math.sqrt(math.pi) * (a.c @ cross @ b.c))


def reconstruction_error(est: FriSignal, truth: FriSignal, sigma_h: float) -> float:
    """Normalized energy of ``z_est - z`` relative to the energy of ``z``."""
    energy = signal_inner_product(truth, truth, sigma_h)
    if not energy > 0:
        raise InvalidInputError("reference signal has zero energy")
    # merge coincident locations so shared Diracs cancel exactly
    t, inv = np.unique(np.concatenate([est.t, truth.t]), return_inverse=True)
    c = np.bincount(inv, weights=np.concatenate([est.c, -truth.c]), minlength=t.size)
    if not np.any(c):
        return 0.0
    # cancellation can still leave a tiny negative value
    return max(signal_inner_product(FriSignal(c, t), FriSignal(c, t), sigma_h) / energy, 0.0)


def random_signal(
    rng: np.random.Generator,
    K: int,
    support: tuple[float, float],
    min_separation: float = 0.0,
    amplitude: tuple[float, float] = (1.0, 1.0),
    random_sign: bool = False,
) -> FriSignal:
    """Draw a signal with locations uniform on ``support`` and pairwise
    separation at least ``min_separation``.

    Locations are drawn on the shrunken interval and re-expanded, which is
    uniform over the feasible configurations and never loops.
    """
    lo, hi = support
    slack = (hi - lo) - (K - 1) * min_separation
    if slack < 0:
        raise InvalidConfigError(
            f"cannot place {K} Diracs {min_separation} apart in [{lo}, {hi}]"
        )
    t = np.sort(rng.uniform(0.0, slack, K)) + lo + min_separation * np.arange(K)
    c = rng.uniform(amplitude[0], amplitude[1], K)
    if random_sign:
        c = c * rng.choice([-1.0, 1.0], K)
    return FriSignal(c, t)
