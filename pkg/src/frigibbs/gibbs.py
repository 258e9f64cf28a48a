"""Gibbs sampler for the weights, locations and noise level of a Dirac stream.

The target is the posterior of ``theta = (c, t, sigma_e)`` under white
Gaussian noise and the scale prior ``p(sigma_e) ~ 1/sigma_e``.  One sweep
draws ``c_1..c_K`` from their Gaussian conditionals, then ``t_1..t_K`` by
rejection sampling from their (non-standard) conditionals, then
``sigma_e`` from a square-root inverted-gamma.  Every draw is used by the
draws that follow it in the same sweep.

:func:`gibbs_sweep` is the readable reference implementation built on the
public conditionals.  :func:`run_gibbs` dispatches whole chains to the
compiled kernel when it is available and to :func:`gibbs_sweep` otherwise;
both consume the generator identically.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .distributions import (
    DEFAULT_GRID_POINTS,
    DEFAULT_MAX_ATTEMPTS,
    DEFAULT_SAFETY,
    DEFAULT_UNIFORM_WEIGHT,
    SamplerStats,
    SqrtInvGammaParams,
    build_rejection_plan,
    rejection_sample,
    sample_gaussian,
    sample_sqrt_inv_gamma,
)
from .errors import InvalidConfigError, InvalidInputError
from .model import AcquisitionConfig, FriSignal, as_values

#: Floor applied to the scale of the noise conditional when the fit is exact.
LAMBDA_FLOOR = 1e-30

#: How kept states are labelled before averaging: ``"sort"`` orders each
#: state's components by location, ``"none"`` averages the raw iterates.
ALIGNMENTS = ("sort", "none")


@dataclass(frozen=True)
class GibbsState:
    c: np.ndarray
    t: np.ndarray
    sigma_e: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float)).copy()
        t = np.atleast_1d(np.asarray(self.t, dtype=float)).copy()
        if c.shape != t.shape or c.ndim != 1:
            raise InvalidInputError("c and t must be equal-length vectors")
        if not self.sigma_e > 0:
            raise InvalidInputError(f"sigma_e must be positive, got {self.sigma_e}")
        c.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sigma_e", float(self.sigma_e))

    @property
    def K(self) -> int:
        return self.c.size

    @classmethod
    def default(cls, K: int, sigma_e: float = 0.01) -> "GibbsState":
        """All-zero weights and locations with a small noise level."""
        return cls(np.zeros(K), np.zeros(K), sigma_e)

    def replace(self, c=None, t=None, sigma_e=None) -> "GibbsState":
        return GibbsState(
            self.c if c is None else c,
            self.t if t is None else t,
            self.sigma_e if sigma_e is None else sigma_e,
        )

    def signal(self) -> FriSignal:
        return FriSignal(self.c, self.t)


@dataclass(frozen=True)
class GibbsConfig:
    K: int
    burn_in: int = 100
    keep: int = 400
    init: GibbsState | None = None
    location_grid_points: int = DEFAULT_GRID_POINTS
    seed: int = 0
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    envelope_safety: float = DEFAULT_SAFETY
    proposal_uniform_weight: float = DEFAULT_UNIFORM_WEIGHT
    alignment: str = "sort"

    def __post_init__(self):
        if self.alignment not in ALIGNMENTS:
            raise InvalidConfigError(f"alignment must be one of {ALIGNMENTS}, got {self.alignment!r}")
        if self.K < 1:
            raise InvalidConfigError(f"K must be >= 1, got {self.K}")
        if self.burn_in < 0 or self.keep < 1:
            raise InvalidConfigError("need burn_in >= 0 and keep >= 1")
        if self.location_grid_points < 2:
            raise InvalidConfigError("location grid needs at least 2 points")
        if self.init is not None and self.init.K != self.K:
            raise InvalidConfigError(f"init has {self.init.K} components, K={self.K}")

    @property
    def initial_state(self) -> GibbsState:
        return self.init if self.init is not None else GibbsState.default(self.K)


@dataclass
class ChainTrace:
    """Per-sweep draws, burn-in included; row ``i`` is the state after sweep ``i+1``."""

    c: np.ndarray
    t: np.ndarray
    sigma_e: np.ndarray
    neg_log_likelihood: np.ndarray
    burn_in: int
    keep: int
    rejection_fallback_count: int = 0
    rejection_attempts: int = 0
    elapsed: float = 0.0
    backend: str = "python"
    alignment: str = "sort"
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.sigma_e.size

    @property
    def states(self) -> list[GibbsState]:
        return [GibbsState(c, t, s) for c, t, s in zip(self.c, self.t, self.sigma_e)]

    def mmse(self, alignment: str | None = None) -> GibbsState:
        """Componentwise average of the last ``keep`` states.

        The likelihood is invariant to relabelling the components, and a
        chain that swaps two labels mid-run would average two different
        Diracs into one.  With ``alignment="sort"`` every kept state is
        first put in location order, which is the usual identifiability
        constraint ``t_1 <= ... <= t_K``.
        """
        alignment = self.alignment if alignment is None else alignment
        if alignment not in ALIGNMENTS:
            raise InvalidConfigError(f"alignment must be one of {ALIGNMENTS}, got {alignment!r}")
        sl = slice(self.burn_in, self.burn_in + self.keep)
        c, t = self.c[sl], self.t[sl]
        if alignment == "sort":
            order = np.argsort(t, axis=1, kind="stable")
            c = np.take_along_axis(c, order, axis=1)
            t = np.take_along_axis(t, order, axis=1)
        return GibbsState(c.mean(axis=0), t.mean(axis=0), float(self.sigma_e[sl].mean()))


def _kernel_matrix(acq: AcquisitionConfig, t) -> np.ndarray:
    """``g[n, k] = exp(-(nT - t_k)^2 / (2 sigma_h^2))``."""
    d = acq.sample_times[:, None] - np.asarray(t, dtype=float)[None, :]
    return np.exp(-(d * d) / (2.0 * acq.sigma_h**2))


def _check(state: GibbsState, y: np.ndarray, acq: AcquisitionConfig):
    if y.size != acq.N:
        raise InvalidInputError(f"expected {acq.N} samples, got {y.size}")


def residual(state: GibbsState, y, acq: AcquisitionConfig) -> np.ndarray:
    y = as_values(y)
    return y - _kernel_matrix(acq, state.t) @ state.c


def log_likelihood(state: GibbsState, y, acq: AcquisitionConfig) -> float:
    """Log posterior up to a constant: ``-(N+1) log sigma - RSS / (2 sigma^2)``."""
    y = as_values(y)
    _check(state, y, acq)
    r = residual(state, y, acq)
    s = state.sigma_e
    return -(acq.N + 1) * math.log(s) - float(r @ r) / (2.0 * s * s)


def _others(k: int, state: GibbsState, y: np.ndarray, acq: AcquisitionConfig):
    """Kernel column of component ``k`` and ``y`` minus every other component."""
    g = _kernel_matrix(acq, state.t)
    mask = np.arange(state.K) != k
    partial = y - g[:, mask] @ state.c[mask]
    return g[:, k], partial


def c_conditional(k: int, state: GibbsState, y, acq: AcquisitionConfig) -> tuple[float, float]:
    """Mean and variance of the Gaussian conditional of ``c_k``."""
    y = as_values(y)
    _check(state, y, acq)
    gk, partial = _others(k, state, y, acq)
    s2 = state.sigma_e**2
    alpha = float(gk @ gk) / (2.0 * s2)
    beta = -float(gk @ partial) / s2
    return -beta / (2.0 * alpha), 1.0 / (2.0 * alpha)


def _t_log_target(k: int, state: GibbsState, y: np.ndarray, acq: AcquisitionConfig):
    _, partial = _others(k, state, y, acq)
    ck = state.c[k]
    gamma = ck * ck
    nu = -2.0 * ck * partial
    scale = -1.0 / (2.0 * state.sigma_e**2)
    n_t = acq.sample_times
    inv_2h2 = 1.0 / (2.0 * acq.sigma_h**2)

    def log_target(t):
        t = np.asarray(t, dtype=float)
        d = n_t - t[..., None]
        g = np.exp(-(d * d) * inv_2h2)
        out = scale * (gamma * np.sum(g * g, axis=-1) + g @ nu)
        return float(out) if out.ndim == 0 else out

    return log_target


def t_log_conditional(k: int, t_candidate, state: GibbsState, y, acq: AcquisitionConfig):
    """Unnormalized log conditional density of ``t_k`` at ``t_candidate``.

    Vectorized over ``t_candidate``.  Differs from :func:`log_likelihood`
    with ``t_k := t_candidate`` by a constant independent of ``t_candidate``.
    """
    y = as_values(y)
    _check(state, y, acq)
    return _t_log_target(k, state, y, acq)(t_candidate)


def sigma_conditional(state: GibbsState, y, acq: AcquisitionConfig) -> SqrtInvGammaParams:
    """Parameters of the square-root inverted-gamma conditional of ``sigma_e``."""
    y = as_values(y)
    _check(state, y, acq)
    r = residual(state, y, acq)
    lam = 0.5 * float(r @ r)
    return SqrtInvGammaParams(acq.N / 2.0, max(lam, LAMBDA_FLOOR))


def gibbs_sweep(
    state: GibbsState,
    y,
    acq: AcquisitionConfig,
    cfg: GibbsConfig,
    rng: np.random.Generator,
    stats: SamplerStats | None = None,
) -> GibbsState:
    """One full systematic-scan sweep over ``c``, then ``t``, then ``sigma_e``."""
    y = as_values(y)
    _check(state, y, acq)
    support = acq.window

    c = state.c.copy()
    for k in range(state.K):
        mean, var = c_conditional(k, state.replace(c=c), y, acq)
        c[k] = sample_gaussian(mean, var, rng)
    state = state.replace(c=c)

    t = state.t.copy()
    for k in range(state.K):
        log_target = _t_log_target(k, state.replace(t=t), y, acq)
        plan = build_rejection_plan(
            log_target,
            support,
            cfg.location_grid_points,
            cfg.envelope_safety,
            cfg.max_attempts,
            cfg.proposal_uniform_weight,
        )
        t[k] = rejection_sample(log_target, plan, rng, stats)
    state = state.replace(t=t)

    return state.replace(sigma_e=sample_sqrt_inv_gamma(sigma_conditional(state, y, acq), rng))


def _run_chain_python(y, acq, cfg, init, n_sweeps, rng):
    K = init.K
    c_hist = np.empty((n_sweeps, K))
    t_hist = np.empty((n_sweeps, K))
    s_hist = np.empty(n_sweeps)
    nll = np.empty(n_sweeps)
    stats = SamplerStats()
    state = init
    for i in range(n_sweeps):
        state = gibbs_sweep(state, y, acq, cfg, rng, stats)
        c_hist[i], t_hist[i], s_hist[i] = state.c, state.t, state.sigma_e
        nll[i] = -log_likelihood(state, y, acq)
    return c_hist, t_hist, s_hist, nll, stats.fallbacks, stats.attempts


def run_gibbs(
    y,
    acq: AcquisitionConfig,
    cfg: GibbsConfig,
    rng: np.random.Generator | None = None,
    backend: str | None = None,
) -> tuple[ChainTrace, GibbsState]:
    """Run ``burn_in + keep`` sweeps and return the trace and the MMSE estimate.

    ``rng`` defaults to ``numpy.random.default_rng(cfg.seed)``.  ``backend``
    is ``"compiled"``, ``"python"`` or ``None`` for the process default.
    """
    y = as_values(y)
    init = cfg.initial_state
    _check(init, y, acq)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    backend = _backend.resolve(backend)
    n_sweeps = cfg.burn_in + cfg.keep

    start = time.perf_counter()
    if backend == "compiled":
        out = _backend.core().run_chain(
            np.ascontiguousarray(y, dtype=float),
            acq.T,
            acq.sigma_h,
            np.ascontiguousarray(init.c),
            np.ascontiguousarray(init.t),
            init.sigma_e,
            n_sweeps,
            cfg.location_grid_points,
            cfg.max_attempts,
            cfg.envelope_safety,
            cfg.proposal_uniform_weight,
            LAMBDA_FLOOR,
            rng.bit_generator,
        )
    else:
        out = _run_chain_python(y, acq, cfg, init, n_sweeps, rng)
    c_hist, t_hist, s_hist, nll, fallbacks, attempts = out

    trace = ChainTrace(
        c=np.asarray(c_hist),
        t=np.asarray(t_hist),
        sigma_e=np.asarray(s_hist),
        neg_log_likelihood=np.asarray(nll),
        burn_in=cfg.burn_in,
        keep=cfg.keep,
        rejection_fallback_count=int(fallbacks),
        rejection_attempts=int(attempts),
        elapsed=time.perf_counter() - start,
        backend=backend,
        alignment=cfg.alignment,
    )
    return trace, trace.mmse()
