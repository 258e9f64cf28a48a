"""Random variate generators used by the Gibbs sweep.

Every sampler takes an explicit ``numpy.random.Generator`` and consumes it
in a fixed order, so a sampler call is a pure function of its arguments
and the generator state.  The compiled chain kernel replays exactly the
same sequence of ``standard_normal`` / ``random`` / ``standard_gamma``
calls; keep the two in step when editing anything here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import InvalidConfigError, InvalidInputError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_GRID_POINTS = 512
DEFAULT_SAFETY = 1.1
DEFAULT_MAX_ATTEMPTS = 200
#: Mass of the uniform component of the proposal mixture.
DEFAULT_UNIFORM_WEIGHT = 0.1


@dataclass(frozen=True)
class SqrtInvGammaParams:
    """``X`` with ``X**-2 ~ Gamma(shape=varphi, rate=lam)``."""

    varphi: float
    lam: float

    def __post_init__(self):
        if not (self.varphi > 0 and math.isfinite(self.varphi)):
            raise InvalidConfigError(f"varphi must be positive, got {self.varphi}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidConfigError(f"lambda must be positive, got {self.lam}")

    def logpdf(self, x):
        """Log density ``log(2 lam^varphi x^-(2 varphi + 1) exp(-lam/x^2) / Gamma(varphi))``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                math.log(2.0)
                + self.varphi * math.log(self.lam)
                - (2.0 * self.varphi + 1.0) * np.log(x)
                - self.lam / (x * x)
                - gammaln(self.varphi)
            )
        return np.where(x > 0, out, -np.inf)

    def mode(self) -> float:
        return math.sqrt(2.0 * self.lam / (2.0 * self.varphi + 1.0))


@dataclass
class SamplerStats:
    """Mutable counters for rejection sampling diagnostics."""

    calls: int = 0
    attempts: int = 0
    fallbacks: int = 0

    @property
    def acceptance_rate(self) -> float:
        accepted = self.calls - self.fallbacks
        return accepted / self.attempts if self.attempts else float("nan")


@dataclass(frozen=True)
class RejectionPlan:
    """Proposal and envelope constant for one rejection draw.

    The proposal is a Gaussian mixed with a uniform on ``support`` (weight
    ``uniform_weight``, zero for a pure Gaussian).  The uniform part keeps
    the proposal tails at least as heavy as the target's, otherwise ``c``
    is set by negligible tail mass.  ``log_envelope`` is ``log(c)``; the
    envelope property ``target <= c * proposal`` holds at every point of
    the check grid.
    """

    proposal_mean: float
    proposal_std: float
    log_envelope: float
    support: tuple[float, float]
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    grid_points: int = DEFAULT_GRID_POINTS
    uniform_weight: float = 0.0

    def __post_init__(self):
        if not self.proposal_std > 0:
            raise InvalidConfigError("proposal_std must be positive")
        if self.max_attempts < 1:
            raise InvalidConfigError("max_attempts must be positive")
        if not self.support[0] <= self.support[1]:
            raise InvalidConfigError(f"empty support {self.support}")
        if not 0.0 <= self.uniform_weight < 1.0:
            raise InvalidConfigError("uniform_weight must lie in [0, 1)")
        if self.uniform_weight > 0 and not self.support[1] > self.support[0]:
            raise InvalidConfigError("a uniform component needs a non-degenerate support")

    @property
    def envelope_c(self) -> float:
        return math.exp(self.log_envelope) if self.log_envelope < 709 else math.inf

    def log_proposal(self, x):
        return _log_mixture(
            np.asarray(x, dtype=float),
            self.proposal_mean,
            self.proposal_std,
            self.uniform_weight,
            self.support,
        )


def _log_mixture(x, mean, std, weight, support):
    z = (x - mean) / std
    log_g = -0.5 * z * z - math.log(std) - LOG_SQRT_2PI
    if weight == 0.0:
        return log_g
    lo, hi = support
    dens = (1.0 - weight) * np.exp(log_g) + np.where((x >= lo) & (x <= hi), weight / (hi - lo), 0.0)
    with np.errstate(divide="ignore"):
        return np.log(dens)


def uniform_grid(support: tuple[float, float], n_points: int) -> np.ndarray:
    if n_points < 2:
        raise InvalidConfigError(f"grid needs at least 2 points, got {n_points}")
    return np.linspace(support[0], support[1], n_points)


def plan_from_grid(
    grid: np.ndarray,
    log_values: np.ndarray,
    safety: float = DEFAULT_SAFETY,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    uniform_weight: float = DEFAULT_UNIFORM_WEIGHT,
) -> RejectionPlan:
    """Fit a proposal to a log target tabulated on a uniform grid.

    The Gaussian part matches the mean of the grid-normalized target and
    has twice its standard deviation, floored at one grid step and capped
    at the support width.  ``log c`` is the largest target/proposal log
    ratio on the grid plus ``log(safety)``.
    """
    n = grid.size
    lo, hi = float(grid[0]), float(grid[-1])
    width = hi - lo
    h = float(grid[1] - grid[0]) if n > 1 else 0.0
    m = float(np.max(log_values))
    if not math.isfinite(m):
        raise InvalidInputError("log target is -inf everywhere on the grid")

    w = np.exp(log_values - m)
    total = float(np.sum(w))
    mean = float(np.sum(w * grid)) / total
    var = float(np.sum(w * (grid - mean) ** 2)) / total
    std = min(max(2.0 * math.sqrt(var), h), width) if width > 0 else 1.0
    if width == 0:
        uniform_weight = 0.0

    log_q = _log_mixture(grid, mean, std, uniform_weight, (lo, hi))
    log_c = float(np.max(log_values - log_q)) + math.log(safety)
    return RejectionPlan(mean, std, log_c, (lo, hi), max_attempts, n, uniform_weight)


def build_rejection_plan(
    log_target: Callable,
    support: tuple[float, float],
    n_points: int = DEFAULT_GRID_POINTS,
    safety: float = DEFAULT_SAFETY,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    uniform_weight: float = DEFAULT_UNIFORM_WEIGHT,
) -> RejectionPlan:
    grid = uniform_grid(support, n_points)
    log_values = np.asarray(log_target(grid), dtype=float)
    return plan_from_grid(grid, log_values, safety, max_attempts, uniform_weight)


def sample_gaussian(mean: float, variance: float, rng: np.random.Generator) -> float:
    if not variance >= 0:
        raise InvalidInputError(f"variance must be >= 0, got {variance}")
    # always consume one normal so the stream position does not depend on variance
    return mean + math.sqrt(variance) * rng.standard_normal()


def sample_sqrt_inv_gamma(p: SqrtInvGammaParams, rng: np.random.Generator) -> float:
    """Draw ``X = G**-0.5`` with ``G ~ Gamma(p.varphi, rate=p.lam)``."""
    g = rng.standard_gamma(p.varphi) / p.lam
    return 1.0 / math.sqrt(g)


def grid_choice(grid: np.ndarray, log_values: np.ndarray, rng: np.random.Generator) -> float:
    """Categorical draw over ``grid`` with masses proportional to ``exp(log_values)``."""
    m = float(np.max(log_values))
    if not math.isfinite(m):
        raise InvalidInputError("log target is -inf everywhere on the grid")
    cdf = np.cumsum(np.exp(log_values - m))
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    return float(grid[min(idx, grid.size - 1)])


def grid_sample(
    log_target: Callable,
    support: tuple[float, float],
    n_points: int,
    rng: np.random.Generator,
) -> float:
    grid = uniform_grid(support, n_points)
    return grid_choice(grid, np.asarray(log_target(grid), dtype=float), rng)


def rejection_sample(
    log_target: Callable,
    plan: RejectionPlan,
    rng: np.random.Generator,
    stats: SamplerStats | None = None,
) -> float:
    """Draw from ``exp(log_target)`` restricted to ``plan.support``.

    Each attempt draws a fresh candidate and a fresh acceptance uniform.
    With a mixture proposal the candidate costs one uniform to pick the
    component plus one normal (Gaussian part) or one uniform (uniform
    part); a pure Gaussian plan skips the component pick.  After
    ``plan.max_attempts`` rejections the draw falls back to
    :func:`grid_sample` and ``stats.fallbacks`` is incremented.
    """
    lo, hi = plan.support
    mean, std, w = plan.proposal_mean, plan.proposal_std, plan.uniform_weight
    if stats is not None:
        stats.calls += 1
    for _ in range(plan.max_attempts):
        if w > 0.0 and rng.random() < w:
            x = lo + (hi - lo) * rng.random()
        else:
            x = mean + std * rng.standard_normal()
        u = rng.random()
        if stats is not None:
            stats.attempts += 1
        if not lo <= x <= hi:
            continue
        log_q = float(_log_mixture(x, mean, std, w, plan.support))
        log_ratio = float(log_target(x)) - plan.log_envelope - log_q
        if u < math.exp(min(log_ratio, 0.0)):
            return x
    if stats is not None:
        stats.fallbacks += 1
    return grid_sample(log_target, plan.support, plan.grid_points, rng)
