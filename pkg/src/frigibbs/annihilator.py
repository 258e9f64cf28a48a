"""Annihilating-filter / root-finding baseline.

Reweighting the Gaussian-filtered samples by ``exp(n^2 T^2 / (2 sigma_h^2))``
turns them into a sum of ``K`` real exponentials ``a_k u_k^n`` with
``u_k = exp(t_k T / sigma_h^2)``.  The filter that annihilates that sum is
the smallest right singular vector of the convolution matrix; its roots
give the locations, and the weights follow by least squares on the raw
samples.  Exact without noise, and wildly unstable with it: the
reweighting amplifies noise at late samples by up to
``exp((N-1)^2 T^2 / (2 sigma_h^2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import companion

from .errors import FriError, InvalidInputError, LocationDomainError, OverflowRiskError
from .llse import llse_refine
from .model import AcquisitionConfig, FriSignal, as_values

# largest x with exp(x) finite in double precision
MAX_EXPONENT = math.log(np.finfo(float).max)
IMAG_TOL = 1e-9
TIE_TOL = 1e-8


@dataclass(frozen=True)
class AnnihilatorCoeffs:
    """Unit-norm filter ``a[0..K]`` and the singular values of its matrix."""

    a: np.ndarray
    singular_values: np.ndarray
    near_tie: bool = False

    @property
    def K(self) -> int:
        return self.a.size - 1


@dataclass
class AnnihilatorResult:
    status: str  # "ok", "projected-roots" or "failed"
    signal: FriSignal | None = None
    error: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.signal is not None


def exponential_weights(z, acq: AcquisitionConfig) -> np.ndarray:
    """``p[n] = exp(n^2 T^2 / (2 sigma_h^2)) z[n]``."""
    z = as_values(z)
    n = np.arange(z.size)
    expo = (n * acq.T) ** 2 / (2.0 * acq.sigma_h**2)
    if z.size and expo[-1] > MAX_EXPONENT:
        bad = int(np.argmax(expo > MAX_EXPONENT))
        raise OverflowRiskError(
            f"weight exp({expo[bad]:.1f}) overflows at n={bad}; use fewer samples or a wider kernel"
        )
    with np.errstate(over="ignore"):
        p = np.exp(expo) * z
    if not np.all(np.isfinite(p)):
        bad = int(np.argmax(~np.isfinite(p)))
        raise OverflowRiskError(f"reweighted sample overflows at n={bad}")
    return p


def convolution_matrix(p: np.ndarray, K: int) -> np.ndarray:
    """Rows ``[p[n], p[n-1], ..., p[n-K]]`` for ``n = K .. N-1``."""
    N = p.size
    idx = np.arange(K, N)[:, None] - np.arange(K + 1)[None, :]
    return p[idx]


def annihilating_filter(p, K: int) -> AnnihilatorCoeffs:
    """Unit vector minimizing ``||P a||``: the last right singular vector."""
    p = np.asarray(p, dtype=float)
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    if p.size < 2 * K + 1:
        raise InvalidInputError(f"need N >= 2K+1 = {2 * K + 1} samples, got {p.size}")
    P = convolution_matrix(p, K)
    _, s, vt = np.linalg.svd(P)
    a = vt[-1]
    if a[0] < 0:
        a = -a
    near_tie = K >= 1 and s.size > 1 and (s[-2] - s[-1]) <= TIE_TOL * s[0]
    return AnnihilatorCoeffs(a, s, bool(near_tie))


def project_real_roots(roots: np.ndarray, tol: float = IMAG_TOL) -> tuple[np.ndarray, bool]:
    """Replace every complex root by its real part.

    A conjugate pair therefore becomes a repeated real root; the flag says
    whether anything was changed.
    """
    complex_mask = np.abs(roots.imag) > tol * np.maximum(np.abs(roots), 1.0)
    return roots.real.copy(), bool(np.any(complex_mask))


def filter_roots(a) -> np.ndarray:
    """Roots of ``sum_n a[n] z^(K-n)`` from the companion-matrix eigenvalues."""
    a = np.asarray(a, dtype=float)
    if abs(a[0]) <= 1e-14 * np.linalg.norm(a):
        raise LocationDomainError("leading filter coefficient vanishes; degree drops below K")
    if a.size == 2:
        return np.array([-a[1] / a[0]], dtype=complex)
    return np.linalg.eigvals(companion(a)).astype(complex)


def roots_to_locations(a, acq: AcquisitionConfig, full_output: bool = False):
    """Map filter roots ``u_k`` to ``t_k = sigma_h^2 ln(u_k) / T`` (ascending)."""
    coeffs = a.a if isinstance(a, AnnihilatorCoeffs) else a
    roots, projected = project_real_roots(filter_roots(coeffs))
    if np.any(roots <= 0):
        raise LocationDomainError(
            f"non-positive root(s) {roots[roots <= 0]} have no real location"
            + (" after real-root projection" if projected else "")
        )
    t = np.sort(acq.sigma_h**2 * np.log(roots) / acq.T)
    if full_output:
        return t, projected
    return t


def annihilate_reconstruct(y, K: int, acq: AcquisitionConfig) -> AnnihilatorResult:
    """Full pipeline; any stage failure is returned as a failed result."""
    y = as_values(y)
    diagnostics: dict = {}
    try:
        p = exponential_weights(y, acq)
        coeffs = annihilating_filter(p, K)
        diagnostics["singular_values"] = coeffs.singular_values.tolist()
        diagnostics["near_tie"] = coeffs.near_tie
        t_hat, projected = roots_to_locations(coeffs, acq, full_output=True)
        diagnostics["projected"] = projected
        c_hat = llse_refine(y, t_hat, acq)
    except (FriError, np.linalg.LinAlgError) as exc:
        return AnnihilatorResult("failed", None, f"{type(exc).__name__}: {exc}", diagnostics)
    status = "projected-roots" if projected else "ok"
    return AnnihilatorResult(status, FriSignal(c_hat, t_hat), None, diagnostics)
