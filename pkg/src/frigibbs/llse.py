"""Least-squares re-estimation of the weights for fixed locations."""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateLocationsError
from .model import AcquisitionConfig, as_values, gaussian_kernel

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
MERGE_TOLERANCE = 1e-6  # in units of T


def build_design_matrix(t_hat, acq: AcquisitionConfig, kernel=None) -> np.ndarray:
    """``H[n, k] = h(nT - t_hat[k])``, shape ``(N, K)``."""
    kernel = gaussian_kernel if kernel is None else kernel
    t_hat = np.atleast_1d(np.asarray(t_hat, dtype=float))
    return np.asarray(kernel(acq.sample_times[:, None] - t_hat[None, :], acq.sigma_h))


def merge_groups(t_hat, tol: float) -> list[list[int]]:
    """Group indices whose locations lie within ``tol`` of a neighbour."""
    order = np.argsort(t_hat, kind="stable")
    groups = [[int(order[0])]]
    for prev, cur in zip(order[:-1], order[1:]):
        if t_hat[cur] - t_hat[prev] < tol:
            groups[-1].append(int(cur))
        else:
            groups.append([int(cur)])
    return sorted(groups, key=lambda g: g[0])


def most_collinear_pair(H: np.ndarray) -> tuple[int, int]:
    norms = np.linalg.norm(H, axis=0)
    norms[norms == 0] = 1.0
    cos = np.abs((H / norms).T @ (H / norms))
    np.fill_diagonal(cos, -1.0)
    i, j = np.unravel_index(np.argmax(cos), cos.shape)
    return (int(min(i, j)), int(max(i, j)))


def _solve_qr(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(H, mode="reduced")
    return solve_triangular(R, Q.T @ y, lower=False)


def llse_refine(
    y,
    t_hat,
    acq: AcquisitionConfig,
    *,
    condition_limit: float = CONDITION_LIMIT,
    merge_tol: float = MERGE_TOLERANCE,
    full_output: bool = False,
):
    """Weights minimizing ``||H c - y||`` for the locations ``t_hat``.

    Locations closer than ``merge_tol * T`` share one column; the fitted
    weight goes to the first index of each group and the rest get zero.
    Solved through a QR factorization of ``H``.

    Raises :class:`DegenerateLocationsError` when the (merged) design
    matrix has condition number above ``condition_limit``.
    """
    y = as_values(y)
    t_hat = np.atleast_1d(np.asarray(t_hat, dtype=float))
    K = t_hat.size
    groups = merge_groups(t_hat, merge_tol * acq.T) if K > 1 else [[0]]
    merged = [g for g in groups if len(g) > 1]
    if merged:
        log.info("merged near-duplicate locations %s", merged)
    heads = [g[0] for g in groups]

    H = build_design_matrix(t_hat[heads], acq)
    cond = float(np.linalg.cond(H)) if len(heads) > 1 else 1.0
    if not cond <= condition_limit:
        i, j = most_collinear_pair(H)
        pair = (heads[i], heads[j])
        raise DegenerateLocationsError(
            f"design matrix condition number {cond:.3g} exceeds {condition_limit:.3g}; "
            f"columns {pair} (t={t_hat[pair[0]]:.6g}, {t_hat[pair[1]]:.6g}) are nearly collinear",
            pair=pair,
            condition=cond,
        )

    c = np.zeros(K)
    c[heads] = _solve_qr(H, y)
    if full_output:
        return c, {"condition": cond, "merged": merged}
    return c
