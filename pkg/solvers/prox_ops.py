#!/usr/bin/env python3
"""
Proximal Operators

Closed-form shrinkage used by the A, U and V block updates.
Scalar operators accept numpy arrays and broadcast their thresholds.
"""

import logging
from typing import Union

import numpy as np

from solvers.core_model import RegularizerKind

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

def _check_threshold(value: ArrayLike, name: str):
    if np.any(np.asarray(value) < 0):
        raise ValueError(f"{name} must be non-negative")

def _scalar_or_array(result: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(result) if np.ndim(like) == 0 else result

def hinge_prox(delta: ArrayLike, nu: ArrayLike) -> ArrayLike:
    """argmin_a nu [a]_+ + (a - delta)^2 / 2."""
    _check_threshold(nu, "nu")
    d = np.asarray(delta, dtype=float)
    result = np.where(d > nu, d - nu, np.where(d < 0.0, d, 0.0))
    return _scalar_or_array(result, delta)

def soft_threshold(delta: ArrayLike, nu: ArrayLike) -> ArrayLike:
    """sign(delta) max(0, |delta| - nu)."""
    _check_threshold(nu, "nu")
    d = np.asarray(delta, dtype=float)
    result = np.sign(d) * np.maximum(np.abs(d) - nu, 0.0)
    return _scalar_or_array(result, delta)

def update_A(M: np.ndarray, cost: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """Entrywise hinge prox of M with thresholds c_ij / (n alpha)."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if M.shape != cost.shape:
        raise ValueError(f"M {M.shape} and cost mask {cost.shape} differ in shape")
    return hinge_prox(M, cost / (n * alpha))

def group_rows_shrink(Z: np.ndarray, t: float) -> np.ndarray:
    """Apply the l2 group shrink to every row of Z."""
    _check_threshold(t, "t")
    Z = np.asarray(Z, dtype=float)
    if t == 0:
        return Z.copy()
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    scale = np.zeros_like(norms)
    keep = norms > t
    scale[keep] = (norms[keep] - t) / norms[keep]
    return Z * scale

def group_row_shrink(z: np.ndarray, t: float) -> np.ndarray:
    """0 if |z|_2 <= t, else z scaled by (|z|_2 - t) / |z|_2."""
    return group_rows_shrink(np.asarray(z, dtype=float)[None, :], t)[0]

def supnorm_rows_prox(Z: np.ndarray, t: float) -> np.ndarray:
    """
    Prox of t |.|_inf applied to every row of Z.

    Rows with |v|_1 <= t go to zero. Otherwise the magnitudes are clipped
    at tau = (sum of the r largest |v| - t) / r, where r is the largest
    index with t - sum_{s<=r} (u_s - u_r) > 0 over the sorted magnitudes u.
    """
    _check_threshold(t, "t")
    Z = np.asarray(Z, dtype=float)
    if t == 0:
        return Z.copy()

    result = np.zeros_like(Z)
    magnitude = np.abs(Z)
    active = magnitude.sum(axis=1) > t
    if not np.any(active):
        return result

    mags = magnitude[active]
    order = np.argsort(-mags, axis=1, kind="stable")
    u = np.take_along_axis(mags, order, axis=1)
    csum = np.cumsum(u, axis=1)
    ranks = np.arange(1, Z.shape[1] + 1)

    # sum_{s<=r}(u_s - u_r) is nondecreasing in r, so the valid r form a prefix
    r_hat = np.sum(t - (csum - ranks * u) > 0, axis=1)
    tau = (csum[np.arange(r_hat.shape[0]), r_hat - 1] - t) / r_hat

    result[active] = np.sign(Z[active]) * np.minimum(mags, tau[:, None])
    return result

def supnorm_row_prox(v: np.ndarray, t: float) -> np.ndarray:
    return supnorm_rows_prox(np.asarray(v, dtype=float)[None, :], t)[0]

def update_U(W: np.ndarray, Lam: np.ndarray, lambda1: float, mu: float) -> np.ndarray:
    """Soft threshold W + Lam/mu at lambda1/mu."""
    if mu <= 0:
        raise ValueError(f"mu must be > 0, got {mu}")
    return soft_threshold(W + Lam / mu, lambda1 / mu)

def update_V(W: np.ndarray, Gam: np.ndarray, lambda2: float, nu: float,
             kind: RegularizerKind) -> np.ndarray:
    """Row prox of W + Gam/nu at lambda2/nu for the group or supnorm model."""
    if nu <= 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    Z = W + Gam / nu
    if kind is RegularizerKind.GROUP_LASSO:
        return group_rows_shrink(Z, lambda2 / nu)
    if kind is RegularizerKind.SUPNORM:
        return supnorm_rows_prox(Z, lambda2 / nu)
    raise ValueError(f"{kind.value} model has no V block")
