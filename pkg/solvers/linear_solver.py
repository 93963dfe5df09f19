#!/usr/bin/env python3
"""
Linear Solver

The (W, b) subproblem of both ADMM loops reduces to one SPD system

    M = D + alpha Z Z',   Z = [X; e'],   D = diag(c I_p, lambda3)

solved against a (p+1) x (J-1) right-hand side. M depends only on X, alpha,
c and lambda3, so it is factored once per fit and reused every iteration.

Two strategies:
- DIRECT: Cholesky of the full (p+1) x (p+1) matrix
- WOODBURY: Cholesky of the n x n capacitance I + alpha Z' D^-1 Z

This module also owns the sum-to-zero parameterization W = W_hat P',
b = P b_hat with P = [I; -e'].
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple, Union

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization of the system failed."""

class SolveStrategy(Enum):
    AUTO = "auto"
    DIRECT = "direct"
    WOODBURY = "woodbury"

class ReducedBasis:
    """
    Implicit P = [I; -e'] and G = P (P'P)^-1 = [I; 0] - E/J for J classes.
    """

    def __init__(self, J: int):
        if J < 2:
            raise ValueError(f"J must be at least 2, got {J}")
        self.J = J

    @property
    def P(self) -> np.ndarray:
        return np.vstack([np.eye(self.J - 1), -np.ones((1, self.J - 1))])

    @property
    def G(self) -> np.ndarray:
        return np.vstack([np.eye(self.J - 1), np.zeros((1, self.J - 1))]) - 1.0 / self.J

def reduce_columns(M: np.ndarray, basis: ReducedBasis) -> np.ndarray:
    """M G: the first J-1 columns of M minus the row means of M."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != basis.J:
        raise ValueError(f"expected {basis.J} columns, got shape {M.shape}")
    return M[:, :-1] - M.mean(axis=1, keepdims=True)

def lift_solution(W_hat: np.ndarray, b_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """W = W_hat P', b = P b_hat. The last class gets minus the sum of the others."""
    W_hat = np.asarray(W_hat, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float).reshape(-1)
    if W_hat.ndim != 2 or W_hat.shape[1] != b_hat.shape[0]:
        raise ValueError(f"W_hat {W_hat.shape} and b_hat {b_hat.shape} disagree")
    W = np.hstack([W_hat, -W_hat.sum(axis=1, keepdims=True)])
    b = np.append(b_hat, -b_hat.sum())
    return W, b

@dataclass
class SystemFactor:
    """Reusable factorization of M = D + alpha Z Z'."""
    X: np.ndarray
    alpha: float
    diag_top: float
    diag_bottom: float
    strategy: SolveStrategy
    _cho: Tuple[np.ndarray, bool] = field(repr=False, default=None)
    _d: np.ndarray = field(repr=False, default=None)
    _dinv_z: np.ndarray = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.X.shape[0] + 1

    def _Z(self) -> np.ndarray:
        return np.vstack([self.X, np.ones((1, self.X.shape[1]))])

    def matrix(self) -> np.ndarray:
        """Dense M, assembled on demand."""
        Z = self._Z()
        return np.diag(self._d) + self.alpha * (Z @ Z.T)

    def pivots(self) -> np.ndarray:
        """Diagonal of the cached Cholesky factor."""
        return np.diag(self._cho[0]).copy()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        one_dim = rhs.ndim == 1
        if one_dim:
            rhs = rhs[:, None]
        if rhs.shape[0] != self.size:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, system size is {self.size}")

        if self.strategy is SolveStrategy.DIRECT:
            x = scipy.linalg.cho_solve(self._cho, rhs, check_finite=False)
        else:
            y = rhs / self._d[:, None]
            s = scipy.linalg.cho_solve(self._cho, self._Z().T @ y, check_finite=False)
            x = y - self.alpha * (self._dinv_z @ s)

        return x[:, 0] if one_dim else x

def build_factor(X: np.ndarray,
                 alpha: float,
                 c: float,
                 lambda3: float,
                 strategy: Union[SolveStrategy, str, None] = SolveStrategy.AUTO) -> SystemFactor:
    """
    Factor M once for repeated solves.

    AUTO selects WOODBURY when n < p, DIRECT otherwise.
    """
    if alpha <= 0 or c <= 0 or lambda3 <= 0:
        raise ValueError(f"alpha, c and lambda3 must be positive (got {alpha}, {c}, {lambda3})")
    X = np.asarray(X, dtype=float)
    p, n = X.shape
    strategy = SolveStrategy(strategy) if strategy is not None else SolveStrategy.AUTO
    if strategy is SolveStrategy.AUTO:
        strategy = SolveStrategy.WOODBURY if n < p else SolveStrategy.DIRECT

    d = np.full(p + 1, float(c))
    d[-1] = lambda3
    factor = SystemFactor(X=X, alpha=alpha, diag_top=c, diag_bottom=lambda3,
                          strategy=strategy, _d=d)
    Z = factor._Z()

    try:
        if strategy is SolveStrategy.DIRECT:
            M = np.diag(d) + alpha * (Z @ Z.T)
            factor._cho = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
        else:
            factor._dinv_z = Z / d[:, None]
            capacitance = alpha * (Z.T @ factor._dinv_z)
            capacitance.flat[::n + 1] += 1.0
            factor._cho = scipy.linalg.cho_factor(capacitance, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise FactorizationError(f"{strategy.value} factorization failed: {e}") from e

    logger.debug(f"Factored {strategy.value} system (p={p}, n={n}, alpha={alpha:.4g}, c={c:.4g})")
    return factor

def solve(factor: SystemFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve M s = rhs for one or many right-hand columns."""
    return factor.solve(rhs)
