#!/usr/bin/env python3
"""
ADMM Solver

Two-block ADMM for the regularized all-together MSVM.

Elastic net (blocks A, U):
    (W, b) -> A -> U -> multipliers Pi, Lam
Group lasso / supnorm (blocks A, U, V):
    (W, b) -> A -> U -> V -> multipliers Pi, Lam, Gam

All blocks and multipliers start at the origin. The run stops when the
relative change of the split objective and the scaled primal residuals
all fall below tol, or after maxit iterations.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from config.config_manager import SolverConfig, get_config_manager
from solvers.core_model import (
    Classifier,
    Dataset,
    Hyperparams,
    RegularizerKind,
    cost_mask,
    objective,
    regularizer_value,
)
from solvers.linear_solver import (
    ReducedBasis,
    SolveStrategy,
    SystemFactor,
    build_factor,
    lift_solution,
    reduce_columns,
)
from solvers.prox_ops import update_A, update_U, update_V

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, float, float, float, float], None]

class DivergenceError(RuntimeError):
    """A non-finite iterate appeared during the fit."""

    def __init__(self, iteration: int, block: str):
        super().__init__(f"non-finite values in {block} at iteration {iteration}")
        self.iteration = iteration
        self.block = block

@dataclass
class SolverState:
    """Primal blocks, multipliers and histories of one ADMM run."""
    W: np.ndarray
    b: np.ndarray
    A: np.ndarray
    U: np.ndarray
    Pi: np.ndarray
    Lam: np.ndarray
    V: Optional[np.ndarray] = None
    Gam: Optional[np.ndarray] = None
    k: int = 0
    objective_history: List[float] = field(default_factory=list)
    residual_history: List[Tuple[float, float, float]] = field(default_factory=list)

    def blocks(self):
        yield 'W', self.W
        yield 'b', self.b
        yield 'A', self.A
        yield 'U', self.U
        yield 'Pi', self.Pi
        yield 'Lam', self.Lam
        if self.V is not None:
            yield 'V', self.V
            yield 'Gam', self.Gam

def initial_state(data: Dataset, kind: RegularizerKind) -> SolverState:
    """Every block and multiplier at the origin."""
    p, n, J = data.p, data.n, data.J
    state = SolverState(
        W=np.zeros((p, J)), b=np.zeros(J), A=np.zeros((n, J)), U=np.zeros((p, J)),
        Pi=np.zeros((n, J)), Lam=np.zeros((p, J))
    )
    if kind.is_row_norm:
        state.V = np.zeros((p, J))
        state.Gam = np.zeros((p, J))
    return state

@dataclass
class FitReport:
    """Outcome of fit()."""
    classifier: Classifier
    iterations: int
    objective: float
    split_objective: float
    residuals: Tuple[float, float, float]
    rel_obj_change: float
    converged: bool
    wall_time: float
    strategy: str
    objective_history: List[float] = field(default_factory=list, repr=False)
    residual_history: List[Tuple[float, float, float]] = field(default_factory=list, repr=False)
    residual_slope: float = float('nan')

    def summary(self) -> dict:
        r_a, r_u, r_v = self.residuals
        return {
            'iterations': self.iterations,
            'converged': self.converged,
            'objective': self.objective,
            'split_objective': self.split_objective,
            'r_A': r_a,
            'r_U': r_u,
            'r_V': r_v,
            'rel_obj_change': self.rel_obj_change,
            'residual_slope': self.residual_slope,
            'wall_time': self.wall_time,
            'strategy': self.strategy
        }

def default_hyperparams(n: int, p: int, J: int,
                        lambda1: float = 0.0,
                        lambda2: float = 0.0,
                        settings: Optional[SolverConfig] = None) -> Hyperparams:
    """alpha = 50J/n, mu = nu = sqrt(pJ), lambda3 = 1, tol 1e-5, maxit 5000."""
    if min(n, p, J) < 1:
        raise ValueError(f"n, p, J must be positive (got {n}, {p}, {J})")
    settings = settings or get_config_manager().solver
    penalty = math.sqrt(p * J)
    return Hyperparams(
        lambda1=lambda1,
        lambda2=lambda2,
        lambda3=settings.lambda3,
        alpha=settings.alpha_scale * J / n,
        mu=penalty,
        nu=penalty,
        tol=settings.tol,
        maxit=int(settings.maxit)
    )

def system_diagonal(hp: Hyperparams, kind: RegularizerKind) -> float:
    """c in D = diag(c I, lambda3)."""
    return hp.mu + hp.nu if kind.is_row_norm else hp.lambda2 + hp.mu

def compute_split_objective(state: SolverState,
                            data: Dataset,
                            hp: Hyperparams,
                            kind: RegularizerKind,
                            cost: Optional[np.ndarray] = None) -> float:
    """Objective of the split problem evaluated at (W, b, A, U[, V])."""
    if cost is None:
        cost = cost_mask(data.labels, data.J)
    value = (float(np.sum(cost * np.maximum(state.A, 0.0))) / data.n
             + hp.lambda1 * float(np.sum(np.abs(state.U)))
             + 0.5 * hp.lambda3 * float(state.b @ state.b))
    if kind.is_row_norm:
        value += hp.lambda2 * regularizer_value(state.V, kind)
    else:
        value += hp.lambda2 * regularizer_value(state.W, kind)
    return value

def _affine_scores(state: SolverState, X: np.ndarray) -> np.ndarray:
    # X'W + e b' + E
    return X.T @ state.W + state.b + 1.0

def update_wb(state: SolverState,
              data: Dataset,
              factor: SystemFactor,
              basis: ReducedBasis,
              hp: Hyperparams,
              kind: RegularizerKind) -> Tuple[np.ndarray, np.ndarray]:
    """Solve the (W, b) subproblem in reduced coordinates and lift back."""
    expected = system_diagonal(hp, kind)
    if not math.isclose(factor.diag_top, expected, rel_tol=1e-12):
        raise ValueError(f"factor diagonal {factor.diag_top} does not match {expected} "
                         f"required by the {kind.value} model")

    theta = hp.alpha * state.A - state.Pi - hp.alpha
    top = data.features @ theta - state.Lam + hp.mu * state.U
    if kind.is_row_norm:
        top = top - state.Gam + hp.nu * state.V
    bottom = theta.sum(axis=0, keepdims=True)

    rhs = reduce_columns(np.vstack([top, bottom]), basis)
    reduced = factor.solve(rhs)
    return lift_solution(reduced[:-1], reduced[-1])

def residuals(state: SolverState, X: np.ndarray) -> Tuple[float, float, float, float]:
    """
    (r_A, r_U, r_V, rel_obj_change) for the current state.

    r_V is 0.0 without a V block. rel_obj_change uses the last two entries
    of the objective history (0.0 when fewer than two are recorded).
    """
    n, J = state.A.shape
    p = state.W.shape[0]
    r_a = float(np.linalg.norm(_affine_scores(state, X) - state.A)) / math.sqrt(n * J)
    r_u = float(np.linalg.norm(state.W - state.U)) / math.sqrt(p * J)
    r_v = 0.0
    if state.V is not None:
        r_v = float(np.linalg.norm(state.W - state.V)) / math.sqrt(p * J)

    history = state.objective_history
    rel = 0.0
    if len(history) >= 2:
        rel = abs(history[-1] - history[-2]) / (1.0 + history[-2])
    return r_a, r_u, r_v, rel

def update_multipliers(state: SolverState, X: np.ndarray, hp: Hyperparams) -> SolverState:
    """Dual ascent steps with the penalty parameters as step sizes."""
    state.Pi = state.Pi + hp.alpha * (_affine_scores(state, X) - state.A)
    state.Lam = state.Lam + hp.mu * (state.W - state.U)
    if state.V is not None:
        state.Gam = state.Gam + hp.nu * (state.W - state.V)
    return state

def _check_finite(state: SolverState):
    for name, block in state.blocks():
        if not np.all(np.isfinite(block)):
            raise DivergenceError(state.k, name)

def _residual_slope(history: List[Tuple[float, float, float]], window: int) -> float:
    """Least-squares slope of log10(max residual) per iteration."""
    recent = [max(r) for r in history[-window:]]
    if len(recent) < 2:
        return float('nan')
    logs = np.log10(np.maximum(np.array(recent), np.finfo(float).tiny))
    slope, _ = np.polyfit(np.arange(len(logs)), logs, 1)
    return float(slope)

def fit(data: Dataset,
        hp: Hyperparams,
        kind: RegularizerKind,
        initial: Optional[SolverState] = None,
        progress_callback: Optional[ProgressCallback] = None,
        strategy: Union[SolveStrategy, str, None] = None,
        settings: Optional[SolverConfig] = None) -> FitReport:
    """
    Run ADMM until the stopping rule holds or maxit is reached.

    Args:
        data: training samples
        hp: penalty weights and ADMM controls
        kind: regularizer
        initial: optional starting state (origin when omitted)
        progress_callback: called with (k, F, r_A, r_U, r_V) every iteration
        strategy: linear-system strategy (configured default when omitted)
        settings: solver section of the configuration

    Returns:
        FitReport: classifier plus diagnostics
    """
    hp.validate(kind)
    settings = settings or get_config_manager().solver
    strategy = strategy or settings.strategy

    X = data.features
    cost = cost_mask(data.labels, data.J)
    basis = ReducedBasis(data.J)

    start_time = time.perf_counter()
    factor = build_factor(X, hp.alpha, system_diagonal(hp, kind), hp.lambda3, strategy)

    state = initial or initial_state(data, kind)
    if kind.is_row_norm and state.V is None:
        raise ValueError(f"{kind.value} model needs a state with V and Gam blocks")
    if not state.objective_history:
        state.objective_history.append(compute_split_objective(state, data, hp, kind, cost))

    logger.info(f"ADMM start: {kind.value}, n={data.n}, p={data.p}, J={data.J}, "
                f"lambda1={hp.lambda1:g}, lambda2={hp.lambda2:g}, solver={factor.strategy.value}")

    converged = False
    r_a = r_u = r_v = rel = float('inf')
    first_k = state.k
    while state.k - first_k < hp.maxit:
        state.W, state.b = update_wb(state, data, factor, basis, hp, kind)
        state.A = update_A(_affine_scores(state, X) + state.Pi / hp.alpha, cost, data.n, hp.alpha)
        state.U = update_U(state.W, state.Lam, hp.lambda1, hp.mu)
        if kind.is_row_norm:
            state.V = update_V(state.W, state.Gam, hp.lambda2, hp.nu, kind)
        update_multipliers(state, X, hp)
        state.k += 1

        F = compute_split_objective(state, data, hp, kind, cost)
        state.objective_history.append(F)
        r_a, r_u, r_v, rel = residuals(state, X)
        state.residual_history.append((r_a, r_u, r_v))

        if progress_callback:
            progress_callback(state.k, F, r_a, r_u, r_v)

        if state.k % settings.finite_check_every == 0:
            _check_finite(state)
            logger.debug(f"k={state.k} F={F:.6g} r_A={r_a:.3g} r_U={r_u:.3g} r_V={r_v:.3g}")

        if max(rel, r_a, r_u, r_v) <= hp.tol:
            converged = True
            break

    _check_finite(state)
    wall_time = time.perf_counter() - start_time

    clf = Classifier(state.W.copy(), state.b.copy())
    report = FitReport(
        classifier=clf,
        iterations=state.k - first_k,
        objective=objective(data, clf, hp, kind),
        split_objective=state.objective_history[-1],
        residuals=(r_a, r_u, r_v),
        rel_obj_change=rel,
        converged=converged,
        wall_time=wall_time,
        strategy=factor.strategy.value,
        objective_history=list(state.objective_history),
        residual_history=list(state.residual_history),
        residual_slope=_residual_slope(state.residual_history, settings.rate_window)
    )

    if converged:
        logger.info(f"ADMM converged in {report.iterations} iterations "
                    f"({wall_time:.3f}s, objective {report.objective:.6g})")
    else:
        logger.warning(f"ADMM stopped at maxit={hp.maxit} without meeting tol={hp.tol:g} "
                       f"(r_A={r_a:.3g}, r_U={r_u:.3g}, r_V={r_v:.3g}, rel={rel:.3g})")
    return report
