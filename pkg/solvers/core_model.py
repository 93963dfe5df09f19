#!/usr/bin/env python3
"""
Core Model

Domain types for the all-together multiclass SVM together with the loss,
objective, prediction rule and the sparsity metrics computed on a fitted
weight matrix.

Layout conventions:
- features are stored p x n (one column per sample)
- labels are 1-based, in 1..J
- W is p x J, b has length J, both sum to zero across classes
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-8

class RegularizerKind(Enum):
    """Penalty applied on top of the l1 term."""
    ELASTIC_NET = "elastic"
    GROUP_LASSO = "group"
    SUPNORM = "sup"

    @property
    def is_row_norm(self) -> bool:
        """True for the q-norm models that carry the V block."""
        return self is not RegularizerKind.ELASTIC_NET

    @classmethod
    def from_name(cls, name: str) -> "RegularizerKind":
        for kind in cls:
            if kind.value == name or kind.name.lower() == name.lower():
                return kind
        raise ValueError(f"Unknown regularizer: {name!r} (expected elastic, group or sup)")

@dataclass(frozen=True)
class Dataset:
    """
    Labeled samples.

    Args:
        features: p x n matrix, column i is sample i
        labels: length n integer vector with values in 1..J
        num_classes: J
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise ValueError(f"features must be a p x n matrix, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[1]:
            raise ValueError(f"labels length {labels.shape} does not match n={features.shape[1]}")
        if features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError("dataset needs p >= 1 and n >= 1")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be at least 2, got {self.num_classes}")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if labels.dtype.kind == 'f':
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(int)
        if labels.min() < 1 or labels.max() > self.num_classes:
            raise ValueError(f"labels must lie in 1..{self.num_classes}")

        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)

    @property
    def p(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def J(self) -> int:
        return self.num_classes

    def subset(self, indices) -> "Dataset":
        """Samples at the given column indices."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.features[:, indices], self.labels[indices], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes + 1)[1:]

def cost_mask(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """n x J matrix with c_ij = 1 iff y_i != j."""
    labels = np.asarray(labels, dtype=int)
    c = np.ones((labels.shape[0], num_classes))
    c[np.arange(labels.shape[0]), labels - 1] = 0.0
    return c

@dataclass
class Classifier:
    """Linear multiclass classifier (W, b)."""
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.W.ndim != 2 or self.W.shape[1] != self.b.shape[0]:
            raise ValueError(f"W shape {self.W.shape} does not match b length {self.b.shape[0]}")

    @property
    def p(self) -> int:
        return self.W.shape[0]

    @property
    def J(self) -> int:
        return self.W.shape[1]

    def is_feasible(self, tol: float = FEASIBILITY_TOL) -> bool:
        """Check We = 0 and e'b = 0 up to relative rounding."""
        w_scale = max(1.0, float(np.max(np.abs(self.W)))) if self.W.size else 1.0
        b_scale = max(1.0, float(np.max(np.abs(self.b))))
        row_sums = np.abs(self.W.sum(axis=1))
        w_ok = row_sums.size == 0 or float(row_sums.max()) <= tol * w_scale
        return w_ok and abs(float(self.b.sum())) <= tol * b_scale

@dataclass
class Hyperparams:
    """Penalty weights and ADMM controls."""
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 1.0
    alpha: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    tol: float = 1e-5
    maxit: int = 5000

    def validate(self, kind: Optional[RegularizerKind] = None):
        """Raise ValueError naming the first parameter out of range."""
        if self.lambda1 < 0:
            raise ValueError(f"lambda1 must be >= 0, got {self.lambda1}")
        if self.lambda2 < 0:
            raise ValueError(f"lambda2 must be >= 0, got {self.lambda2}")
        if self.lambda3 <= 0:
            raise ValueError(f"lambda3 must be > 0, got {self.lambda3}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if (kind is None or kind.is_row_norm) and self.nu <= 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if int(self.maxit) != self.maxit or self.maxit < 1:
            raise ValueError(f"maxit must be a positive integer, got {self.maxit}")

def _check_dims(data: Dataset, clf: Classifier):
    if clf.p != data.p or clf.J != data.J:
        raise ValueError(f"classifier is {clf.p}x{clf.J} but data has p={data.p}, J={data.J}")

def class_scores(clf: Classifier, X: np.ndarray) -> np.ndarray:
    """n x J matrix of w_j'x_i + b_j."""
    return X.T @ clf.W + clf.b

def hinge_loss(data: Dataset, clf: Classifier) -> float:
    """Generalized hinge loss (1/n) sum c_ij [b_j + w_j'x_i + 1]_+."""
    _check_dims(data, clf)
    margins = np.maximum(class_scores(clf, data.features) + 1.0, 0.0)
    return float(np.sum(cost_mask(data.labels, data.J) * margins) / data.n)

def regularizer_value(W: np.ndarray, kind: RegularizerKind) -> float:
    W = np.asarray(W, dtype=float)
    if kind is RegularizerKind.ELASTIC_NET:
        return 0.5 * float(np.sum(W * W))
    if kind is RegularizerKind.GROUP_LASSO:
        return float(np.sum(np.linalg.norm(W, axis=1)))
    return float(np.sum(np.max(np.abs(W), axis=1))) if W.size else 0.0

def objective(data: Dataset, clf: Classifier, hp: Hyperparams, kind: RegularizerKind) -> float:
    """hinge + lambda1 |W|_1 + lambda2 phi(W) + (lambda3/2) |b|^2."""
    return (hinge_loss(data, clf)
            + hp.lambda1 * float(np.sum(np.abs(clf.W)))
            + hp.lambda2 * regularizer_value(clf.W, kind)
            + 0.5 * hp.lambda3 * float(clf.b @ clf.b))

def predict(clf: Classifier, x: np.ndarray) -> int:
    """Label of the largest class score; ties go to the smallest label."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != clf.p:
        raise ValueError(f"sample has length {x.shape[0]}, classifier expects {clf.p}")
    return int(np.argmax(clf.W.T @ x + clf.b)) + 1

def predict_batch(clf: Classifier, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[0] != clf.p:
        raise ValueError(f"features have p={X.shape[0]}, classifier expects {clf.p}")
    return np.argmax(class_scores(clf, X), axis=1) + 1

def accuracy(clf: Classifier, data: Dataset) -> float:
    """Fraction of samples predicted correctly."""
    return float(np.mean(predict_batch(clf, data.features) == data.labels))

def truncate(W: np.ndarray, rel_tol: float = 1e-3, abs_tol: float = 0.0) -> np.ndarray:
    """
    Zero out small weights.

    An entry is dropped when |w_ij| <= max(rel_tol * max|W|, abs_tol).
    """
    if rel_tol < 0 or abs_tol < 0:
        raise ValueError("truncation tolerances must be non-negative")
    W = np.asarray(W, dtype=float)
    magnitude = np.abs(W)
    peak = float(magnitude.max()) if W.size else 0.0
    threshold = max(rel_tol * peak, abs_tol)
    return np.where(magnitude <= threshold, 0.0, W)

@dataclass
class SparsityMetrics:
    """Zero counts of a truncated weight matrix against the ground truth."""
    cz: int
    iz: int
    nr: int
    nz: Tuple[int, ...] = field(default_factory=tuple)

    def as_dict(self) -> Dict[str, int]:
        values = {'CZ': self.cz, 'IZ': self.iz, 'NR': self.nr}
        for j, count in enumerate(self.nz, start=1):
            values[f'NZ{j}'] = count
        return values

def sparsity_metrics(W_trunc: np.ndarray, relevance_mask: np.ndarray) -> SparsityMetrics:
    W_trunc = np.asarray(W_trunc)
    mask = np.asarray(relevance_mask).astype(bool)
    if W_trunc.shape != mask.shape:
        raise ValueError(f"weights {W_trunc.shape} and mask {mask.shape} differ in shape")

    zero = W_trunc == 0
    return SparsityMetrics(
        cz=int(np.sum(zero & ~mask)),
        iz=int(np.sum(zero & mask)),
        nr=int(np.sum(np.any(~zero, axis=1))),
        nz=tuple(int(v) for v in np.sum(~zero, axis=0))
    )
