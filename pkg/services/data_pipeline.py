#!/usr/bin/env python3
"""
Data Pipeline Service

Synthetic data generators for the two benchmark experiments, feature
preprocessing (standardization, relevance ranking, top-k selection),
resampling and the lambda grid searches used for model selection.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from config.config_manager import GridConfig, SolverConfig, get_config_manager
from solvers.admm_solver import default_hyperparams, fit
from solvers.core_model import Classifier, Dataset, RegularizerKind, accuracy, truncate

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence, None]

FIVE_CLASS_P = 10
FIVE_CLASS_J = 5

class Variant(Enum):
    FIVE_CLASS = "five-class"
    FOUR_CLASS = "four-class"

@dataclass
class SyntheticSpec:
    """Generator parameters. p is fixed at 10 for the five-class variant."""
    variant: Variant
    n: int
    p: int = FIVE_CLASS_P
    s: int = 0
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.variant is Variant.FIVE_CLASS:
            self.p = FIVE_CLASS_P
            if self.n < FIVE_CLASS_J:
                raise ValueError(f"five-class generator needs n >= 5, got {self.n}")
        else:
            _check_four_class(self.n, self.p, self.s, self.rho)

    @property
    def num_classes(self) -> int:
        return FIVE_CLASS_J if self.variant is Variant.FIVE_CLASS else 4

@dataclass
class LabeledSplit:
    """Train and test samples from one generator plus the ground-truth mask."""
    train: Dataset
    test: Dataset
    relevance_mask: np.ndarray

    def __post_init__(self):
        if self.train.p != self.test.p or self.train.J != self.test.J:
            raise ValueError("train and test sets disagree in p or J")
        if self.relevance_mask.shape != (self.train.p, self.train.J):
            raise ValueError(f"mask shape {self.relevance_mask.shape} does not match "
                             f"({self.train.p}, {self.train.J})")

def _check_four_class(n: int, p: int, s: int, rho: float):
    if n < 4:
        raise ValueError(f"four-class generator needs n >= 4, got {n}")
    if s < 2 or s % 2:
        raise ValueError(f"s must be a positive even integer, got {s}")
    if p < 3 * s // 2:
        raise ValueError(f"p must be at least 3s/2 = {3 * s // 2}, got {p}")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")

def balanced_labels(n: int, J: int, rng: np.random.Generator) -> np.ndarray:
    """n // J samples per class, remainder to the lowest labels, shuffled."""
    counts = np.full(J, n // J)
    counts[:n % J] += 1
    return rng.permutation(np.repeat(np.arange(1, J + 1), counts))

def five_class_means() -> np.ndarray:
    """2 x 5 matrix; column j is 2[cos((2j-1)pi/5), sin((2j-1)pi/5)]."""
    angles = (2 * np.arange(1, FIVE_CLASS_J + 1) - 1) * np.pi / 5
    return 2.0 * np.vstack([np.cos(angles), np.sin(angles)])

def gen_five_class(n: int, seed: SeedLike = None) -> Tuple[Dataset, np.ndarray]:
    """
    Two informative coordinates drawn from N(mu_j, 2I), eight N(0, 1) noise
    coordinates. Relevant entries: rows 0-1 across all classes.
    """
    if n < FIVE_CLASS_J:
        raise ValueError(f"five-class generator needs n >= 5, got {n}")
    rng = np.random.default_rng(seed)
    labels = balanced_labels(n, FIVE_CLASS_J, rng)

    X = rng.standard_normal((FIVE_CLASS_P, n))
    X[:2] = five_class_means()[:, labels - 1] + np.sqrt(2.0) * X[:2]

    mask = np.zeros((FIVE_CLASS_P, FIVE_CLASS_J), dtype=int)
    mask[:2, :] = 1
    return Dataset(X, labels, FIVE_CLASS_J), mask

def four_class_means(p: int, s: int) -> np.ndarray:
    """p x 4 matrix of class means; mu2 = -mu1 and mu4 = -mu3."""
    half = s // 2
    means = np.zeros((p, 4))
    means[:s, 0] = 1.0
    means[half:half + s, 2] = 1.0
    means[:, 1] = -means[:, 0]
    means[:, 3] = -means[:, 2]
    return means

def gen_four_class(n: int, p: int, s: int, rho: float,
                   seed: SeedLike = None) -> Tuple[Dataset, np.ndarray]:
    """
    Classes 1-2 share a correlated block on coordinates 0..s-1, classes 3-4
    on s/2..3s/2-1; every other coordinate is independent N(0, 1).
    """
    _check_four_class(n, p, s, rho)
    rng = np.random.default_rng(seed)
    labels = balanced_labels(n, 4, rng)

    X = rng.standard_normal((p, n))
    if rho > 0:
        block = rho * np.ones((s, s)) + (1.0 - rho) * np.eye(s)
        factor = np.linalg.cholesky(block)
        half = s // 2
        for classes, rows in (((1, 2), slice(0, s)), ((3, 4), slice(half, half + s))):
            cols = np.isin(labels, classes)
            X[rows, cols] = factor @ X[rows, cols]

    X += four_class_means(p, s)[:, labels - 1]
    mask = (four_class_means(p, s) != 0).astype(int)
    return Dataset(X, labels, 4), mask

def generate(spec: SyntheticSpec, n: int, seed: SeedLike) -> Tuple[Dataset, np.ndarray]:
    if spec.variant is Variant.FIVE_CLASS:
        return gen_five_class(n, seed)
    return gen_four_class(n, spec.p, spec.s, spec.rho, seed)

def make_split(spec: SyntheticSpec, n_test: int) -> LabeledSplit:
    """Train and test sets from independent child seeds of spec.seed."""
    train_seed, test_seed = np.random.SeedSequence(spec.seed).spawn(2)
    train, mask = generate(spec, spec.n, train_seed)
    test, _ = generate(spec, n_test, test_seed)
    return LabeledSplit(train=train, test=test, relevance_mask=mask)

@dataclass
class FeatureStats:
    """Per-feature mean and sample standard deviation."""
    mean: np.ndarray
    std: np.ndarray

def feature_stats(data: Dataset) -> FeatureStats:
    if data.n < 2:
        raise ValueError("standardization needs at least 2 samples")
    std = data.features.std(axis=1, ddof=1)
    # exactly constant rows can pick up rounding noise in std
    std[np.ptp(data.features, axis=1) == 0] = 0.0
    return FeatureStats(mean=data.features.mean(axis=1), std=std)

def standardize(data: Dataset, stats: Optional[FeatureStats] = None) -> Dataset:
    """
    Center and scale every feature row.

    Uses the dataset's own statistics unless training statistics are given.
    Zero-variance rows become all-zero.
    """
    stats = stats or feature_stats(data)
    if stats.mean.shape[0] != data.p:
        raise ValueError(f"statistics cover {stats.mean.shape[0]} features, data has {data.p}")

    constant = stats.std == 0
    if np.any(constant):
        logger.warning(f"Zero-variance features set to 0: {np.flatnonzero(constant).tolist()}")

    scale = np.where(constant, 1.0, stats.std)
    X = (data.features - stats.mean[:, None]) / scale[:, None]
    X[constant] = 0.0
    return Dataset(X, data.labels, data.num_classes)

def gene_rank(data: Dataset) -> np.ndarray:
    """
    Between-class over within-class sum of squares for every feature.

    0/0 is reported as 0 and x/0 as +inf.
    """
    counts = data.class_counts()
    if np.any(counts == 0):
        raise ValueError(f"every class needs samples, counts are {counts.tolist()}")
    if data.n < data.J + 1:
        raise ValueError(f"gene ranking needs n >= J + 1, got n={data.n}, J={data.J}")

    X = data.features
    onehot = np.zeros((data.n, data.J))
    onehot[np.arange(data.n), data.labels - 1] = 1.0
    class_means = (X @ onehot) / counts
    overall = X.mean(axis=1, keepdims=True)

    between = ((class_means - overall) ** 2) @ counts
    within = np.sum((X - class_means[:, data.labels - 1]) ** 2, axis=1)

    # sums at rounding level of the data count as exact zeros
    noise = data.n * (16 * np.finfo(float).eps * np.max(np.abs(X), axis=1)) ** 2
    between[between <= noise] = 0.0
    within[within <= noise] = 0.0

    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = between / within
    ratio[(within == 0) & (between == 0)] = 0.0
    ratio[(within == 0) & (between > 0)] = np.inf
    return ratio

def select_top_k(scores: Sequence[float], k: int) -> np.ndarray:
    """0-based indices of the k largest scores, ties to the smaller index, ascending."""
    scores = np.asarray(scores, dtype=float)
    if not 1 <= k <= scores.shape[0]:
        raise ValueError(f"k must lie in 1..{scores.shape[0]}, got {k}")
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return np.sort(order[:k])

def select_features(data: Dataset, indices: Sequence[int]) -> Dataset:
    return Dataset(data.features[np.asarray(indices, dtype=int)], data.labels, data.num_classes)

def _allocate(counts: np.ndarray, total: int) -> np.ndarray:
    """Split total across classes in proportion to counts (largest remainder)."""
    exact = counts * total / counts.sum()
    alloc = np.floor(exact).astype(int)
    remainder = exact - alloc
    for j in np.argsort(-remainder, kind="stable")[:total - alloc.sum()]:
        alloc[j] += 1
    return np.minimum(alloc, counts)

def resample_split(train: Dataset, test: Dataset, n_train: int,
                   seed: SeedLike = None) -> Tuple[Dataset, Dataset]:
    """Pool both sets and draw a class-stratified training sample of size n_train."""
    if train.p != test.p or train.J != test.J:
        raise ValueError("datasets disagree in p or J")
    X = np.hstack([train.features, test.features])
    y = np.concatenate([train.labels, test.labels])
    pooled = Dataset(X, y, train.J)
    if not 1 <= n_train < pooled.n:
        raise ValueError(f"n_train must lie in 1..{pooled.n - 1}, got {n_train}")

    rng = np.random.default_rng(seed)
    alloc = _allocate(pooled.class_counts(), n_train)
    picked = []
    for j, take in enumerate(alloc, start=1):
        members = np.flatnonzero(y == j)
        picked.append(rng.choice(members, size=take, replace=False))
    train_idx = np.sort(np.concatenate(picked))
    test_idx = np.setdiff1d(np.arange(pooled.n), train_idx)
    return pooled.subset(train_idx), pooled.subset(test_idx)

def stratified_folds(labels: np.ndarray, folds: int, seed: SeedLike = None) -> np.ndarray:
    """Fold index per sample; every class is spread over all folds."""
    if folds < 2:
        raise ValueError(f"folds must be at least 2, got {folds}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(labels.shape[0], dtype=int)
    offset = 0
    for j in np.unique(labels):
        members = np.flatnonzero(labels == j)
        if members.shape[0] < folds:
            raise ValueError(f"class {j} has {members.shape[0]} samples, fewer than {folds} folds")
        members = rng.permutation(members)
        assignment[members] = (np.arange(members.shape[0]) + offset) % folds
        offset += members.shape[0]
    return assignment

@dataclass
class GridScore:
    """Validation accuracy of one (lambda1, lambda2) candidate."""
    lambda1: float
    lambda2: float
    fold_accuracies: Tuple[float, ...]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))

@dataclass
class GridSearchResult:
    lambda1: float
    lambda2: float
    scores: List[GridScore] = field(default_factory=list)

    @property
    def selected(self) -> Tuple[float, float]:
        return self.lambda1, self.lambda2

def _grids(kind: RegularizerKind,
           grid1: Optional[Iterable[float]],
           grid2: Optional[Iterable[float]],
           grid_config: GridConfig) -> Tuple[List[float], List[float]]:
    grid1 = list(grid1) if grid1 is not None else list(grid_config.lambda_values)
    if grid2 is not None:
        grid2 = list(grid2)
    elif kind is RegularizerKind.ELASTIC_NET:
        grid2 = [grid_config.elastic_lambda2]
    else:
        grid2 = list(grid_config.lambda_values)
    if not grid1 or not grid2:
        raise ValueError("lambda grids must not be empty")
    return grid1, grid2

def _fit_accuracy(train: Dataset, validation: Dataset, kind: RegularizerKind,
                  lambda1: float, lambda2: float, settings: SolverConfig,
                  overrides: Optional[Dict[str, float]] = None) -> float:
    """
    Validation accuracy of one candidate, scored on the truncated weights.

    Entries at or below metrics.train_zero_tol are dropped, so a fit whose
    optimum is W = 0 scores as the intercept-only classifier.
    """
    hp = default_hyperparams(train.n, train.p, train.J, lambda1, lambda2, settings)
    for name, value in (overrides or {}).items():
        setattr(hp, name, value)
    report = fit(train, hp, kind, settings=settings)
    metrics = get_config_manager().metrics
    W = truncate(report.classifier.W, metrics.truncate_rel_tol, metrics.train_zero_tol)
    return accuracy(Classifier(W, report.classifier.b), validation)

T = TypeVar("T")

def _map_candidates(score: Callable[[Tuple[float, float]], T],
                    candidates: List[Tuple[float, float]], workers: int) -> List[T]:
    """Score every candidate, in order, on up to `workers` threads."""
    if workers < 1:
        raise ValueError(f"workers must be at least 1, got {workers}")
    if workers == 1:
        return [score(c) for c in candidates]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(score, candidates))

def _best(scores: List[GridScore]) -> GridScore:
    # ties go to the sparser model: larger lambda1, then larger lambda2
    return max(scores, key=lambda s: (s.mean_accuracy, s.lambda1, s.lambda2))

def cv_grid_search(data: Dataset,
                   kind: RegularizerKind,
                   grid1: Optional[Iterable[float]] = None,
                   grid2: Optional[Iterable[float]] = None,
                   folds: Optional[int] = None,
                   seed: SeedLike = 0,
                   settings: Optional[SolverConfig] = None,
                   overrides: Optional[Dict[str, float]] = None,
                   workers: int = 1) -> GridSearchResult:
    """
    Pick (lambda1, lambda2) by stratified k-fold cross validation.

    For the elastic net lambda2 stays at the configured value (1.0) unless
    grid2 is given. overrides replace fields of the default Hyperparams
    (alpha, mu, tol, ...) for every fit. Candidates run on `workers` threads;
    the result does not depend on it.
    """
    config = get_config_manager()
    settings = settings or config.solver
    folds = folds or config.grid.folds
    grid1, grid2 = _grids(kind, grid1, grid2, config.grid)

    assignment = stratified_folds(data.labels, folds, seed)
    splits = [(data.subset(np.flatnonzero(assignment != f)),
               data.subset(np.flatnonzero(assignment == f))) for f in range(folds)]

    def score(candidate: Tuple[float, float]) -> GridScore:
        lambda1, lambda2 = candidate
        fold_acc = tuple(_fit_accuracy(train, held_out, kind, lambda1, lambda2, settings, overrides)
                         for train, held_out in splits)
        logger.debug(f"cv {kind.value} lambda1={lambda1:g} lambda2={lambda2:g}: "
                     f"{np.mean(fold_acc):.4f}")
        return GridScore(lambda1, lambda2, fold_acc)

    scores = _map_candidates(score, [(l1, l2) for l1 in grid1 for l2 in grid2], workers)
    best = _best(scores)
    logger.info(f"cv selected lambda1={best.lambda1:g}, lambda2={best.lambda2:g} "
                f"(accuracy {best.mean_accuracy:.4f})")
    return GridSearchResult(best.lambda1, best.lambda2, scores)

def holdout_grid_search(train: Dataset,
                        validation: Dataset,
                        kind: RegularizerKind,
                        grid1: Optional[Iterable[float]] = None,
                        grid2: Optional[Iterable[float]] = None,
                        settings: Optional[SolverConfig] = None,
                        overrides: Optional[Dict[str, float]] = None,
                        workers: int = 1) -> GridSearchResult:
    """Pick (lambda1, lambda2) by accuracy on a separate validation sample."""
    config = get_config_manager()
    settings = settings or config.solver
    grid1, grid2 = _grids(kind, grid1, grid2, config.grid)

    def score(candidate: Tuple[float, float]) -> GridScore:
        l1, l2 = candidate
        return GridScore(l1, l2, (_fit_accuracy(train, validation, kind, l1, l2, settings, overrides),))

    scores = _map_candidates(score, [(l1, l2) for l1 in grid1 for l2 in grid2], workers)
    best = _best(scores)
    logger.info(f"holdout selected lambda1={best.lambda1:g}, lambda2={best.lambda2:g} "
                f"for {kind.value} (accuracy {best.mean_accuracy:.4f})")
    return GridSearchResult(best.lambda1, best.lambda2, scores)
