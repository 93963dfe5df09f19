#!/usr/bin/env python3
"""
Data Pipeline Test Script

Generator moments and masks, preprocessing, resampling and the grid
searches used for model selection.
"""

import os
import sys

import numpy as np
import pytest

# Add path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config.config_manager import SolverConfig, get_config_manager
from services.data_pipeline import (
    SyntheticSpec,
    Variant,
    balanced_labels,
    cv_grid_search,
    feature_stats,
    five_class_means,
    four_class_means,
    gen_five_class,
    gen_four_class,
    gene_rank,
    holdout_grid_search,
    make_split,
    resample_split,
    select_features,
    select_top_k,
    standardize,
    stratified_folds,
)
from solvers.core_model import Dataset, RegularizerKind

FAST = SolverConfig(alpha_scale=50.0, lambda3=1.0, tol=1e-4, maxit=2000)
DEFAULT_TOL = SolverConfig(alpha_scale=50.0, lambda3=1.0, tol=1e-5, maxit=5000)

def test_five_class_means():
    means = five_class_means()
    assert means.shape == (2, 5)
    np.testing.assert_allclose(means[:, 0], [1.6180, 1.1756], atol=1e-4)
    np.testing.assert_allclose(np.linalg.norm(means, axis=0), 2.0)

def test_balanced_labels():
    rng = np.random.default_rng(0)
    for n, J in [(200, 5), (13, 4), (7, 5)]:
        counts = np.bincount(balanced_labels(n, J, rng), minlength=J + 1)[1:]
        assert counts.sum() == n
        assert counts.max() - counts.min() <= 1
        assert list(counts) == sorted(counts, reverse=True)

def test_generators_are_reproducible():
    a, mask_a = gen_five_class(50, seed=7)
    b, mask_b = gen_five_class(50, seed=7)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(mask_a, mask_b)
    c, _ = gen_five_class(50, seed=8)
    assert not np.array_equal(a.features, c.features)

    d, _ = gen_four_class(40, 30, 6, 0.5, seed=3)
    e, _ = gen_four_class(40, 30, 6, 0.5, seed=3)
    np.testing.assert_array_equal(d.features, e.features)

def test_five_class_moments_and_mask():
    data, mask = gen_five_class(100_000, seed=11)
    assert (data.p, data.J) == (10, 5)
    noise = data.features[2:]
    assert np.all(np.abs(noise.mean(axis=1)) <= 4.0 / np.sqrt(data.n))

    means = five_class_means()
    for j in range(1, 6):
        members = data.features[:2, data.labels == j]
        sigma = np.sqrt(2.0)
        bound = 5 * sigma / np.sqrt(members.shape[1])
        assert np.max(np.abs(members.mean(axis=1) - means[:, j - 1])) <= bound
        np.testing.assert_allclose(np.cov(members), 2.0 * np.eye(2), atol=0.1)

    assert mask.sum() == 10
    assert np.all(mask[:2] == 1) and np.all(mask[2:] == 0)

def test_four_class_means_and_mask():
    means = four_class_means(500, 30)
    np.testing.assert_array_equal(means[:, 1], -means[:, 0])
    np.testing.assert_array_equal(means[:, 3], -means[:, 2])
    assert np.all(means[:30, 0] == 1) and np.all(means[30:, 0] == 0)
    assert np.all(means[15:45, 2] == 1) and np.all(means[:15, 2] == 0) and np.all(means[45:, 2] == 0)

    data, mask = gen_four_class(40, 500, 30, 0.0, seed=1)
    assert (data.p, data.J) == (500, 4)
    assert np.flatnonzero(mask.any(axis=1)).tolist() == list(range(45))
    assert mask[:30, :2].all() and not mask[30:, :2].any()
    assert mask[15:45, 2:].all() and not mask[:15, 2:].any()

def test_four_class_correlation():
    data, _ = gen_four_class(100_000, 12, 8, 0.8, seed=5)
    class1 = data.features[:, data.labels == 1]
    corr = np.corrcoef(class1[0], class1[1])[0, 1]
    assert abs(corr - 0.8) <= 0.01
    np.testing.assert_allclose(class1[:8].var(axis=1), 1.0, atol=0.04)
    # coordinates outside the block stay independent
    assert abs(np.corrcoef(class1[0], class1[10])[0, 1]) <= 0.03

    class3 = data.features[:, data.labels == 3]
    assert abs(np.corrcoef(class3[4], class3[11])[0, 1] - 0.8) <= 0.01

def test_generator_parameter_errors():
    with pytest.raises(ValueError):
        gen_five_class(4)
    with pytest.raises(ValueError):
        gen_four_class(40, 10, 8, 0.0)
    with pytest.raises(ValueError):
        gen_four_class(40, 30, 5, 0.0)
    with pytest.raises(ValueError):
        gen_four_class(40, 30, 6, 1.0)
    with pytest.raises(ValueError):
        SyntheticSpec(Variant.FOUR_CLASS, n=40, p=10, s=8)

def test_make_split():
    spec = SyntheticSpec("five-class", n=60, p=99, seed=4)
    assert spec.p == 10 and spec.num_classes == 5
    split = make_split(spec, 30)
    assert (split.train.n, split.test.n) == (60, 30)
    again = make_split(spec, 30)
    np.testing.assert_array_equal(split.train.features, again.train.features)
    np.testing.assert_array_equal(split.test.features, again.test.features)
    assert not np.array_equal(split.train.features[:, :30], split.test.features)

def test_standardize():
    rng = np.random.default_rng(2)
    data = Dataset(rng.standard_normal((5, 4)) * 3 + 1, np.array([1, 2, 1, 2]), 2)
    z = standardize(data)
    assert np.all(np.abs(z.features.mean(axis=1)) <= 1e-12)
    np.testing.assert_allclose(z.features.std(axis=1, ddof=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(standardize(z).features, z.features, atol=1e-12)

def test_standardize_constant_row(caplog):
    X = np.array([[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]])
    data = Dataset(X, np.array([1, 2, 1]), 2)
    with caplog.at_level("WARNING"):
        z = standardize(data)
    np.testing.assert_array_equal(z.features[1], 0.0)
    assert "[1]" in caplog.text

def test_standardize_with_training_statistics():
    rng = np.random.default_rng(3)
    train = Dataset(rng.standard_normal((3, 10)), np.arange(10) % 2 + 1, 2)
    test = Dataset(rng.standard_normal((3, 4)), np.array([1, 2, 1, 2]), 2)
    stats = feature_stats(train)
    z = standardize(test, stats)
    np.testing.assert_allclose(z.features, (test.features - stats.mean[:, None]) / stats.std[:, None])
    with pytest.raises(ValueError):
        standardize(Dataset(np.ones((2, 4)), np.array([1, 2, 1, 2]), 2), stats)

def _naive_rank(X, y, J):
    p, n = X.shape
    out = np.zeros(p)
    for g in range(p):
        overall = X[g].mean()
        between = within = 0.0
        for j in range(1, J + 1):
            class_mean = X[g, y == j].mean()
            for i in range(n):
                if y[i] == j:
                    between += (class_mean - overall) ** 2
                    within += (X[g, i] - class_mean) ** 2
        out[g] = between / within
    return out

def test_gene_rank():
    rng = np.random.default_rng(4)
    y = np.array([1, 1, 2, 2, 2, 1, 2])
    X = rng.standard_normal((6, 7))
    data = Dataset(X, y, 2)
    np.testing.assert_allclose(gene_rank(data), _naive_rank(X, y, 2), rtol=1e-12)

    a = rng.uniform(0.5, 3.0, size=(6, 1)) * np.where(rng.random((6, 1)) < 0.5, -1, 1)
    shifted = Dataset(a * X + rng.standard_normal((6, 1)), y, 2)
    np.testing.assert_allclose(gene_rank(shifted), gene_rank(data), rtol=1e-9)

def test_gene_rank_degenerate_genes():
    y = np.array([1, 2, 3, 1, 2, 3])
    X = np.vstack([np.full(6, 2.5), y * 1.0, np.arange(6.0)])
    ranks = gene_rank(Dataset(X, y, 3))
    assert ranks[0] == 0.0
    assert ranks[1] == np.inf
    assert np.isfinite(ranks[2])
    assert select_top_k(ranks, 1).tolist() == [1]

    with pytest.raises(ValueError):
        gene_rank(Dataset(X[:, :3], y[:3], 3))

def test_select_top_k():
    assert select_top_k([0.1, 0.9, 0.5], 2).tolist() == [1, 2]
    assert select_top_k([0.3, 0.3, 0.3], 2).tolist() == [0, 1]
    assert select_top_k([4.0, 1.0, 3.0], 3).tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        select_top_k([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        select_top_k([1.0, 2.0], 0)

    rng = np.random.default_rng(5)
    scores = rng.standard_normal(50)
    expected = sorted(sorted(range(50), key=lambda i: -scores[i])[:12])
    assert select_top_k(scores, 12).tolist() == expected

def test_select_features():
    data = Dataset(np.arange(12.0).reshape(4, 3), np.array([1, 2, 1]), 2)
    picked = select_features(data, [3, 1])
    np.testing.assert_array_equal(picked.features, data.features[[3, 1]])

def test_resample_split_is_stratified():
    rng = np.random.default_rng(6)
    labels = np.array([1] * 30 + [2] * 20 + [3] * 10)
    pooled = Dataset(rng.standard_normal((4, 60)), labels, 3)
    train, test = pooled.subset(np.arange(0, 60, 2)), pooled.subset(np.arange(1, 60, 2))

    new_train, new_test = resample_split(train, test, 30, seed=1)
    assert new_train.n == 30 and new_test.n == 30
    np.testing.assert_array_equal(new_train.class_counts(), [15, 10, 5])
    combined = np.hstack([new_train.features, new_test.features])
    assert sorted(map(tuple, combined.T)) == sorted(map(tuple, pooled.features.T))

    again, _ = resample_split(train, test, 30, seed=1)
    np.testing.assert_array_equal(again.features, new_train.features)
    with pytest.raises(ValueError):
        resample_split(train, test, 60)

def test_stratified_folds():
    labels = np.array([1] * 9 + [2] * 6 + [3] * 3)
    folds = stratified_folds(labels, 3, seed=0)
    for j in (1, 2, 3):
        counts = np.bincount(folds[labels == j], minlength=3)
        assert counts.max() - counts.min() <= 1
    with pytest.raises(ValueError):
        stratified_folds(np.array([1, 1, 2, 2, 2]), 3)
    with pytest.raises(ValueError):
        stratified_folds(labels, 1)

def test_cv_single_point_grid():
    data, _ = gen_five_class(30, seed=2)
    result = cv_grid_search(data, RegularizerKind.GROUP_LASSO, [0.02], [0.05], folds=3, settings=FAST)
    assert result.selected == (0.02, 0.05)
    assert len(result.scores) == 1 and len(result.scores[0].fold_accuracies) == 3

def test_default_grid_and_elastic_lambda2(monkeypatch):
    grid = get_config_manager().grid
    assert len(grid.lambda_values) == 16
    assert grid.lambda_values[:3] == [0.0, 0.001, 0.01]
    assert grid.lambda_values[-1] == 0.30

    seen = []

    def fake_fit_accuracy(train, validation, kind, lambda1, lambda2, settings, overrides=None):
        seen.append((lambda1, lambda2))
        return 1.0 if lambda1 <= 0.02 else 0.5

    monkeypatch.setattr("services.data_pipeline._fit_accuracy", fake_fit_accuracy)
    data, _ = gen_five_class(30, seed=3)
    result = cv_grid_search(data, RegularizerKind.ELASTIC_NET, folds=3)
    assert {l2 for _, l2 in seen} == {1.0}
    assert len(result.scores) == 16
    # ties go to the larger lambda1
    assert result.selected == (0.02, 1.0)

def test_dominant_candidate_wins(monkeypatch):
    monkeypatch.setattr("services.data_pipeline._fit_accuracy",
                        lambda train, validation, kind, l1, l2, settings, overrides=None:
                        0.9 if l1 == 0.001 else 0.6)
    data, _ = gen_five_class(30, seed=4)
    result = cv_grid_search(data, RegularizerKind.SUPNORM, [0.001, 0.1], [0.01], folds=3)
    assert result.selected == (0.001, 0.01)

    split = make_split(SyntheticSpec("five-class", n=30, seed=5), 20)
    result = holdout_grid_search(split.train, split.test, RegularizerKind.SUPNORM, [0.001, 0.1], [0.01])
    assert result.selected == (0.001, 0.01)

def test_heavy_penalty_scores_as_intercept_only():
    split = make_split(SyntheticSpec("five-class", n=60, seed=8), 50)
    assert np.all(np.bincount(split.test.labels)[1:] == 10)

    result = holdout_grid_search(split.train, split.test, RegularizerKind.GROUP_LASSO,
                                 [0.0, 1e6], [0.05], settings=DEFAULT_TOL)
    heavy = next(s for s in result.scores if s.lambda1 == 1e6)
    # every sample gets the class with the largest intercept
    assert heavy.mean_accuracy == pytest.approx(0.2)
    assert result.selected == (0.0, 0.05)
    assert max(s.mean_accuracy for s in result.scores) > 0.5

def test_candidates_scored_on_threads_match_serial(monkeypatch):
    def fake_fit_accuracy(train, validation, kind, lambda1, lambda2, settings, overrides=None):
        return round(1.0 - abs(lambda1 - 0.03) - abs(lambda2 - 0.1), 6)

    monkeypatch.setattr("services.data_pipeline._fit_accuracy", fake_fit_accuracy)
    data, _ = gen_five_class(30, seed=9)
    grid = get_config_manager().grid.tune_lambda_values
    serial = cv_grid_search(data, RegularizerKind.SUPNORM, grid, grid, folds=3)
    threaded = cv_grid_search(data, RegularizerKind.SUPNORM, grid, grid, folds=3, workers=3)
    assert threaded.selected == serial.selected == (0.03, 0.1)
    assert [(s.lambda1, s.lambda2) for s in threaded.scores] == \
        [(s.lambda1, s.lambda2) for s in serial.scores]

    with pytest.raises(ValueError):
        holdout_grid_search(data, data, RegularizerKind.SUPNORM, grid, grid, workers=0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
