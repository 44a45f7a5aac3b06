"""Linear probing of per-layer trace features.

Reproduces the preliminary-experiment pipeline: average a path's tokens at
one layer, reduce with center-only PCA, classify with a two-class linear
discriminant, and cross-validate per layer. Both stages follow the sklearn
estimator protocol so they compose with ordinary pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, DataError
from .trace_store import TraceDataset

LDA_RIDGE = 1e-6


def layer_mean_features(dataset: TraceDataset, layer: int) -> np.ndarray:
    """Token-mean of each path's slice at one layer: [num_paths x d].

    In logits mode only layer 0 exists; asking for a deeper layer is a
    configuration error.
    """
    meta = dataset.meta
    if not 0 <= layer < meta.num_layers:
        if meta.mode == "logits":
            raise ConfigError(f"logits datasets have a single layer, requested {layer}")
        raise ConfigError(f"layer {layer} out of range [0, {meta.num_layers})")
    d = meta.per_layer_dim
    cols = slice(layer * d, (layer + 1) * d)
    out = np.empty((len(dataset), d))
    for i, (_, tokens) in enumerate(dataset.iter_paths()):
        out[i] = np.asarray(tokens[:, cols], dtype=np.float64).mean(axis=0)
    return out


class CenteredPca(BaseEstimator, TransformerMixin):
    """Center-only principal component analysis (no variance scaling).

    The basis holds the top `n_components` directions of the training
    covariance, orthonormal, ordered by non-increasing explained variance.
    """

    def __init__(self, n_components: int = 50):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        n, dim = X.shape
        if not 1 <= self.n_components <= min(dim, n - 1):
            raise ConfigError(
                f"n_components={self.n_components} must be in [1, min(dim={dim}, rows-1={n - 1})]"
            )
        self.mean_ = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        self.components_ = vt[: self.n_components]
        self.explained_variances_ = s[: self.n_components] ** 2 / (n - 1)
        return self

    def transform(self, X):
        if not hasattr(self, "components_"):
            raise NotFittedError("CenteredPca is not fitted")
        return (np.asarray(X, dtype=np.float64) - self.mean_) @ self.components_.T


class PooledCovarianceLda(BaseEstimator, ClassifierMixin):
    """Two-class linear discriminant with pooled within-class covariance.

    A relative ridge (1e-6 * trace/dim) keeps the pooled covariance
    invertible on degenerate projections. Decision is by higher posterior
    with empirical priors; exact ties go to class 0.
    """

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        classes = np.unique(y)
        if not np.array_equal(classes, [0, 1]):
            raise DataError(f"need both classes 0 and 1 in training data, got {classes.tolist()}")
        n, dim = X.shape
        means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
        pooled = np.zeros((dim, dim))
        for c in (0, 1):
            centered = X[y == c] - means[c]
            pooled += centered.T @ centered
        pooled /= n - 2 if n > 2 else 1
        pooled += LDA_RIDGE * (np.trace(pooled) / dim) * np.eye(dim)
        solved = np.linalg.solve(pooled, means.T).T  # rows: sigma^-1 mu_c
        priors = np.array([(y == 0).mean(), (y == 1).mean()])
        self.coef_ = solved[1] - solved[0]
        self.intercept_ = float(
            -0.5 * (means[1] @ solved[1] - means[0] @ solved[0]) + np.log(priors[1] / priors[0])
        )
        return self

    def decision_function(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("PooledCovarianceLda is not fitted")
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)


def pca_fit_transform(
    train_rows, test_rows, components: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit PCA on train rows only; project both row sets. Returns (train, test, basis)."""
    pca = CenteredPca(n_components=components).fit(train_rows)
    return pca.transform(train_rows), pca.transform(test_rows), pca.components_


def lda_fit_predict(train_scores, train_labels, test_scores) -> np.ndarray:
    return PooledCovarianceLda().fit(train_scores, train_labels).predict(test_scores)


def pipeline_affine(pca: CenteredPca, lda: PooledCovarianceLda) -> tuple[np.ndarray, float]:
    """Collapse PCA projection + LDA decision into one (w, c) affine form.

    The composed decision on a raw feature vector x is w @ x + c; predictions
    are 1 where it is positive, 0 otherwise.
    """
    w = pca.components_.T @ lda.coef_
    c = lda.intercept_ - float(pca.mean_ @ w)
    return w, c


@dataclass(frozen=True)
class ProbeConfig:
    components: int = 50
    folds: int = 5
    seed: int = 0
    layer: int | str = "all"


@dataclass
class FoldResult:
    fold: int
    accuracies: dict[int, float | None]

    def to_dict(self) -> dict:
        return {"fold": self.fold, "accuracy": {str(k): v for k, v in self.accuracies.items()}}


@dataclass
class ProbeReport:
    config: ProbeConfig
    layers: list[int]
    folds: list[FoldResult]
    layer_means: dict[int, float | None]
    invalid: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "components": self.config.components,
            "folds": self.config.folds,
            "seed": self.config.seed,
            "layers": self.layers,
            "layer_mean_accuracy": {str(k): v for k, v in self.layer_means.items()},
            "fold_results": [f.to_dict() for f in self.folds],
            "invalid_fits": [{"fold": f, "layer": l} for f, l in self.invalid],
        }


def fold_assignments(num_paths: int, folds: int, seed: int) -> np.ndarray:
    """Seeded shuffle then round-robin: disjoint folds covering every path,
    sizes differing by at most one."""
    assignment = np.empty(num_paths, dtype=np.int64)
    order = np.random.default_rng(seed).permutation(num_paths)
    for position, path in enumerate(order):
        assignment[path] = position % folds
    return assignment


def crossval_probe(dataset: TraceDataset, config: ProbeConfig) -> ProbeReport:
    """Per-layer k-fold cross-validated accuracy of the PCA+LDA probe."""
    n = len(dataset)
    if not 2 <= config.folds <= n:
        raise ConfigError(f"folds={config.folds} must be in [2, num_paths={n}]")
    layers = (
        list(range(dataset.meta.num_layers)) if config.layer == "all" else [int(config.layer)]
    )
    min_train_rows = n - (n + config.folds - 1) // config.folds  # largest held-out fold
    max_components = min(dataset.meta.per_layer_dim, min_train_rows - 1)
    if not 1 <= config.components <= max_components:
        raise ConfigError(
            f"components={config.components} must be in [1, {max_components}] for this dataset"
        )

    features = {layer: layer_mean_features(dataset, layer) for layer in layers}
    labels = dataset.labels()
    assignment = fold_assignments(n, config.folds, config.seed)

    fold_results: list[FoldResult] = []
    invalid: list[tuple[int, int]] = []
    for fold in range(config.folds):
        test_mask = assignment == fold
        accuracies: dict[int, float | None] = {}
        for layer in layers:
            y_train = labels[~test_mask]
            if y_train.min() == y_train.max():
                accuracies[layer] = None
                invalid.append((fold, layer))
                continue
            train_s, test_s, _ = pca_fit_transform(
                features[layer][~test_mask], features[layer][test_mask], config.components
            )
            predicted = lda_fit_predict(train_s, y_train, test_s)
            accuracies[layer] = float((predicted == labels[test_mask]).mean())
        fold_results.append(FoldResult(fold, accuracies))

    layer_means: dict[int, float | None] = {}
    for layer in layers:
        values = [fr.accuracies[layer] for fr in fold_results if fr.accuracies[layer] is not None]
        layer_means[layer] = float(np.mean(values)) if values else None
    return ProbeReport(
        config=config, layers=layers, folds=fold_results, layer_means=layer_means, invalid=invalid
    )
