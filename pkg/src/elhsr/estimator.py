"""Scikit-learn style front door for the reward model.

``ElhsrRewardModel`` wraps training and scoring behind the familiar
fit/predict/score protocol (get_params/set_params/clone come from
BaseEstimator), so the model drops into ordinary sklearn workflows. X can be
a TraceDataset, or a plain sequence of [T x D] token matrices with labels.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .reward_model import path_features, score_path
from .trace_store import DatasetMeta, PathRecord, TraceDataset
from .training import TrainConfig, train_elhsr
from .validation import as_label_array, as_token_matrix


def dataset_from_matrices(
    matrices: Sequence[np.ndarray],
    labels,
    question_ids: Sequence[str] | None = None,
) -> TraceDataset:
    """Build an in-memory single-layer dataset from raw token matrices.

    Without explicit question ids every path becomes its own question.
    """
    y = as_label_array(labels)
    if len(matrices) != len(y):
        raise ValueError(f"{len(matrices)} matrices but {len(y)} labels")
    if question_ids is None:
        question_ids = [f"q{i:06d}" for i in range(len(y))]
    coerced = [as_token_matrix(m, name=f"matrix {i}") for i, m in enumerate(matrices)]
    width = coerced[0].shape[1]
    meta = DatasetMeta(mode="hidden", num_layers=1, per_layer_dim=width)
    records = []
    offset = 0
    for i, m in enumerate(coerced):
        records.append(
            PathRecord(str(question_ids[i]), f"p{i:06d}", int(y[i]), m.shape[0], offset)
        )
        offset += m.shape[0] * width * 4
    payload = np.concatenate(coerced, axis=0).astype(np.float32)
    return TraceDataset(meta=meta, records=records, payload=payload)


class ElhsrRewardModel(BaseEstimator):
    """Gated linear reward model with the training protocol baked in.

    Parameters mirror the training configuration; defaults reproduce the
    reference protocol (AdamW at 1e-4, weight decay 1e-5, batch 16, 80/20
    question-level split, patience 3, validation BCE for early stopping).
    """

    def __init__(
        self,
        loss: str = "bce",
        alpha: float = 0.01,
        learning_rate: float = 1e-4,
        weight_decay: float = 1e-5,
        batch_size: int = 16,
        val_fraction: float = 0.2,
        patience: int = 3,
        max_epochs: int = 2000,
        seed: int = 0,
        selected_layers: list[int] | None = None,
        gating_enabled: bool = True,
    ):
        self.loss = loss
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.val_fraction = val_fraction
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed
        self.selected_layers = selected_layers
        self.gating_enabled = gating_enabled

    def _config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss,
            alpha=self.alpha,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            val_fraction=self.val_fraction,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.seed,
        )

    def _as_dataset(self, X, y=None, question_ids=None) -> TraceDataset:
        if isinstance(X, TraceDataset):
            return X
        if y is None:
            raise ValueError("labels are required when X is not a TraceDataset")
        return dataset_from_matrices(X, y, question_ids)

    def fit(self, X, y=None, question_ids=None):
        dataset = self._as_dataset(X, y, question_ids)
        self.params_, self.epoch_stats_ = train_elhsr(
            dataset,
            self._config(),
            selected_layers=self.selected_layers,
            gating_enabled=self.gating_enabled,
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("ElhsrRewardModel is not fitted; call fit first")

    def decision_function(self, X) -> np.ndarray:
        """Pooled reward of every path (the best-of-N ranking signal)."""
        self._check_fitted()
        if isinstance(X, TraceDataset):
            return np.array(
                [
                    score_path(self.params_, path_features(self.params_, X, i)).reward
                    for i in range(len(X))
                ]
            )
        return np.array([score_path(self.params_, as_token_matrix(m)).reward for m in X])

    def predict(self, X) -> np.ndarray:
        """Predicted correctness: 1 where the pooled reward is positive."""
        return (self.decision_function(X) > 0).astype(np.int64)

    def score(self, X, y=None) -> float:
        """Path-level classification accuracy against provided or stored labels."""
        if y is None:
            if not isinstance(X, TraceDataset):
                raise ValueError("labels are required when X is not a TraceDataset")
            y = X.labels()
        return float((self.predict(X) == as_label_array(y)).mean())
