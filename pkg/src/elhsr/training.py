"""From-scratch training of the gated linear reward model.

Gradients are computed analytically through the affine map, sigmoid gate and
clamped pooling; the whole batch is flattened into one token matrix so each
step costs two matmuls regardless of path count. The binding correctness
contract is agreement with central finite differences of the batch loss.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import losses
from .errors import ConfigError, DataError
from .reward_model import ElhsrParams, init_params, path_features, sigmoid
from .trace_store import TraceDataset

MAX_DPO_PAIRS_PER_QUESTION = 16

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule hyperparameters (defaults follow the training protocol)."""

    loss: str = "bce"
    alpha: float = 0.01
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 16
    val_fraction: float = 0.2
    patience: int = 3
    max_epochs: int = 2000
    seed: int = 0

    def validate(self) -> None:
        if self.loss not in losses.LOSS_KINDS:
            raise ConfigError(f"loss must be one of {losses.LOSS_KINDS}, got {self.loss!r}")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must be in (0, 1)")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "alpha": self.alpha,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "val_fraction": self.val_fraction,
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    is_best: bool

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "is_best": self.is_best,
        }


@dataclass(frozen=True)
class BatchUnit:
    """One optimization unit: a single path, or a whole question group."""

    question_id: str
    matrices: tuple[np.ndarray, ...]
    labels: np.ndarray


class EarlyStopping:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch: int | None = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch; returns True iff this epoch is the new incumbent."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def split_train_val(
    dataset: TraceDataset, val_fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """Split question ids (never individual paths) into train/validation sets.

    Validation gets max(1, round(fraction * Q)) questions, at least one
    question stays on each side. Deterministic given the seed.
    """
    if not 0 < val_fraction < 1:
        raise ConfigError("val_fraction must be in (0, 1)")
    qids = dataset.question_ids()
    if len(qids) < 2:
        raise DataError("need at least 2 distinct question_ids to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(qids))
    n_val = max(1, int(math.floor(val_fraction * len(qids) + 0.5)))
    n_val = min(n_val, len(qids) - 1)
    val = sorted(qids[i] for i in order[:n_val])
    train = sorted(qids[i] for i in order[n_val:])
    return train, val


def _flatten(matrices: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    counts = np.array([m.shape[0] for m in matrices], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return np.concatenate(matrices, axis=0), starts, counts


def _forward(params: ElhsrParams, x: np.ndarray, starts: np.ndarray, counts: np.ndarray):
    """Pooled rewards for a flattened stack of paths, plus backward cache."""
    pre = x @ params.W.T + params.b
    gate_pre = pre[:, 0]
    token_rewards = pre[:, 1]
    if params.gating_enabled:
        gate = sigmoid(gate_pre)
        gate_sums = np.add.reduceat(gate, starts)
        weighted = np.add.reduceat(gate * token_rewards, starts)
        denoms = np.maximum(gate_sums, params.epsilon)
        rewards = weighted / denoms
        cache = (gate, token_rewards, gate_sums, denoms, rewards)
    else:
        rewards = np.add.reduceat(token_rewards, starts) / counts
        cache = (None, token_rewards, None, None, rewards)
    return rewards, cache


def _backward(
    params: ElhsrParams,
    x: np.ndarray,
    starts: np.ndarray,
    counts: np.ndarray,
    cache,
    reward_grads: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate d(loss)/dW and d(loss)/db given d(loss)/d(reward) per path."""
    gate, token_rewards, gate_sums, denoms, rewards = cache
    if params.gating_enabled:
        scale = np.repeat(reward_grads / denoms, counts)
        # Denominator clamp: d max(G, eps)/dG is 0 on the clamped branch.
        unclamped = (gate_sums > params.epsilon).astype(np.float64)
        centered = token_rewards - np.repeat(rewards * unclamped, counts)
        gate_coeff = scale * gate * (1.0 - gate) * centered
        reward_coeff = scale * gate
    else:
        gate_coeff = np.zeros_like(token_rewards)
        reward_coeff = np.repeat(reward_grads / counts, counts)
    grad_w = np.vstack([gate_coeff @ x, reward_coeff @ x])
    grad_b = np.array([gate_coeff.sum(), reward_coeff.sum()])
    return grad_w, grad_b


def _dpo_pairs(labels: np.ndarray, question_id: str, seed: int) -> list[tuple[int, int]]:
    """All (correct, incorrect) index pairs, subsampled to a seeded cap."""
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    pairs = [(int(i), int(j)) for i in pos for j in neg]
    if len(pairs) > MAX_DPO_PAIRS_PER_QUESTION:
        rng = np.random.default_rng([seed, zlib.crc32(question_id.encode("utf-8"))])
        keep = rng.choice(len(pairs), size=MAX_DPO_PAIRS_PER_QUESTION, replace=False)
        pairs = [pairs[k] for k in sorted(keep)]
    return pairs


def loss_and_grad(
    params: ElhsrParams, batch: Sequence[BatchUnit], config: TrainConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss over batch units and its analytic gradient.

    For the pairwise loss, units whose group lacks one of the classes are
    skipped; a batch where every unit is skipped raises DataError.
    """
    if len(batch) == 0:
        raise DataError("empty batch")
    x, starts, counts = _flatten([m for unit in batch for m in unit.matrices])
    rewards, cache = _forward(params, x, starts, counts)

    reward_grads = np.zeros(len(counts))
    total_loss = 0.0
    used_units = 0
    path_idx = 0
    for unit in batch:
        k = len(unit.matrices)
        unit_rewards = rewards[path_idx : path_idx + k]
        y = unit.labels
        if config.loss == "bce":
            total_loss += losses.loss_bce(unit_rewards[0], int(y[0]))
            reward_grads[path_idx] = losses.grad_bce(unit_rewards[0], int(y[0]))
            used_units += 1
        elif config.loss == "hinge":
            total_loss += losses.loss_hinge(unit_rewards[0], int(y[0]))
            reward_grads[path_idx] = losses.grad_hinge(unit_rewards[0], int(y[0]))
            used_units += 1
        elif config.loss == "dpo":
            pairs = _dpo_pairs(y, unit.question_id, config.seed)
            if pairs:
                unit_loss = 0.0
                for i, j in pairs:
                    unit_loss += losses.loss_dpo(unit_rewards[i], unit_rewards[j])
                    d_pos, d_neg = losses.grad_dpo(unit_rewards[i], unit_rewards[j])
                    reward_grads[path_idx + i] += d_pos / len(pairs)
                    reward_grads[path_idx + j] += d_neg / len(pairs)
                total_loss += unit_loss / len(pairs)
                used_units += 1
        elif config.loss == "infonca":
            total_loss += losses.loss_infonca(unit_rewards, y, config.alpha)
            reward_grads[path_idx : path_idx + k] = losses.grad_infonca(unit_rewards, y, config.alpha)
            used_units += 1
        elif config.loss == "nca":
            total_loss += losses.loss_nca(unit_rewards, y, config.alpha)
            reward_grads[path_idx : path_idx + k] = losses.grad_nca(unit_rewards, y, config.alpha)
            used_units += 1
        else:
            raise ConfigError(f"unknown loss {config.loss!r}")
        path_idx += k

    if used_units == 0:
        raise DataError("every group in the batch lacks a (correct, incorrect) pair")
    grad_w, grad_b = _backward(params, x, starts, counts, cache, reward_grads / used_units)
    return total_loss / used_units, grad_w, grad_b


@dataclass
class AdamWState:
    step: int = 0
    m_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m_b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v_b: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def for_params(cls, params: ElhsrParams) -> "AdamWState":
        return cls(
            m_w=np.zeros_like(params.W),
            v_w=np.zeros_like(params.W),
            m_b=np.zeros_like(params.b),
            v_b=np.zeros_like(params.b),
        )


def adamw_step(
    params: ElhsrParams,
    grads: tuple[np.ndarray, np.ndarray],
    state: AdamWState,
    config: TrainConfig,
) -> tuple[ElhsrParams, AdamWState]:
    """One decoupled-weight-decay update, in place, with bias correction."""
    grad_w, grad_b = grads
    state.step += 1
    t = state.step
    for value, grad, m, v in (
        (params.W, grad_w, state.m_w, state.v_w),
        (params.b, grad_b, state.m_b, state.v_b),
    ):
        value *= 1.0 - config.learning_rate * config.weight_decay
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        value -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, state


def _build_units(
    loss_kind: str,
    groups: list[tuple[str, list[int]]],
    features: list[np.ndarray],
    labels: np.ndarray,
) -> list[BatchUnit]:
    units: list[BatchUnit] = []
    if loss_kind in losses.GROUP_LOSSES:
        for qid, idxs in groups:
            units.append(
                BatchUnit(
                    question_id=qid,
                    matrices=tuple(features[i] for i in idxs),
                    labels=labels[idxs],
                )
            )
    else:
        for qid, idxs in groups:
            for i in idxs:
                units.append(
                    BatchUnit(question_id=qid, matrices=(features[i],), labels=labels[i : i + 1])
                )
    return units


def train_elhsr(
    dataset: TraceDataset,
    config: TrainConfig,
    *,
    selected_layers: list[int] | None = None,
    gating_enabled: bool = True,
    init_seed: int | None = None,
) -> tuple[ElhsrParams, list[EpochStats]]:
    """Train on a labeled trace dataset and return the best-validation snapshot.

    Question groups are split 80/20 (by question, never by path) for early
    stopping; validation loss is always binary cross-entropy regardless of
    the training loss. Deterministic given dataset, config and seeds.
    """
    config.validate()
    if len(dataset) == 0:
        raise DataError("dataset has no paths")
    params = init_params(
        config.seed if init_seed is None else init_seed,
        dataset.meta,
        selected_layers=selected_layers,
        gating_enabled=gating_enabled,
    )

    features = [
        np.asarray(path_features(params, dataset, i), dtype=np.float64)
        for i in range(len(dataset))
    ]
    labels = dataset.labels()
    if labels.min() == labels.max():
        warnings.warn("dataset contains a single class; training proceeds", stacklevel=2)

    train_qids, val_qids = split_train_val(dataset, config.val_fraction, config.seed)
    train_set = set(train_qids)
    val_set = set(val_qids)
    groups = dataset.groups()
    train_groups = [(q, idx) for q, idx in groups if q in train_set]
    train_units = _build_units(config.loss, train_groups, features, labels)

    if config.loss == "dpo":
        usable = any(0 < unit.labels.sum() < len(unit.labels) for unit in train_units)
        if not usable:
            raise DataError("pairwise loss requires a question with both classes in training data")

    val_idx = [i for i, rec in enumerate(dataset.records) if rec.question_id in val_set]
    val_x, val_starts, val_counts = _flatten([features[i] for i in val_idx])
    val_labels = labels[val_idx]

    stopper = EarlyStopping(config.patience)
    best_params = params.copy()
    state = AdamWState.for_params(params)
    stats: list[EpochStats] = []

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng((config.seed ^ epoch) & 0x7FFFFFFFFFFFFFFF)
        order = rng.permutation(len(train_units))
        epoch_loss = 0.0
        epoch_units = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_units[i] for i in order[start : start + config.batch_size]]
            try:
                batch_loss, grad_w, grad_b = loss_and_grad(params, batch, config)
            except DataError:
                continue  # every group in this batch lacked a usable pair
            adamw_step(params, (grad_w, grad_b), state, config)
            epoch_loss += batch_loss * len(batch)
            epoch_units += len(batch)
        train_loss = epoch_loss / epoch_units if epoch_units else math.nan

        val_rewards, _ = _forward(params, val_x, val_starts, val_counts)
        val_loss = float(
            np.mean([losses.loss_bce(r, int(y)) for r, y in zip(val_rewards, val_labels)])
        )

        is_best = stopper.update(epoch, val_loss)
        if is_best:
            best_params = params.copy()
        stats.append(EpochStats(epoch, train_loss, val_loss, is_best))
        if stopper.should_stop:
            break

    return best_params, stats
