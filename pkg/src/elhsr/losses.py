"""The five training losses and their derivatives with respect to path rewards.

Every loss is written in a logits-stable form: no exp of a large positive
argument is ever taken, so values and gradients stay finite for rewards up
to +/-1e4.
"""

from __future__ import annotations

import numpy as np

from .reward_model import sigmoid

LOSS_KINDS = ("bce", "hinge", "dpo", "infonca", "nca")
GROUP_LOSSES = ("dpo", "infonca", "nca")


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def log_sigmoid(x):
    return -softplus(-np.asarray(x, dtype=np.float64))


def loss_bce(reward: float, label: int) -> float:
    """Binary cross-entropy with the reward as the logit.

    Uses softplus(-reward) for positive labels rather than
    softplus(reward) - reward, which cancels catastrophically at large rewards.
    """
    return float(softplus(-reward) if label == 1 else softplus(reward))


def grad_bce(reward: float, label: int) -> float:
    return float(sigmoid(np.float64(reward)) - label)


def loss_hinge(reward: float, label: int) -> float:
    """Margin loss with labels mapped to signs {0,1} -> {-1,+1}."""
    sign = 2 * label - 1
    return float(max(0.0, 1.0 - sign * reward))


def grad_hinge(reward: float, label: int) -> float:
    sign = 2 * label - 1
    return -float(sign) if 1.0 - sign * reward > 0.0 else 0.0


def loss_dpo(reward_pos: float, reward_neg: float) -> float:
    """-log sigmoid(reward_pos - reward_neg), stable form."""
    return float(softplus(-(reward_pos - reward_neg)))


def grad_dpo(reward_pos: float, reward_neg: float) -> tuple[float, float]:
    """(d/d reward_pos, d/d reward_neg)."""
    g = float(sigmoid(np.float64(-(reward_pos - reward_neg))))
    return -g, g


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x)
    return shifted - np.log(np.exp(shifted).sum())


def _target_weights(rewards_gt, alpha: float) -> np.ndarray:
    gt = np.asarray(rewards_gt, dtype=np.float64)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return _softmax(gt / alpha)


def loss_infonca(rewards_pred, rewards_gt, alpha: float) -> float:
    """Soft cross-entropy between the target softmax and the predicted softmax."""
    pred = np.asarray(rewards_pred, dtype=np.float64)
    weights = _target_weights(rewards_gt, alpha)
    return float(-(weights * _log_softmax(pred)).sum())


def grad_infonca(rewards_pred, rewards_gt, alpha: float) -> np.ndarray:
    pred = np.asarray(rewards_pred, dtype=np.float64)
    return _softmax(pred) - _target_weights(rewards_gt, alpha)


def loss_nca(rewards_pred, rewards_gt, alpha: float) -> float:
    pred = np.asarray(rewards_pred, dtype=np.float64)
    weights = _target_weights(rewards_gt, alpha)
    k = pred.shape[0]
    return float(-(weights * log_sigmoid(pred)).sum() - log_sigmoid(-pred).sum() / k)


def grad_nca(rewards_pred, rewards_gt, alpha: float) -> np.ndarray:
    pred = np.asarray(rewards_pred, dtype=np.float64)
    weights = _target_weights(rewards_gt, alpha)
    k = pred.shape[0]
    return -weights * sigmoid(-pred) + sigmoid(pred) / k
