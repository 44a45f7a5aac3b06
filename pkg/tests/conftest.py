"""Shared fixtures and independent oracles for the test suite.

The oracles here are deliberately written as plain-Python loops and
extended-precision decimal arithmetic so they share no code path with the
implementations they check.
"""

from __future__ import annotations

import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from elhsr.reward_model import ElhsrParams
from elhsr.trace_store import DatasetMeta, PathRecord, TraceDataset
from elhsr.training import BatchUnit, TrainConfig, loss_and_grad

getcontext().prec = 200


def decimal_sigmoid(x: float) -> Decimal:
    return 1 / (1 + (-Decimal(x)).exp())


def decimal_bce(reward: float, label: int) -> float:
    """Naive cross-entropy computed in 200-digit decimal arithmetic."""
    s = decimal_sigmoid(reward)
    return float(-(label * s.ln() + (1 - label) * (1 - s).ln()))


def decimal_log_sigmoid(x: float) -> float:
    return float(decimal_sigmoid(x).ln())


def naive_score(W, b, tokens, epsilon: float, gating: bool = True) -> float:
    """Token-by-token pure-Python recomputation of the pooled reward."""
    gates, rewards = [], []
    for row in tokens:
        gate_pre = sum(float(W[0][j]) * float(v) for j, v in enumerate(row)) + float(b[0])
        token_reward = sum(float(W[1][j]) * float(v) for j, v in enumerate(row)) + float(b[1])
        if gate_pre >= 0:
            gates.append(1.0 / (1.0 + math.exp(-gate_pre)))
        else:
            e = math.exp(gate_pre)
            gates.append(e / (1.0 + e))
        rewards.append(token_reward)
    if not gating:
        return sum(rewards) / len(rewards)
    gate_sum = sum(gates)
    return sum(g * r for g, r in zip(gates, rewards)) / max(gate_sum, epsilon)


def finite_difference_grads(params, batch, config, step: float = 1e-5):
    """Central differences of the batch loss over every parameter coordinate."""

    def loss_at() -> float:
        return loss_and_grad(params, batch, config)[0]

    fd_w = np.zeros_like(params.W)
    fd_b = np.zeros_like(params.b)
    for r in range(2):
        for c in range(params.W.shape[1]):
            orig = params.W[r, c]
            params.W[r, c] = orig + step
            plus = loss_at()
            params.W[r, c] = orig - step
            minus = loss_at()
            params.W[r, c] = orig
            fd_w[r, c] = (plus - minus) / (2 * step)
        orig = params.b[r]
        params.b[r] = orig + step
        plus = loss_at()
        params.b[r] = orig - step
        minus = loss_at()
        params.b[r] = orig
        fd_b[r] = (plus - minus) / (2 * step)
    return fd_w, fd_b


def gradient_rel_error(analytic, numeric) -> float:
    a = np.concatenate([analytic[0].ravel(), analytic[1]])
    n = np.concatenate([numeric[0].ravel(), numeric[1]])
    return float(np.linalg.norm(a - n) / (np.linalg.norm(n) + 1e-30))


def random_batch(rng, width: int, loss_kind: str, units: int = 3) -> list[BatchUnit]:
    """Random batch with the unit shape the loss expects (groups carry both classes)."""
    batch = []
    for u in range(units):
        if loss_kind in ("dpo", "infonca", "nca"):
            k = int(rng.integers(3, 7))
            labels = rng.integers(0, 2, size=k)
            labels[0], labels[1] = 1, 0
        else:
            k = 1
            labels = rng.integers(0, 2, size=1)
        mats = tuple(rng.standard_normal((int(rng.integers(2, 9)), width)) for _ in range(k))
        batch.append(BatchUnit(f"q{u}", mats, labels))
    return batch


def build_dataset(path_specs, L: int = 1, d: int = 4, mode: str = "hidden") -> TraceDataset:
    """Dataset from (question_id, path_id, label, matrix) tuples, in order."""
    records, blocks, offset = [], [], 0
    width = L * d
    for qid, pid, label, matrix in path_specs:
        m = np.asarray(matrix, dtype=np.float32).reshape(-1, width)
        records.append(PathRecord(qid, pid, label, m.shape[0], offset))
        blocks.append(m)
        offset += m.nbytes
    return TraceDataset(
        meta=DatasetMeta(mode=mode, num_layers=L, per_layer_dim=d),
        records=records,
        payload=np.concatenate(blocks, axis=0),
    )


def gen_masked_planted(
    seed: int,
    num_questions: int,
    paths_per_question: int,
    t_range: tuple[int, int],
    L: int,
    d: int,
    signal_layers: list[int],
    noise: float,
    margin: float = 0.0,
) -> tuple[TraceDataset, ElhsrParams]:
    """Synthetic dataset whose labels depend only on the chosen layers.

    The planted weights are zero outside the signal layers' columns, so the
    pooled reward (and hence the label) is a function of those layers alone.
    With `margin` > 0, paths whose planted reward sits within the margin are
    rejection-sampled away, leaving labels a learner can recover exactly.
    """
    from elhsr.reward_model import score_path

    meta = DatasetMeta(mode="hidden", num_layers=L, per_layer_dim=d)
    width = meta.feature_dim
    rng = np.random.default_rng(seed)
    W = np.zeros((2, width))
    for layer in signal_layers:
        W[:, layer * d : (layer + 1) * d] = rng.standard_normal((2, d)) / np.sqrt(len(signal_layers) * d)
    planted = ElhsrParams(W=W, b=rng.standard_normal(2) / np.sqrt(width), input=meta, seed=seed)

    records, blocks, offset = [], [], 0
    for q in range(num_questions):
        qid = f"q{q:04d}"
        for p in range(paths_per_question):
            while True:
                T = int(rng.integers(t_range[0], t_range[1] + 1))
                clean = rng.standard_normal((T, width)).astype(np.float32)
                reward = score_path(planted, clean).reward
                if abs(reward) >= margin:
                    break
            label = 1 if reward > 0 else 0
            stored = (clean + noise * rng.standard_normal((T, width))).astype(np.float32)
            records.append(PathRecord(qid, f"{qid}-r{p}", label, T, offset))
            blocks.append(stored)
            offset += stored.nbytes
    dataset = TraceDataset(meta=meta, records=records, payload=np.concatenate(blocks, axis=0))
    return dataset, planted


def gen_layer_shift_dataset(
    seed: int,
    num_paths: int,
    t_range: tuple[int, int],
    L: int,
    d: int,
    signal_layers: list[int],
    shift: float = 1.0,
    paths_per_question: int = 1,
) -> TraceDataset:
    """Hidden dataset where class membership shifts the mean of chosen layers.

    Layers outside `signal_layers` are pure noise, so a per-layer probe should
    separate only where the shift was applied.
    """
    rng = np.random.default_rng(seed)
    meta = DatasetMeta(mode="hidden", num_layers=L, per_layer_dim=d)
    directions = {layer: rng.standard_normal(d) for layer in signal_layers}
    for v in directions.values():
        v /= np.linalg.norm(v)
    records, blocks, offset = [], [], 0
    for p in range(num_paths):
        qid = f"q{p // paths_per_question:04d}"
        label = int(rng.integers(0, 2))
        T = int(rng.integers(t_range[0], t_range[1] + 1))
        x = rng.standard_normal((T, meta.feature_dim))
        for layer, direction in directions.items():
            x[:, layer * d : (layer + 1) * d] += (2 * label - 1) * shift * direction
        block = x.astype(np.float32)
        records.append(PathRecord(qid, f"p{p:05d}", label, T, offset))
        blocks.append(block)
        offset += block.nbytes
    return TraceDataset(meta=meta, records=records, payload=np.concatenate(blocks, axis=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_meta():
    return DatasetMeta(mode="hidden", num_layers=2, per_layer_dim=3)
