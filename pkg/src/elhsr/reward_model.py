"""Gated linear scoring of token traces.

Each token's feature vector is mapped through a 2-row affine map; the first
row (through a sigmoid) gates the second row's token reward, and the path
score is the gate-weighted mean of token rewards with an epsilon-clamped
denominator. All accumulation happens in 64-bit arithmetic regardless of the
stored feature dtype.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .trace_store import DatasetMeta, TraceDataset
from .validation import as_token_matrix

MODEL_FORMAT = "elhsr-model"
MODEL_FORMAT_VERSION = 1
DEFAULT_EPSILON = 1e-8


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, exact at extreme arguments."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ElhsrParams:
    """Reward model parameters: 2xD weights, 2-vector bias, input descriptor.

    ``selected_layers`` restricts scoring to a sorted subset of layer indices
    of the input descriptor; the weight width is then ``len(selected) * d``
    instead of ``L * d``. ``gating_enabled=False`` scores with unit gates
    (plain mean over token rewards).
    """

    W: np.ndarray
    b: np.ndarray
    input: DatasetMeta
    selected_layers: list[int] | None = None
    gating_enabled: bool = True
    epsilon: float = DEFAULT_EPSILON
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.shape != (2, self.width) or self.b.shape != (2,):
            raise ConfigError(
                f"weights must be (2, {self.width}) and bias (2,), got {self.W.shape}, {self.b.shape}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ConfigError("parameters must be finite")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.selected_layers is not None:
            sel = list(self.selected_layers)
            if not sel or sel != sorted(set(sel)):
                raise ConfigError("selected_layers must be distinct and sorted")
            if sel[0] < 0 or sel[-1] >= self.input.num_layers:
                raise ConfigError(
                    f"selected_layers {sel} out of range [0, {self.input.num_layers})"
                )
            self.selected_layers = sel

    @property
    def width(self) -> int:
        """Feature width the weights apply to (after any layer selection)."""
        if self.selected_layers is not None:
            return len(self.selected_layers) * self.input.per_layer_dim
        return self.input.feature_dim

    def copy(self) -> "ElhsrParams":
        return replace(
            self,
            W=self.W.copy(),
            b=self.b.copy(),
            selected_layers=None if self.selected_layers is None else list(self.selected_layers),
        )


@dataclass(frozen=True)
class ScoreBreakdown:
    """Per-token scoring detail for one path.

    ``gate`` equals sigmoid(gate_pre) when gating is enabled; with gating
    disabled every gate is reported as 1 and ``reward`` is the plain mean of
    ``token_rewards``.
    """

    gate_pre: np.ndarray
    gate: np.ndarray
    token_rewards: np.ndarray
    gate_sum: float
    reward: float


def feature_width(input: DatasetMeta, selected_layers: list[int] | None) -> int:
    """Weight width implied by an input descriptor and optional layer selection."""
    if selected_layers is not None:
        return len(selected_layers) * input.per_layer_dim
    return input.feature_dim


def init_params(
    seed: int,
    input: DatasetMeta,
    selected_layers: list[int] | None = None,
    gating_enabled: bool = True,
    epsilon: float = DEFAULT_EPSILON,
) -> ElhsrParams:
    """Seeded initialization: W ~ Normal(0, 1/sqrt(D)) entrywise, b = 0."""
    input.validate()
    width = feature_width(input, selected_layers)
    rng = np.random.default_rng(seed)
    return ElhsrParams(
        W=rng.standard_normal((2, width)) / np.sqrt(width),
        b=np.zeros(2),
        input=input,
        selected_layers=selected_layers,
        gating_enabled=gating_enabled,
        epsilon=epsilon,
        seed=seed,
    )


def score_path(params: ElhsrParams, tokens) -> ScoreBreakdown:
    """Score one [T x D] token matrix, returning the full per-token breakdown."""
    x = as_token_matrix(tokens, width=params.width)
    pre = x @ params.W.T + params.b
    gate_pre = pre[:, 0]
    token_rewards = pre[:, 1]
    if params.gating_enabled:
        gate = sigmoid(gate_pre)
        gate_sum = float(gate.sum())
        denom = max(gate_sum, params.epsilon)
        reward = float((gate * token_rewards).sum() / denom)
    else:
        gate = np.ones_like(gate_pre)
        gate_sum = float(len(gate))
        reward = float(token_rewards.sum() / len(token_rewards))
    return ScoreBreakdown(
        gate_pre=gate_pre,
        gate=gate,
        token_rewards=token_rewards,
        gate_sum=gate_sum,
        reward=reward,
    )


def select_layers_view(tokens: np.ndarray, selected_layers: list[int], d: int) -> np.ndarray:
    """Restrict a [T x (L*d)] matrix to the columns of the selected layers."""
    x = np.asarray(tokens)
    if x.ndim != 2 or x.shape[1] % d != 0:
        raise ConfigError(f"token width {x.shape} is not a multiple of per-layer dim {d}")
    num_layers = x.shape[1] // d
    cols: list[int] = []
    for layer in selected_layers:
        if not 0 <= layer < num_layers:
            raise ConfigError(f"layer index {layer} out of range [0, {num_layers})")
        cols.extend(range(layer * d, (layer + 1) * d))
    return x[:, cols]


def check_compatible(params: ElhsrParams, meta: DatasetMeta) -> None:
    """Raise ConfigError unless a dataset with this meta can be scored."""
    if meta.mode != params.input.mode:
        raise ConfigError(f"dataset mode {meta.mode!r} != model mode {params.input.mode!r}")
    if meta.per_layer_dim != params.input.per_layer_dim:
        raise ConfigError(
            f"dataset per-layer dim {meta.per_layer_dim} != model {params.input.per_layer_dim}"
        )
    if params.selected_layers is not None:
        if meta.num_layers <= max(params.selected_layers):
            raise ConfigError(
                f"dataset has {meta.num_layers} layers, model selects layer "
                f"{max(params.selected_layers)}"
            )
    elif meta.num_layers != params.input.num_layers:
        raise ConfigError(
            f"dataset has {meta.num_layers} layers, model expects {params.input.num_layers}"
        )


def path_features(params: ElhsrParams, dataset: TraceDataset, index: int) -> np.ndarray:
    """The float32 [T x width] view of one path as the model consumes it."""
    x = dataset.tokens(index)
    if params.selected_layers is not None:
        x = select_layers_view(x, params.selected_layers, dataset.meta.per_layer_dim)
    return x


def score_dataset(params: ElhsrParams, dataset: TraceDataset) -> list[tuple[str, float]]:
    """Score every path, preserving stored order."""
    check_compatible(params, dataset.meta)
    return [
        (rec.path_id, score_path(params, path_features(params, dataset, i)).reward)
        for i, rec in enumerate(dataset.records)
    ]


def save_params(params: ElhsrParams, path: str | Path) -> Path:
    """Write the model file: JSON header + base64 f32le blob (W row-major, then b)."""
    blob = np.concatenate([params.W.reshape(-1), params.b]).astype("<f4").tobytes()
    obj = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "input": params.input.to_dict(),
        "selected_layers": params.selected_layers,
        "gating_enabled": params.gating_enabled,
        "epsilon": params.epsilon,
        "seed": params.seed,
        "weights_b64": base64.b64encode(blob).decode("ascii"),
    }
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def load_params(path: str | Path) -> ElhsrParams:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if obj.get("format") != MODEL_FORMAT or obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: not a version-{MODEL_FORMAT_VERSION} {MODEL_FORMAT} file")
    input_meta = DatasetMeta.from_dict(obj["input"])
    selected = obj.get("selected_layers")
    selected = None if selected is None else [int(v) for v in selected]
    width = feature_width(input_meta, selected)
    flat = np.frombuffer(base64.b64decode(obj["weights_b64"]), dtype="<f4").astype(np.float64)
    if flat.shape[0] != 2 * width + 2:
        raise FormatError(
            f"{path}: weight blob has {flat.shape[0]} values, expected {2 * width + 2}"
        )
    return ElhsrParams(
        W=flat[: 2 * width].reshape(2, width),
        b=flat[2 * width :],
        input=input_meta,
        selected_layers=selected,
        gating_enabled=bool(obj["gating_enabled"]),
        epsilon=float(obj["epsilon"]),
        seed=obj.get("seed"),
    )
