"""Best-of-N selection, accuracy evaluation, and reward combination.

Candidates keep their stored (sampling) order; evaluating @k always looks at
the first k candidates only. Every argmax/argmin tie breaks to the lowest
index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, FormatError

COMBINATION_METHODS = ("elhsr_only", "ext_only", "rank", "scale")


@dataclass(frozen=True)
class Candidate:
    path_id: str
    label: int
    elhsr_reward: float
    external_reward: float | None = None


@dataclass(frozen=True)
class CandidateGroup:
    question_id: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        if len(self.candidates) < 1:
            raise DataError(f"question {self.question_id!r} has no candidates")
        for c in self.candidates:
            if not math.isfinite(c.elhsr_reward):
                raise DataError(f"{self.question_id}/{c.path_id}: non-finite reward")
            if c.external_reward is not None and not math.isfinite(c.external_reward):
                raise DataError(f"{self.question_id}/{c.path_id}: non-finite external reward")
            if c.label not in (0, 1):
                raise DataError(f"{self.question_id}/{c.path_id}: label must be 0 or 1")

    def __len__(self) -> int:
        return len(self.candidates)

    def rewards(self) -> np.ndarray:
        return np.array([c.elhsr_reward for c in self.candidates])

    def external_rewards(self) -> np.ndarray:
        values = [c.external_reward for c in self.candidates]
        if any(v is None for v in values):
            raise DataError(f"question {self.question_id!r} is missing external rewards")
        return np.array(values, dtype=np.float64)


@dataclass
class BonReport:
    method: str
    ks: list[int]
    accuracy: dict[int, float]
    selections: dict[int, list[tuple[str, str]]]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "k": self.ks,
            "accuracy": {str(k): self.accuracy[k] for k in self.ks},
            "selections": {
                str(k): [
                    {"question_id": q, "path_id": p} for q, p in self.selections[k]
                ]
                for k in self.ks
            },
        }


def bon_select(group: CandidateGroup, k: int) -> int:
    """Index of the highest-reward candidate among the first k."""
    if not 1 <= k <= len(group):
        raise DataError(f"question {group.question_id!r}: k={k} out of range 1..{len(group)}")
    return int(np.argmax(group.rewards()[:k]))


def bon_accuracy(groups: Sequence[CandidateGroup], k: int) -> float:
    """Fraction of questions whose selected candidate is correct."""
    if not groups:
        raise DataError("no candidate groups")
    return float(np.mean([g.candidates[bon_select(g, k)].label for g in groups]))


def _descending_ranks(values: np.ndarray) -> np.ndarray:
    """Rank 1 = best; ties get distinct ranks by ascending index."""
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    ranks = np.empty(len(values), dtype=np.int64)
    for position, idx in enumerate(order):
        ranks[idx] = position + 1
    return ranks


def rank_combine(group: CandidateGroup) -> int:
    """Pick the candidate whose worse-of-two ranks is best."""
    ranks_own = _descending_ranks(group.rewards())
    ranks_ext = _descending_ranks(group.external_rewards())
    relative = np.maximum(ranks_own, ranks_ext)
    return int(np.argmin(relative))


def _min_max_scale(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        # A constant reward list carries no preference; treat all as best.
        return np.ones_like(values)
    return (values - lo) / (hi - lo)


def scale_combine(group: CandidateGroup) -> int:
    """Pick the candidate with the best mean of the two [0,1]-scaled rewards."""
    scaled_own = _min_max_scale(group.rewards())
    scaled_ext = _min_max_scale(group.external_rewards())
    return int(np.argmax((scaled_own + scaled_ext) / 2.0))


def _prefix(group: CandidateGroup, k: int) -> CandidateGroup:
    if len(group) < k:
        raise DataError(f"question {group.question_id!r} has {len(group)} candidates, needs {k}")
    return CandidateGroup(group.question_id, group.candidates[:k])


def evaluate_combination(
    groups: Sequence[CandidateGroup], method: str, ks: Sequence[int]
) -> BonReport:
    """Best-of-N accuracy of a selector at each k, over the first k candidates."""
    if method not in COMBINATION_METHODS:
        raise DataError(f"method must be one of {COMBINATION_METHODS}, got {method!r}")
    if not groups:
        raise DataError("no candidate groups")
    accuracy: dict[int, float] = {}
    selections: dict[int, list[tuple[str, str]]] = {}
    for k in ks:
        hits = 0
        picks: list[tuple[str, str]] = []
        for group in groups:
            sub = _prefix(group, k)
            if method == "elhsr_only":
                idx = bon_select(sub, k)
            elif method == "ext_only":
                idx = int(np.argmax(sub.external_rewards()))
            elif method == "rank":
                idx = rank_combine(sub)
            else:
                idx = scale_combine(sub)
            hits += sub.candidates[idx].label
            picks.append((group.question_id, sub.candidates[idx].path_id))
        accuracy[k] = hits / len(groups)
        selections[k] = picks
    return BonReport(method=method, ks=list(ks), accuracy=accuracy, selections=selections)


def oracle_ceiling(groups: Sequence[CandidateGroup], k: int) -> float:
    """Fraction of questions with at least one correct candidate among the first k."""
    return float(
        np.mean([1 if any(c.label == 1 for c in _prefix(g, k).candidates) else 0 for g in groups])
    )


def write_scored_candidates(
    rows: Iterable[dict], path: str | Path
) -> Path:
    """Write a scored-candidates JSONL file (one candidate per line)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def read_scored_candidates(path: str | Path) -> list[CandidateGroup]:
    """Load scored candidates, grouping by question in first-appearance order."""
    path = Path(path)
    order: list[str] = []
    by_question: dict[str, list[Candidate]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc})") from exc
            try:
                qid = obj["question_id"]
                candidate = Candidate(
                    path_id=obj["path_id"],
                    label=int(obj["label"]),
                    elhsr_reward=float(obj["elhsr_reward"]),
                    external_reward=(
                        float(obj["external_reward"]) if obj.get("external_reward") is not None else None
                    ),
                )
            except KeyError as exc:
                raise FormatError(f"{path}: line {lineno}: missing field {exc}") from exc
            if qid not in by_question:
                order.append(qid)
                by_question[qid] = []
            by_question[qid].append(candidate)
    return [CandidateGroup(q, tuple(by_question[q])) for q in order]
