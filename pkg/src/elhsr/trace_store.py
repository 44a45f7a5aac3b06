"""On-disk trace format: write, read, validate, plus a planted-model synthetic generator.

A dataset directory holds exactly three core files:

* ``meta.json``   -- UTF-8 JSON object with the DatasetMeta fields.
* ``paths.jsonl`` -- one JSON object per line with the PathRecord fields;
  ``offset_bytes`` is a decimal integer.
* ``hidden.bin``  -- concatenated [T x D] token matrices, row-major,
  token-major, little-endian 32-bit floats. Flattened feature index is
  ``layer * per_layer_dim + j`` with layer 0 first ("embedding_first").

Byte offsets are contiguous: record k+1 starts at ``offset_k + T_k * D * 4``.
Extra files (provenance, planted models) may sit in the directory; they are
ignored by the reader and the validator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, FormatError

META_FILE = "meta.json"
MANIFEST_FILE = "paths.jsonl"
PAYLOAD_FILE = "hidden.bin"

SUPPORTED_FORMAT_VERSION = 1
MODES = ("hidden", "logits")
DTYPE = "f32le"
LAYER_ORDER = "embedding_first"
BYTES_PER_VALUE = 4

_META_FIELDS = ("format_version", "mode", "num_layers", "per_layer_dim", "dtype", "layer_order")
_RECORD_FIELDS = ("question_id", "path_id", "label", "num_tokens", "offset_bytes")


@dataclass(frozen=True)
class DatasetMeta:
    """Describes the feature layout of a trace dataset."""

    mode: str
    num_layers: int
    per_layer_dim: int
    format_version: int = SUPPORTED_FORMAT_VERSION
    dtype: str = DTYPE
    layer_order: str = LAYER_ORDER

    @property
    def feature_dim(self) -> int:
        return self.num_layers * self.per_layer_dim

    def validate(self) -> None:
        if self.format_version != SUPPORTED_FORMAT_VERSION:
            raise FormatError(f"unsupported format_version {self.format_version}")
        if self.mode not in MODES:
            raise FormatError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.num_layers < 1 or self.per_layer_dim < 1:
            raise FormatError("num_layers and per_layer_dim must be >= 1")
        if self.mode == "logits" and self.num_layers != 1:
            raise FormatError("logits mode requires num_layers == 1")
        if self.dtype != DTYPE:
            raise FormatError(f"dtype must be {DTYPE!r}, got {self.dtype!r}")
        if self.layer_order != LAYER_ORDER:
            raise FormatError(f"layer_order must be {LAYER_ORDER!r}, got {self.layer_order!r}")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "mode": self.mode,
            "num_layers": self.num_layers,
            "per_layer_dim": self.per_layer_dim,
            "dtype": self.dtype,
            "layer_order": self.layer_order,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetMeta":
        missing = [f for f in _META_FIELDS if f not in obj]
        if missing:
            raise FormatError(f"{META_FILE}: missing fields {missing}")
        meta = cls(
            format_version=obj["format_version"],
            mode=obj["mode"],
            num_layers=obj["num_layers"],
            per_layer_dim=obj["per_layer_dim"],
            dtype=obj["dtype"],
            layer_order=obj["layer_order"],
        )
        meta.validate()
        return meta


@dataclass(frozen=True)
class PathRecord:
    """Manifest entry for one reasoning path."""

    question_id: str
    path_id: str
    label: int
    num_tokens: int
    offset_bytes: int

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "path_id": self.path_id,
            "label": self.label,
            "num_tokens": self.num_tokens,
            "offset_bytes": self.offset_bytes,
        }


@dataclass
class TraceDataset:
    """In-memory dataset: meta, ordered records, and the token payload.

    ``payload`` is a float32 array of shape [total_tokens, D]; the rows for
    record k are ``payload[row_start_k : row_start_k + T_k]``.
    """

    meta: DatasetMeta
    records: list[PathRecord]
    payload: np.ndarray

    def __post_init__(self) -> None:
        total = sum(r.num_tokens for r in self.records)
        if self.payload.shape != (total, self.meta.feature_dim):
            raise FormatError(
                f"payload shape {self.payload.shape} does not match records "
                f"({total} tokens x {self.meta.feature_dim})"
            )

    def __len__(self) -> int:
        return len(self.records)

    def tokens(self, index: int) -> np.ndarray:
        """Return the [T x D] float32 token matrix of the index-th path."""
        start = sum(r.num_tokens for r in self.records[:index])
        return self.payload[start : start + self.records[index].num_tokens]

    def iter_paths(self) -> Iterable[tuple[PathRecord, np.ndarray]]:
        start = 0
        for rec in self.records:
            yield rec, self.payload[start : start + rec.num_tokens]
            start += rec.num_tokens

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def question_ids(self) -> list[str]:
        """Unique question ids in first-appearance order."""
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.question_id, None)
        return list(seen)

    def groups(self) -> list[tuple[str, list[int]]]:
        """Path indices grouped by question, preserving stored order."""
        out: dict[str, list[int]] = {}
        for i, rec in enumerate(self.records):
            out.setdefault(rec.question_id, []).append(i)
        return list(out.items())

    def payload_bytes(self) -> bytes:
        return np.ascontiguousarray(self.payload, dtype="<f4").tobytes()


@dataclass(frozen=True)
class Finding:
    """One machine-readable validation finding."""

    code: str
    file: str
    message: str
    record_index: int | None = None

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "file": self.file,
            "record_index": self.record_index,
            "message": self.message,
        }


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, code: str, file: str, message: str, record_index: int | None = None) -> None:
        self.findings.append(Finding(code, file, message, record_index))

    def to_dict(self) -> dict:
        return {"ok": self.ok, "findings": [f.to_dict() for f in self.findings]}


def write_dataset(
    meta: DatasetMeta,
    paths: Sequence[tuple[str, str, int, np.ndarray]],
    directory: str | Path,
) -> Path:
    """Write a dataset directory from (question_id, path_id, label, matrix) tuples.

    Offsets are computed contiguously in input order. Records of one question
    must arrive contiguously; matrices must be [T x D] with D matching meta.
    """
    meta.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    width = meta.feature_dim
    records: list[PathRecord] = []
    blocks: list[np.ndarray] = []
    offset = 0
    last_qid: str | None = None
    closed_qids: set[str] = set()

    for question_id, path_id, label, matrix in paths:
        if question_id != last_qid:
            if question_id in closed_qids:
                raise FormatError(f"records for question {question_id!r} are not contiguous")
            if last_qid is not None:
                closed_qids.add(last_qid)
            last_qid = question_id
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[1] != width:
            raise FormatError(
                f"path {path_id!r}: matrix shape {m.shape} does not match feature width {width}"
            )
        if m.shape[0] < 1:
            raise FormatError(f"path {path_id!r}: empty token matrix")
        if not np.all(np.isfinite(m)):
            raise DataError(f"path {path_id!r}: matrix contains non-finite values")
        if label not in (0, 1):
            raise DataError(f"path {path_id!r}: label must be 0 or 1, got {label!r}")
        block = np.ascontiguousarray(m, dtype="<f4")
        records.append(PathRecord(question_id, path_id, int(label), m.shape[0], offset))
        blocks.append(block)
        offset += block.nbytes

    (directory / META_FILE).write_text(json.dumps(meta.to_dict(), indent=2) + "\n", encoding="utf-8")
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")
    with open(directory / PAYLOAD_FILE, "wb") as fh:
        for block in blocks:
            fh.write(block.tobytes())
    return directory


def read_dataset(directory: str | Path) -> TraceDataset:
    """Read a dataset directory, failing fast with file + record locations."""
    directory = Path(directory)
    for name in (META_FILE, MANIFEST_FILE, PAYLOAD_FILE):
        if not (directory / name).is_file():
            raise FormatError(f"{directory}: missing {name}")

    try:
        meta_obj = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{META_FILE}: invalid JSON ({exc})") from exc
    if not isinstance(meta_obj, dict):
        raise FormatError(f"{META_FILE}: expected a JSON object")
    meta = DatasetMeta.from_dict(meta_obj)
    width = meta.feature_dim

    records: list[PathRecord] = []
    expected_offset = 0
    with open(directory / MANIFEST_FILE, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{MANIFEST_FILE}: record {lineno}: invalid JSON ({exc})") from exc
            missing = [f for f in _RECORD_FIELDS if f not in obj]
            if missing:
                raise FormatError(f"{MANIFEST_FILE}: record {lineno}: missing fields {missing}")
            rec = PathRecord(
                question_id=obj["question_id"],
                path_id=obj["path_id"],
                label=obj["label"],
                num_tokens=obj["num_tokens"],
                offset_bytes=obj["offset_bytes"],
            )
            if rec.label not in (0, 1):
                raise FormatError(f"{MANIFEST_FILE}: record {lineno}: label {rec.label!r} not in {{0,1}}")
            if not isinstance(rec.num_tokens, int) or rec.num_tokens < 1:
                raise FormatError(f"{MANIFEST_FILE}: record {lineno}: num_tokens must be >= 1")
            if rec.offset_bytes != expected_offset:
                raise FormatError(
                    f"{MANIFEST_FILE}: record {lineno}: offset {rec.offset_bytes} "
                    f"is not contiguous (expected {expected_offset})"
                )
            expected_offset += rec.num_tokens * width * BYTES_PER_VALUE
            records.append(rec)

    raw = (directory / PAYLOAD_FILE).read_bytes()
    if len(raw) != expected_offset:
        where = f"record {len(records) - 1}" if records else "empty manifest"
        raise FormatError(
            f"{PAYLOAD_FILE}: size {len(raw)} does not match manifest total "
            f"{expected_offset} ({where})"
        )
    total_tokens = expected_offset // (width * BYTES_PER_VALUE)
    payload = np.frombuffer(raw, dtype="<f4").reshape(total_tokens, width)
    return TraceDataset(meta=meta, records=records, payload=payload)


def validate_dataset(directory: str | Path) -> ValidationReport:
    """Check every format invariant, collecting findings instead of raising."""
    directory = Path(directory)
    report = ValidationReport()

    for name in (META_FILE, MANIFEST_FILE, PAYLOAD_FILE):
        if not (directory / name).is_file():
            report.add("missing_file", name, f"{name} not found in {directory}")
    if not report.ok:
        return report

    width: int | None = None
    try:
        meta_obj = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        report.add("meta_invalid_json", META_FILE, str(exc))
        meta_obj = None
    if isinstance(meta_obj, dict):
        for field_name in _META_FIELDS:
            if field_name not in meta_obj:
                report.add("meta_missing_field", META_FILE, f"missing field {field_name!r}")
        for key in meta_obj:
            if key not in _META_FIELDS:
                report.add("meta_unknown_field", META_FILE, f"unexpected field {key!r}")
        if all(f in meta_obj for f in _META_FIELDS):
            try:
                meta = DatasetMeta.from_dict({k: meta_obj[k] for k in _META_FIELDS})
                width = meta.feature_dim
            except FormatError as exc:
                report.add("meta_bad_value", META_FILE, str(exc))
    elif meta_obj is not None:
        report.add("meta_invalid_json", META_FILE, "expected a JSON object")

    records: list[PathRecord] = []
    parse_ok = True
    with open(directory / MANIFEST_FILE, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                report.add("record_invalid_json", MANIFEST_FILE, str(exc), lineno)
                parse_ok = False
                continue
            missing = [f for f in _RECORD_FIELDS if f not in obj]
            extra = [k for k in obj if k not in _RECORD_FIELDS]
            if missing:
                report.add("record_missing_field", MANIFEST_FILE, f"missing fields {missing}", lineno)
                parse_ok = False
                continue
            if extra:
                report.add("record_unknown_field", MANIFEST_FILE, f"unexpected fields {extra}", lineno)
            rec = PathRecord(
                question_id=obj["question_id"],
                path_id=obj["path_id"],
                label=obj["label"],
                num_tokens=obj["num_tokens"],
                offset_bytes=obj["offset_bytes"],
            )
            if rec.label not in (0, 1):
                report.add("label_domain", MANIFEST_FILE, f"label {rec.label!r} not in {{0,1}}", lineno)
            if not isinstance(rec.num_tokens, int) or rec.num_tokens < 1:
                report.add("num_tokens_domain", MANIFEST_FILE, "num_tokens must be an integer >= 1", lineno)
                parse_ok = False
                continue
            records.append(rec)

    seen_questions: set[str] = set()
    last_qid: str | None = None
    for i, rec in enumerate(records):
        if rec.question_id != last_qid:
            if rec.question_id in seen_questions:
                report.add(
                    "question_contiguity",
                    MANIFEST_FILE,
                    f"records for question {rec.question_id!r} are not contiguous",
                    i,
                )
            if last_qid is not None:
                seen_questions.add(last_qid)
            last_qid = rec.question_id

    if width is None or not parse_ok:
        return report

    expected_offset = 0
    for i, rec in enumerate(records):
        if rec.offset_bytes != expected_offset:
            report.add(
                "offset_contiguity",
                MANIFEST_FILE,
                f"offset {rec.offset_bytes} != expected {expected_offset}",
                i,
            )
            # Re-anchor so one bad offset produces one finding, not a cascade.
            expected_offset = rec.offset_bytes
        expected_offset += rec.num_tokens * width * BYTES_PER_VALUE

    payload_size = (directory / PAYLOAD_FILE).stat().st_size
    manifest_total = sum(r.num_tokens for r in records) * width * BYTES_PER_VALUE
    if payload_size != manifest_total:
        report.add(
            "payload_size",
            PAYLOAD_FILE,
            f"payload is {payload_size} bytes, manifest requires {manifest_total}",
        )
        return report

    raw = np.fromfile(directory / PAYLOAD_FILE, dtype="<f4")
    row = 0
    for i, rec in enumerate(records):
        block = raw[row * width : (row + rec.num_tokens) * width]
        if not np.all(np.isfinite(block)):
            report.add("non_finite", PAYLOAD_FILE, f"path {rec.path_id!r} contains non-finite values", i)
        row += rec.num_tokens
    return report


def gen_synthetic(
    seed: int,
    num_questions: int,
    paths_per_question: int,
    T_range: tuple[int, int],
    L: int,
    d: int,
    noise: float,
):
    """Generate a labeled dataset from a planted linear reward model.

    The planted weights and bias are drawn standard normal; token features
    are i.i.d. standard normal. Each path is labeled 1 iff its pooled reward
    under the planted model is positive, *then* feature noise of the given
    standard deviation is added. Pure function of its arguments.

    Returns (TraceDataset, planted ElhsrParams).
    """
    from .reward_model import ElhsrParams, score_path

    t_min, t_max = T_range
    if num_questions < 1 or paths_per_question < 1 or t_min < 1 or t_max < t_min:
        raise ValueError("ranges must be positive and T_range ordered")
    if L < 1 or d < 1:
        raise ValueError("L and d must be >= 1")
    if noise < 0:
        raise ValueError("noise must be >= 0")

    meta = DatasetMeta(mode="hidden", num_layers=L, per_layer_dim=d)
    width = meta.feature_dim
    rng = np.random.default_rng(seed)
    planted = ElhsrParams(
        W=rng.standard_normal((2, width)),
        b=rng.standard_normal(2),
        input=meta,
        gating_enabled=True,
        seed=seed,
    )

    qid_digits = max(4, len(str(num_questions - 1)))
    records: list[PathRecord] = []
    blocks: list[np.ndarray] = []
    offset = 0
    for q in range(num_questions):
        qid = f"q{q:0{qid_digits}d}"
        for p in range(paths_per_question):
            T = int(rng.integers(t_min, t_max + 1))
            clean = rng.standard_normal((T, width)).astype(np.float32)
            # Label from the exact float32 features the consumer will see.
            reward = score_path(planted, clean).reward
            label = 1 if reward > 0 else 0
            stored = (clean + noise * rng.standard_normal((T, width))).astype(np.float32)
            records.append(PathRecord(qid, f"{qid}-r{p}", label, T, offset))
            blocks.append(stored)
            offset += stored.nbytes
    payload = np.concatenate(blocks, axis=0)
    return TraceDataset(meta=meta, records=records, payload=payload), planted


def write_trace_dataset(dataset: TraceDataset, directory: str | Path) -> Path:
    """Write an in-memory TraceDataset to a directory."""
    return write_dataset(
        dataset.meta,
        [(r.question_id, r.path_id, r.label, m) for r, m in dataset.iter_paths()],
        directory,
    )
