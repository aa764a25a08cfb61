"""Record types, the dataset container and the JSONL record format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

PROMPT_FAMILIES = ("Factual", "Narrative", "SymptomFocused")


class DatasetFormatError(ValueError):
    """A JSONL dataset line could not be parsed."""


@dataclass(frozen=True)
class TextSurrogate:
    """Generated text plus which covariates it was allowed to see.

    ``leaked_mask`` and ``intervals`` are provenance; they are ``None`` for
    texts read back from disk or fetched from a remote generator. For a
    rendered surrogate, ``intervals[j]`` is the covariate range the text
    reveals for coordinate ``j`` (``None`` when the coordinate is hidden).
    """

    text: str
    leaked_mask: tuple[bool, ...] | None = None
    prompt_family: str | None = None
    intervals: tuple[tuple[float, float] | None, ...] | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("surrogate text must be non-empty")
        if self.prompt_family is not None and self.prompt_family not in PROMPT_FAMILIES:
            raise ValueError(f"unknown prompt family {self.prompt_family!r}")
        if self.leaked_mask is not None and not any(self.leaked_mask):
            raise ValueError("leaked_mask must contain at least one true entry")


@dataclass(frozen=True)
class TrainRecord:
    x: np.ndarray
    a: int
    y: float
    surrogate: TextSurrogate | None = None
    tau_true: float | None = None
    group_tags: Mapping[str, str] | None = None


@dataclass(frozen=True)
class TestRecord:
    # Covariates are unobserved at inference time; there is no ``x`` field.
    t: TextSurrogate
    a: int
    y: float
    tau_true: float | None = None
    group_tags: Mapping[str, str] | None = None

    __test__ = False  # keep pytest from collecting this class


Record = Union[TrainRecord, TestRecord]


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    d_x: int
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def is_train(self) -> bool:
        return bool(self.records) and isinstance(self.records[0], TrainRecord)

    @cached_property
    def X(self) -> np.ndarray:
        if not self.is_train:
            raise AttributeError("test datasets carry no covariates")
        if not self.records:
            return np.zeros((0, self.d_x))
        out = np.vstack([np.asarray(r.x, dtype=np.float64) for r in self.records])
        out.flags.writeable = False
        return out

    @cached_property
    def a(self) -> np.ndarray:
        out = np.array([r.a for r in self.records], dtype=np.int64)
        out.flags.writeable = False
        return out

    @cached_property
    def y(self) -> np.ndarray:
        out = np.array([r.y for r in self.records], dtype=np.float64)
        out.flags.writeable = False
        return out

    @cached_property
    def tau(self) -> np.ndarray:
        out = np.array([np.nan if r.tau_true is None else r.tau_true for r in self.records])
        out.flags.writeable = False
        return out

    @property
    def texts(self) -> list[str | None]:
        return [_surrogate_of(r).text if _surrogate_of(r) is not None else None for r in self.records]

    @property
    def surrogates(self) -> list[TextSurrogate | None]:
        return [_surrogate_of(r) for r in self.records]

    def group_labels(self, key: str) -> list[str | None]:
        return [None if r.group_tags is None else r.group_tags.get(key) for r in self.records]

    def with_surrogates(self, surrogates: Sequence[TextSurrogate]) -> "Dataset":
        """Copy of a training dataset with one surrogate attached per record."""
        if len(surrogates) != len(self.records):
            raise ValueError("one surrogate per record required")
        recs = [
            TrainRecord(r.x, r.a, r.y, s, r.tau_true, r.group_tags)
            for r, s in zip(self.records, surrogates)
        ]
        return Dataset(tuple(recs), self.d_x, dict(self.meta))

    def subset(self, idx: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in idx), self.d_x, dict(self.meta))


def _surrogate_of(r: Record) -> TextSurrogate | None:
    return r.t if isinstance(r, TestRecord) else r.surrogate


def validate_dataset(ds: Dataset) -> list[str]:
    """List every invariant violation; an empty list means the dataset is usable."""
    problems: list[str] = []
    kinds = {type(r) for r in ds.records}
    if len(kinds) > 1:
        problems.append("mixed record kinds (train and test records together)")
    for i, r in enumerate(ds.records):
        if isinstance(r, TrainRecord):
            x = np.asarray(r.x, dtype=np.float64)
            if x.shape != (ds.d_x,):
                problems.append(f"index {i}: x has shape {x.shape}, expected ({ds.d_x},)")
            elif not np.all(np.isfinite(x)):
                problems.append(f"index {i}: non-finite x")
        if r.a not in (0, 1):
            problems.append(f"index {i}: treatment {r.a!r} not in {{0, 1}}")
        if not math.isfinite(r.y):
            problems.append(f"index {i}: non-finite y")
        if r.tau_true is not None and not math.isfinite(r.tau_true):
            problems.append(f"index {i}: non-finite tau_true")
    arms = {r.a for r in ds.records}
    for arm in (0, 1):
        if arm not in arms:
            problems.append(f"arm {arm} absent")
    return problems


# -- JSONL ------------------------------------------------------------------

def record_to_json(r: Record) -> str:
    if isinstance(r, TrainRecord):
        x = [float(v) for v in np.asarray(r.x, dtype=np.float64)]
        t = None if r.surrogate is None else r.surrogate.text
    else:
        x = None
        t = r.t.text
    obj = {
        "x": x,
        "a": int(r.a),
        "y": float(r.y),
        "t": t,
        "tau_true": None if r.tau_true is None else float(r.tau_true),
        "groups": None if r.group_tags is None else dict(sorted(r.group_tags.items())),
    }
    return json.dumps(obj, separators=(",", ":"))


def record_from_json(line: str, lineno: int = 0) -> Record:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"line {lineno}: expected a JSON object")
    for key in ("a", "y"):
        if key not in obj:
            raise DatasetFormatError(f"line {lineno}: missing key {key!r}")
    try:
        a = int(obj["a"])
        y = float(obj["y"])
        tau = obj.get("tau_true")
        tau = None if tau is None else float(tau)
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"line {lineno}: {exc}") from None
    groups = obj.get("groups")
    text = obj.get("t")
    sur = TextSurrogate(text) if text else None
    x = obj.get("x")
    if x is None:
        if sur is None:
            raise DatasetFormatError(f"line {lineno}: record has neither x nor t")
        return TestRecord(sur, a, y, tau, groups)
    try:
        xv = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError):
        raise DatasetFormatError(f"line {lineno}: x is not a numeric list") from None
    if xv.ndim != 1:
        raise DatasetFormatError(f"line {lineno}: x must be a flat list")
    xv.flags.writeable = False
    return TrainRecord(xv, a, y, sur, tau, groups)


def write_jsonl(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in ds.records:
            fh.write(record_to_json(r))
            fh.write("\n")


def read_jsonl(path: str | Path, meta: Mapping[str, object] | None = None) -> Dataset:
    records: list[Record] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(record_from_json(line, lineno))
    d_x = 0
    if records and isinstance(records[0], TrainRecord):
        d_x = len(records[0].x)
    return Dataset(tuple(records), d_x, dict(meta or {}))


def strip_covariates(ds: Dataset) -> Dataset:
    """Turn a training dataset with surrogates into inference-time records."""
    out = []
    for i, r in enumerate(ds.records):
        if not isinstance(r, TrainRecord):
            out.append(r)
            continue
        if r.surrogate is None:
            raise ValueError(f"index {i}: record has no surrogate text to keep")
        out.append(TestRecord(r.surrogate, r.a, r.y, r.tau_true, r.group_tags))
    return Dataset(tuple(out), ds.d_x, dict(ds.meta))
