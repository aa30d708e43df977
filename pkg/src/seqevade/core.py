"""Core types: event vocabulary, API sequences, sliding-window one-hot encoding."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator

import numpy as np

if TYPE_CHECKING:
    from .data import StaticFeatures


class Label(Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"

    @classmethod
    def from_string(cls, text: str) -> "Label":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown label {text!r}; expected 'benign' or 'malicious'") from None


@dataclass(frozen=True)
class Symbol:
    key: str
    insertable: bool = True


class Vocabulary:
    """Ordered event alphabet. A symbol's index is its position in the list;
    the all-zero row in an encoded window is reserved for padding and is not
    part of the vocabulary."""

    def __init__(self, symbols: Iterable[Symbol | tuple[str, bool] | str]):
        normed: list[Symbol] = []
        for s in symbols:
            if isinstance(s, Symbol):
                normed.append(s)
            elif isinstance(s, str):
                normed.append(Symbol(s))
            else:
                key, insertable = s
                normed.append(Symbol(str(key), bool(insertable)))
        if not normed:
            raise ValueError("vocabulary must contain at least one symbol")
        keys = [s.key for s in normed]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise ValueError(f"duplicate symbol keys: {dupes}")
        if not any(s.insertable for s in normed):
            raise ValueError("vocabulary must contain at least one insertable symbol")
        self._symbols: tuple[Symbol, ...] = tuple(normed)
        self._index: dict[str, int] = {s.key: i for i, s in enumerate(self._symbols)}

    def __len__(self) -> int:
        return len(self._symbols)

    def __iter__(self) -> Iterator[Symbol]:
        return iter(self._symbols)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._symbols == other._symbols

    @property
    def symbols(self) -> tuple[Symbol, ...]:
        return self._symbols

    def key(self, index: int) -> str:
        return self._symbols[index].key

    def index_of(self, key: str) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"symbol {key!r} not in vocabulary") from None

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def is_insertable(self, index: int) -> bool:
        return self._symbols[index].insertable

    def insertable_indices(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self._symbols) if s.insertable)

    def to_json(self) -> dict:
        return {"symbols": [{"key": s.key, "insertable": s.insertable} for s in self._symbols]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        if not isinstance(obj, dict) or "symbols" not in obj:
            raise ValueError("vocabulary JSON must be an object with a 'symbols' list")
        return cls((entry["key"], entry.get("insertable", True)) for entry in obj["symbols"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def content_hash(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ApiSequence:
    """Immutable sequence of vocabulary indices."""

    events: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.events, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("sequence must be a nonempty 1-D array of event indices")
        if (arr < 0).any():
            raise ValueError("event indices must be nonnegative")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "events", arr)

    def __len__(self) -> int:
        return int(self.events.size)

    def to_list(self) -> list[int]:
        return self.events.tolist()


@dataclass
class Sample:
    sequence: ApiSequence
    label: Label
    static: "StaticFeatures | None" = None
    strings: tuple[str, ...] = ()
    sample_id: str = ""


_SPLITS = ("train", "validation", "test")


@dataclass
class Dataset:
    """One split of a corpus: labelled sequences plus optional static features."""

    samples: list[Sample]
    split: str

    def __post_init__(self):
        if self.split not in _SPLITS:
            raise ValueError(f"split must be one of {_SPLITS}, got {self.split!r}")
        if not self.samples:
            raise ValueError("dataset split must be nonempty")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def count(self, label: Label) -> int:
        return sum(1 for s in self.samples if s.label is label)


def window_count(length: int, n: int) -> int:
    if n < 1:
        raise ValueError("window length must be >= 1")
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    return math.ceil(length / n)


def encode_events(events: np.ndarray | list[int], start: int, n: int, vocab_size: int) -> np.ndarray:
    """One-hot encode n events beginning at `start`, zero-padding past the end.

    `start` must be a multiple of n and lie within the padded extent
    ceil(l/n)*n of the sequence; the all-zero row encodes padding and may only
    appear as a suffix of the final window.
    """
    arr = np.asarray(events, dtype=np.int64)
    length = arr.size
    if n < 1:
        raise ValueError("window length must be >= 1")
    if start % n != 0:
        raise ValueError(f"window start {start} is not a multiple of window length {n}")
    padded = window_count(length, n) * n
    if start < 0 or start >= padded:
        raise IndexError(f"window start {start} outside padded extent {padded}")
    window = np.zeros((n, vocab_size), dtype=np.float64)
    stop = min(start + n, length)
    chunk = arr[start:stop]
    if (chunk >= vocab_size).any():
        bad = int(chunk[chunk >= vocab_size][0])
        raise ValueError(f"event index {bad} outside vocabulary of size {vocab_size}")
    window[np.arange(stop - start), chunk] = 1.0
    return window


def encode_window(seq: ApiSequence, start: int, n: int, vocab: Vocabulary | int) -> np.ndarray:
    size = vocab if isinstance(vocab, int) else len(vocab)
    return encode_events(seq.events, start, n, size)


def windows(seq: ApiSequence, n: int, vocab: Vocabulary | int) -> list[np.ndarray]:
    """Split a sequence into its ceil(l/n) non-overlapping encoded windows."""
    size = vocab if isinstance(vocab, int) else len(vocab)
    return [encode_events(seq.events, j * n, n, size) for j in range(window_count(len(seq), n))]


def is_valid_window(matrix: np.ndarray) -> bool:
    """True iff every row is one-hot or all-zero, with zero rows only as a suffix."""
    if matrix.ndim != 2 or matrix.size == 0:
        return False
    if not np.isin(matrix, (0.0, 1.0)).all():
        return False
    row_sums = matrix.sum(axis=1)
    if not np.isin(row_sums, (0.0, 1.0)).all():
        return False
    zero_rows = row_sums == 0.0
    if zero_rows.any():
        first = int(np.argmax(zero_rows))
        if not zero_rows[first:].all():
            return False
    return True


def decode_window(matrix: np.ndarray) -> list[int]:
    """Recover event indices from a valid one-hot window, dropping padding rows."""
    if not is_valid_window(matrix):
        raise ValueError("matrix is not a valid one-hot window")
    row_sums = matrix.sum(axis=1)
    events = [int(np.argmax(row)) for row, s in zip(matrix, row_sums) if s == 1.0]
    return events
