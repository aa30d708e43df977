"""Synthetic corpus generation, trace ingestion, and static string features."""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ApiSequence, Dataset, Label, Sample, Symbol, Vocabulary


class ConfigError(ValueError):
    """Raised when a generator or ingest configuration field is invalid."""


STATUS_SUCCESS = "success"
STATUS_FAILURE = "failure"
_STATUSES = (STATUS_SUCCESS, STATUS_FAILURE)

# Benign-plane API names used for synthetic vocabularies; cycled with a
# numeric suffix when the requested vocabulary is larger than the pool.
_API_NAME_POOL = (
    "NtOpenFile", "NtClose", "NtReadFile", "NtWriteFile", "NtCreateFile",
    "NtQueryInformationFile", "NtSetInformationFile", "NtDeviceIoControlFile",
    "LoadLibrary", "GetProcAddress", "FreeLibrary", "GetModuleHandle",
    "RegOpenKey", "RegQueryValue", "RegSetValue", "RegCloseKey", "RegEnumKey",
    "CreateProcess", "OpenProcess", "TerminateProcess", "CreateThread",
    "ResumeThread", "SuspendThread", "VirtualAlloc", "VirtualFree",
    "VirtualProtect", "WriteProcessMemory", "ReadProcessMemory",
    "CreateMutex", "OpenMutex", "ReleaseMutex", "CreateEvent", "SetEvent",
    "WaitForSingleObject", "Sleep", "GetSystemTime", "GetTickCount",
    "GetComputerName", "GetUserName", "GetVersionEx", "GlobalMemoryStatus",
    "FindFirstFile", "FindNextFile", "DeleteFile", "CopyFile", "MoveFile",
    "CreateDirectory", "RemoveDirectory", "GetTempPath", "GetFileAttributes",
    "SetFilePointer", "FlushFileBuffers", "DuplicateHandle", "CloseHandle",
    "ConnectNamedPipe", "CreateNamedPipe", "PeekNamedPipe", "socket",
    "connect", "send", "recv", "gethostbyname", "InternetOpen",
)


def make_vocabulary(size: int, insertable: bool = True) -> Vocabulary:
    """Deterministic synthetic vocabulary of `size` API-name symbols."""
    if size < 1:
        raise ConfigError("vocab_size must be >= 1")
    keys = []
    for i in range(size):
        base = _API_NAME_POOL[i % len(_API_NAME_POOL)]
        keys.append(base if i < len(_API_NAME_POOL) else f"{base}{i // len(_API_NAME_POOL) + 1}")
    return Vocabulary(Symbol(k, insertable) for k in keys)


@dataclass(frozen=True)
class TraceEntry:
    api: str
    args: tuple[str, ...] = ()
    status: str = STATUS_SUCCESS

    def __post_init__(self):
        if self.status not in _STATUSES:
            raise ValueError(f"status must be one of {_STATUSES}, got {self.status!r}")
        object.__setattr__(self, "args", tuple(str(a) for a in self.args))


@dataclass
class Trace:
    trace_id: str
    entries: list[TraceEntry]
    label: Label | None = None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class StaticFeatures:
    """Fixed-length 0/1 vector of string-presence indicators."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("static feature vector must be a nonempty 1-D array")
        if not np.isin(arr, (0.0, 1.0)).all():
            raise ValueError("static feature vector must be 0/1 valued")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass
class GeneratorConfig:
    """Synthetic corpus recipe: Markov benign background plus planted malicious motifs."""

    vocab_size: int = 30
    transitions: np.ndarray | None = None
    motifs: tuple[tuple[int, ...], ...] = ()
    motif_rate: float = 0.10
    min_length: int = 60
    max_length: int = 240
    seed: int = 0
    string_tokens: int = 240
    strings_enabled: bool = True

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if self.transitions is None:
            self.transitions = _random_transitions(self.vocab_size, self.seed)
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        if self.transitions.shape != (self.vocab_size, self.vocab_size):
            raise ConfigError(f"transitions must be {self.vocab_size}x{self.vocab_size} (field: transitions)")
        if (self.transitions < 0).any() or not np.allclose(self.transitions.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("transitions must be row-stochastic (field: transitions)")
        if not self.motifs:
            self.motifs = _random_motifs(self.vocab_size, self.seed, self.transitions)
        self.motifs = tuple(tuple(int(e) for e in m) for m in self.motifs)
        for m in self.motifs:
            if not (2 <= len(m) <= 5):
                raise ConfigError(f"motif length must be in [2, 5], got {len(m)} (field: motifs)")
            if any(e < 0 or e >= self.vocab_size for e in m):
                raise ConfigError("motif events must lie inside the vocabulary (field: motifs)")
        if not (0.0 <= self.motif_rate < 1.0):
            raise ConfigError("motif_rate must be in [0, 1) (field: motif_rate)")
        if self.min_length < 2 or self.max_length < self.min_length:
            raise ConfigError("length range must satisfy 2 <= min_length <= max_length (field: min_length/max_length)")
        if self.string_tokens < 10:
            raise ConfigError("string_tokens must be >= 10 (field: string_tokens)")

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "transitions": np.asarray(self.transitions).tolist(),
            "motifs": [list(m) for m in self.motifs],
            "motif_rate": self.motif_rate,
            "min_length": self.min_length,
            "max_length": self.max_length,
            "seed": self.seed,
            "string_tokens": self.string_tokens,
            "strings_enabled": self.strings_enabled,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorConfig":
        return cls(
            vocab_size=obj["vocab_size"],
            transitions=np.asarray(obj["transitions"], dtype=np.float64) if obj.get("transitions") else None,
            motifs=tuple(tuple(m) for m in obj.get("motifs", ())),
            motif_rate=obj.get("motif_rate", 0.10),
            min_length=obj.get("min_length", 60),
            max_length=obj.get("max_length", 240),
            seed=obj.get("seed", 0),
            string_tokens=obj.get("string_tokens", 240),
            strings_enabled=obj.get("strings_enabled", True),
        )


def _random_transitions(size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(101,)))
    # Rows share one skewed popularity profile, so the walk's stationary
    # distribution concentrates on a small set of common symbols and leaves a
    # long tail of rare ones for motifs to draw on.
    popularity = rng.dirichlet(alpha=np.full(size, 0.25))
    rows = rng.dirichlet(alpha=2.0 * size * popularity + 0.02, size=size)
    rows = rows + 1e-4 / size
    return rows / rows.sum(axis=1, keepdims=True)


def _stationary(trans: np.ndarray) -> np.ndarray:
    dist = np.full(trans.shape[0], 1.0 / trans.shape[0])
    for _ in range(200):
        nxt = dist @ trans
        if np.abs(nxt - dist).max() < 1e-12:
            break
        dist = nxt
    return dist


def _random_motifs(size: int, seed: int, trans: np.ndarray | None = None,
                   count: int = 4) -> tuple[tuple[int, ...], ...]:
    # Motif symbols come from the rarer half of the background's stationary
    # distribution, drawn without replacement across motifs: each occurrence
    # inside a window then carries real evidence, yet every symbol still
    # appears in benign walks, so presence alone decides nothing.
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(102,)))
    base_pool: list[int] = []
    if trans is not None and size >= 4 * count + 8:
        order = np.argsort(_stationary(trans))
        base_pool = [int(i) for i in order[:size * 3 // 5]]
    pool = list(base_pool)
    rng.shuffle(pool)
    motifs: list[tuple[int, ...]] = []
    while len(motifs) < count:
        k = int(rng.integers(4, 6))
        if base_pool and len(pool) < k:
            pool = list(base_pool)
            rng.shuffle(pool)
        if pool:
            m = tuple(pool.pop() for _ in range(k))
        else:
            m = tuple(int(e) for e in rng.integers(0, size, k))
        if m not in motifs:
            motifs.append(m)
    return tuple(motifs)


def _markov_walk(rng: np.random.Generator, trans: np.ndarray, length: int, start: int) -> list[int]:
    out = [start]
    state = start
    for _ in range(length - 1):
        state = int(rng.choice(trans.shape[0], p=trans[state]))
        out.append(state)
    return out


def _generate_events(rng: np.random.Generator, cfg: GeneratorConfig, malicious: bool) -> list[int]:
    """Markov walk shared by both classes, sprinkled with broken-motif decoys;
    malicious sequences additionally plant intact motifs. A full k-gram is
    therefore (almost) exclusive to malicious samples, while its symbols and
    sub-slices are background texture that decides nothing on its own."""
    length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
    trans = cfg.transitions
    state = int(rng.integers(0, cfg.vocab_size))
    out: list[int] = [state]
    planted = False
    while len(out) < length:
        roll = rng.random()
        if malicious and roll < cfg.motif_rate:
            motif = cfg.motifs[int(rng.integers(0, len(cfg.motifs)))]
            room = length - len(out)
            out.extend(motif[:room])
            planted = planted or room >= len(motif)
        elif roll < cfg.motif_rate + cfg.decoy_rate:
            motif = cfg.motifs[int(rng.integers(0, len(cfg.motifs)))]
            cut = max(1, len(motif) - 2)
            k = int(rng.integers(1, cut + 1))
            start = int(rng.integers(0, len(motif) - k + 1))
            out.extend(motif[start:start + k][:length - len(out)])
        else:
            state = int(rng.choice(cfg.vocab_size, p=trans[state]))
            out.append(state)
    if malicious and not planted:
        # Guarantee at least one intact motif by overwriting a random slice.
        motif = cfg.motifs[int(rng.integers(0, len(cfg.motifs)))]
        pos = int(rng.integers(0, length - len(motif) + 1))
        out[pos:pos + len(motif)] = motif
    return out[:length]


def _string_pools(cfg: GeneratorConfig) -> tuple[list[str], list[str], list[str]]:
    total = cfg.string_tokens
    n_common = total * 2 // 5
    n_side = (total - n_common) // 2
    tokens = [f"str{i:04d}" for i in range(total)]
    common = tokens[:n_common]
    benign = tokens[n_common:n_common + n_side]
    malicious = tokens[n_common + n_side:]
    return common, benign, malicious


def _generate_strings(rng: np.random.Generator, cfg: GeneratorConfig, malicious: bool) -> tuple[str, ...]:
    common, benign_pool, mal_pool = _string_pools(cfg)
    own_pool, other_pool = (mal_pool, benign_pool) if malicious else (benign_pool, mal_pool)
    picked = [t for t in common if rng.random() < 0.30]
    picked += [t for t in own_pool if rng.random() < 0.22]
    picked += [t for t in other_pool if rng.random() < 0.02]
    return tuple(sorted(picked))


def generate_dataset(cfg: GeneratorConfig, count_per_class: int, split: str = "train") -> Dataset:
    """Generate one exactly-balanced split. Same config and split -> identical dataset."""
    if count_per_class < 1:
        raise ConfigError("count_per_class must be >= 1")
    split_offset = {"train": 1, "validation": 2, "test": 3}.get(split)
    if split_offset is None:
        raise ConfigError(f"unknown split {split!r}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(split_offset,)))
    samples: list[Sample] = []
    for i in range(count_per_class * 2):
        label = Label.MALICIOUS if i % 2 == 0 else Label.BENIGN
        events = _generate_events(rng, cfg, label is Label.MALICIOUS)
        strings = _generate_strings(rng, cfg, label is Label.MALICIOUS) if cfg.strings_enabled else ()
        tag = "mal" if label is Label.MALICIOUS else "ben"
        samples.append(Sample(
            sequence=ApiSequence(np.array(events)),
            label=label,
            strings=strings,
            sample_id=f"{split[:2]}-{tag}-{i // 2:05d}",
        ))
    return Dataset(samples=samples, split=split)


def generate_corpus(cfg: GeneratorConfig, train_per_class: int, val_per_class: int,
                    test_per_class: int) -> dict[str, Dataset]:
    """Generate disjoint train/validation/test splits from one config."""
    out: dict[str, Dataset] = {}
    seen: set[tuple[int, ...]] = set()
    for split, per_class in (("train", train_per_class), ("validation", val_per_class),
                             ("test", test_per_class)):
        ds = generate_dataset(cfg, per_class, split)
        for attempt in range(1, 50):
            clashes = [i for i, s in enumerate(ds.samples) if tuple(s.sequence.to_list()) in seen]
            if not clashes:
                break
            # Regenerate colliding samples from a fresh stream; collisions are
            # astronomically rare at realistic lengths but splits must stay disjoint.
            rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                               spawn_key=(90 + attempt,)))
            for i in clashes:
                s = ds.samples[i]
                events = _generate_events(rng, cfg, s.label is Label.MALICIOUS)
                ds.samples[i] = Sample(sequence=ApiSequence(np.array(events)), label=s.label,
                                       strings=s.strings, sample_id=s.sample_id)
        seen.update(tuple(s.sequence.to_list()) for s in ds.samples)
        out[split] = ds
    return out


def contains_motif(events: list[int] | np.ndarray, motifs: tuple[tuple[int, ...], ...]) -> bool:
    seq = list(events)
    for m in motifs:
        k = len(m)
        target = list(m)
        for i in range(len(seq) - k + 1):
            if seq[i:i + k] == target:
                return True
    return False


# ---------------------------------------------------------------------------
# Trace JSONL

def read_traces(path: str | Path) -> list[Trace]:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from None
            try:
                entries = [TraceEntry(api=e["api"], args=tuple(e.get("args", ())),
                                      status=e.get("status", STATUS_SUCCESS))
                           for e in obj["events"]]
                label = Label.from_string(obj["label"]) if "label" in obj else None
                traces.append(Trace(trace_id=str(obj["id"]), entries=entries, label=label))
            except (KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: missing or invalid field ({exc})") from None
    return traces


def write_traces(traces: list[Trace], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            obj: dict = {
                "id": t.trace_id,
                "events": [{"api": e.api, "args": list(e.args), "status": e.status}
                           for e in t.entries],
            }
            if t.label is not None:
                obj["label"] = t.label.value
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


_HEX_RUN = re.compile(r"0x[0-9a-f]+")
_NUM_RUN = re.compile(r"\d{4,}")


def _normalize_arg(arg: str) -> str:
    # Keep the discriminative shape of the argument, drop volatile values.
    s = arg.strip().lower()
    s = _HEX_RUN.sub("<addr>", s)
    s = _NUM_RUN.sub("<num>", s)
    return s


def combo_key(api: str, args: tuple[str, ...], arg_level: str) -> str:
    if arg_level == "none" or not args:
        return api
    if arg_level != "combo":
        raise ConfigError(f"unknown arg_level {arg_level!r}")
    combo = _normalize_arg(args[0])
    return f"{api}|{combo}" if combo else api


def build_combo_vocabulary(traces: list[Trace], arg_level: str = "combo",
                           insertable_keys: set[str] | None = None) -> Vocabulary:
    """Vocabulary over (api, argument-combo) symbols in first-seen order.

    A symbol is flagged insertable only when its key appears in
    `insertable_keys` (normally the no-op table's keys); with no key set every
    symbol is insertable.
    """
    seen: dict[str, None] = {}
    for t in traces:
        for e in t.entries:
            seen.setdefault(combo_key(e.api, e.args, arg_level), None)
    if not seen:
        raise ValueError("no events found in traces")
    symbols = [Symbol(k, True if insertable_keys is None else k in insertable_keys)
               for k in seen]
    if not any(s.insertable for s in symbols):
        # The vocabulary type requires one insertable symbol; surface the real cause.
        raise ValueError("no trace symbol appears in the insertable key set")
    return Vocabulary(symbols)


@dataclass
class IngestResult:
    dataset: Dataset
    vocabulary: Vocabulary
    report: dict


def ingest_traces(path: str | Path, base_vocab: Vocabulary | None = None,
                  policy: str = "grow", arg_level: str = "none", min_events: int = 16,
                  assume_label: Label | None = None,
                  insertable_keys: set[str] | None = None,
                  split: str = "test") -> IngestResult:
    """Convert a trace JSONL file into a labelled dataset plus its vocabulary.

    policy "fixed" rejects symbols outside base_vocab; "grow" extends it.
    Traces with fewer than `min_events` events are dropped and counted.
    """
    if policy not in ("fixed", "grow"):
        raise ConfigError(f"unknown vocabulary policy {policy!r}")
    traces = read_traces(path)
    keys: dict[str, bool] = {}
    if base_vocab is not None:
        for s in base_vocab:
            keys[s.key] = s.insertable
    pending: list[tuple[str, Label, list[str]]] = []
    dropped_short = 0
    assumed = 0
    for t in traces:
        if len(t.entries) < min_events:
            dropped_short += 1
            continue
        label = t.label
        if label is None:
            if assume_label is None:
                raise ValueError(f"trace {t.trace_id!r} has no label and no assume_label was given")
            label = assume_label
            assumed += 1
        events = []
        for e in t.entries:
            key = combo_key(e.api, e.args, arg_level)
            if key not in keys:
                if policy == "fixed":
                    raise ValueError(f"trace {t.trace_id!r}: symbol {key!r} not in fixed vocabulary")
                keys[key] = True if insertable_keys is None else key in insertable_keys
            events.append(key)
        pending.append((t.trace_id, label, events))
    vocab = Vocabulary(Symbol(k, ins) for k, ins in keys.items())
    resolved = [Sample(sequence=ApiSequence(np.array([vocab.index_of(k) for k in events],
                                                     dtype=np.int64)),
                       label=label, sample_id=trace_id, strings=())
                for trace_id, label, events in pending]
    if not resolved:
        raise ValueError(f"{path}: no traces with at least {min_events} events")
    report = {"lines": len(traces), "kept": len(resolved), "dropped_short": dropped_short,
              "assumed_labels": assumed, "vocab_size": len(vocab)}
    return IngestResult(dataset=Dataset(samples=resolved, split=split),
                        vocabulary=vocab, report=report)


def trace_from_sequence(seq: ApiSequence, vocab: Vocabulary, trace_id: str,
                        label: Label | None = None) -> Trace:
    """Materialize a synthetic sequence as a trace of successful calls."""
    entries = []
    for idx in seq.to_list():
        key = vocab.key(idx)
        api, _, combo = key.partition("|")
        entries.append(TraceEntry(api=api, args=(combo,) if combo else (), status=STATUS_SUCCESS))
    return Trace(trace_id=trace_id, entries=entries, label=label)


# ---------------------------------------------------------------------------
# Static string features

def extract_static_features(strings_per_sample: list[tuple[str, ...]], k: int,
                            index: list[str] | None = None) -> tuple[list[StaticFeatures], list[str]]:
    """Top-k document-frequency string indicators.

    Frequency ties break lexicographically so the index is stable. Pass a
    previously computed `index` to featurize held-out samples with the same
    column meaning.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if index is None:
        df: Counter[str] = Counter()
        for strings in strings_per_sample:
            df.update(set(strings))
        ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))
        if len(ranked) < k:
            warnings.warn(f"only {len(ranked)} distinct strings available, shrinking index from {k}")
        index = [token for token, _ in ranked[:k]]
    positions = {token: j for j, token in enumerate(index)}
    features = []
    for strings in strings_per_sample:
        bits = np.zeros(len(index), dtype=np.float64)
        for s in set(strings):
            j = positions.get(s)
            if j is not None:
                bits[j] = 1.0
        features.append(StaticFeatures(bits=bits))
    return features, list(index)


def attach_static_features(datasets: dict[str, Dataset], k: int) -> list[str]:
    """Build the string index on the train split and attach bit vectors everywhere."""
    if "train" not in datasets:
        raise ValueError("static feature index requires a train split")
    _, index = extract_static_features([s.strings for s in datasets["train"].samples], k)
    for ds in datasets.values():
        feats, _ = extract_static_features([s.strings for s in ds.samples], k, index=index)
        for sample, f in zip(ds.samples, feats):
            sample.static = f
    return index


# ---------------------------------------------------------------------------
# Dataset JSONL persistence (events as vocabulary indices, vocabulary in a side file)

def save_dataset(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds.samples:
            obj = {"id": s.sample_id, "label": s.label.value, "events": s.sequence.to_list()}
            if s.strings:
                obj["strings"] = list(s.strings)
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_dataset(path: str | Path, split: str) -> Dataset:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                samples.append(Sample(
                    sequence=ApiSequence(np.array(obj["events"], dtype=np.int64)),
                    label=Label.from_string(obj["label"]),
                    strings=tuple(obj.get("strings", ())),
                    sample_id=str(obj.get("id", f"line-{lineno}")),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return Dataset(samples=samples, split=split)
