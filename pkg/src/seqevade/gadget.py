"""Trace-level realization of insertion plans as no-op API calls.

An attack result names abstract symbols to insert; this module turns them
into concrete trace entries with benign argument templates (read zero bytes
from a valid file, query an already-held handle) and checks afterwards that
the original behavior survived: the original entries must reappear in order
with their (api, status) pairs intact, and everything added must report
success.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .attack import AttackResult
from .core import Vocabulary
from .data import STATUS_SUCCESS, Trace, TraceEntry, combo_key


@dataclass(frozen=True)
class NoOpEntry:
    """Concrete no-op call template realizing one insertable symbol."""

    key: str
    api: str
    args: tuple[str, ...] = ()
    status: str = STATUS_SUCCESS

    def __post_init__(self):
        if self.status != STATUS_SUCCESS:
            raise ValueError(f"no-op template {self.key!r} must report success")
        object.__setattr__(self, "args", tuple(str(a) for a in self.args))

    def to_trace_entry(self) -> TraceEntry:
        return TraceEntry(api=self.api, args=self.args, status=self.status)


class NoOpTable:
    """Symbol key -> no-op call template."""

    def __init__(self, entries):
        self.entries: dict[str, NoOpEntry] = {}
        for e in entries:
            if e.key in self.entries:
                raise ValueError(f"duplicate no-op template for {e.key!r}")
            self.entries[e.key] = e

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def entry_for(self, key: str) -> NoOpEntry:
        try:
            return self.entries[key]
        except KeyError:
            raise KeyError(f"no no-op template for symbol {key!r}") from None

    def to_json(self) -> dict:
        return {"format": "seqevade-noop-table",
                "entries": [{"key": e.key, "api": e.api, "args": list(e.args),
                             "status": e.status}
                            for e in self.entries.values()]}

    @classmethod
    def from_json(cls, obj: dict) -> "NoOpTable":
        if obj.get("format") != "seqevade-noop-table":
            raise ValueError("not a no-op table file")
        return cls(NoOpEntry(key=e["key"], api=e["api"], args=tuple(e.get("args", ())),
                             status=e.get("status", STATUS_SUCCESS))
                   for e in obj["entries"])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "NoOpTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    @classmethod
    def bundled(cls) -> "NoOpTable":
        """The checked-in table covering the synthetic API name pool."""
        text = resources.files("seqevade").joinpath("assets/noop_table.json").read_text("utf-8")
        return cls.from_json(json.loads(text))

    def for_vocabulary(self, vocab: Vocabulary, arg_level: str = "none",
                       strict: bool = True) -> "NoOpTable":
        """Table restricted to (and covering) the vocabulary's insertable symbols.

        Symbols keyed by (api, argument-combo) are synthesized from the api's
        template with the combo token as argument, so re-encoding a rewritten
        trace reproduces the inserted symbol. With strict off, uncovered
        symbols get a bare template instead of raising.
        """
        chosen: list[NoOpEntry] = []
        missing: list[str] = []
        for sym in vocab:
            if not sym.insertable:
                continue
            api, _, combo = sym.key.partition("|")
            if arg_level == "none" and sym.key in self.entries:
                chosen.append(self.entries[sym.key])
                continue
            known = api in self.entries or sym.key in self.entries
            if known or not strict:
                entry = NoOpEntry(key=sym.key, api=api, args=(combo,) if combo else ())
                if combo_key(entry.api, entry.args, arg_level) != sym.key:
                    raise ValueError(f"cannot realize symbol {sym.key!r} at arg level {arg_level!r}")
                chosen.append(entry)
            else:
                missing.append(sym.key)
        if missing:
            shown = ", ".join(repr(k) for k in missing[:8])
            raise KeyError(f"no no-op template for {len(missing)} insertable symbol(s): {shown}")
        return NoOpTable(chosen)


@dataclass
class InsertionPlan:
    """Per-sample list of (position in the original trace, symbol key) inserts."""

    sample_id: str
    vocab_hash: str
    insertions: list[tuple[int, str]]

    def __post_init__(self):
        last = 0
        for pos, key in self.insertions:
            if pos < last:
                raise ValueError("insertion positions must be non-decreasing")
            last = pos

    def to_json(self) -> dict:
        return {"sample": self.sample_id, "vocab_hash": self.vocab_hash,
                "insertions": [{"pos": int(p), "symbol": s} for p, s in self.insertions]}

    @classmethod
    def from_json(cls, obj: dict) -> "InsertionPlan":
        return cls(sample_id=str(obj["sample"]), vocab_hash=str(obj.get("vocab_hash", "")),
                   insertions=[(int(e["pos"]), str(e["symbol"])) for e in obj["insertions"]])

    @classmethod
    def from_result(cls, result: AttackResult, vocab: Vocabulary) -> "InsertionPlan":
        insertions = []
        for pos, sym in result.insertions:
            symbol = vocab.symbols[sym]
            if not symbol.insertable:
                raise ValueError(f"attack inserted non-insertable symbol {symbol.key!r}; "
                                 "no trace-level realization exists")
            insertions.append((pos, symbol.key))
        return cls(sample_id=result.sample_id, vocab_hash=vocab.content_hash(),
                   insertions=insertions)


def write_plans(plans: list[InsertionPlan], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in plans:
            fh.write(json.dumps(p.to_json(), sort_keys=True) + "\n")


def read_plans(path: str | Path) -> list[InsertionPlan]:
    plans = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                plans.append(InsertionPlan.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return plans


def rewrite_trace(original: Trace, plan: InsertionPlan, table: NoOpTable,
                  vocab: Vocabulary | None = None) -> Trace:
    """Insert the plan's no-op entries before the named original positions.

    Position k means "before the k-th original entry"; k == len(original)
    appends. Original entries are never touched or reordered.
    """
    if vocab is not None and plan.vocab_hash and plan.vocab_hash != vocab.content_hash():
        raise ValueError(f"plan for sample {plan.sample_id!r} was built against a "
                         "different vocabulary")
    for pos, _ in plan.insertions:
        if not 0 <= pos <= len(original):
            raise ValueError(f"insertion position {pos} outside trace of length {len(original)}")
    out: list[TraceEntry] = []
    p = 0
    for k in range(len(original) + 1):
        while p < len(plan.insertions) and plan.insertions[p][0] == k:
            out.append(table.entry_for(plan.insertions[p][1]).to_trace_entry())
            p += 1
        if k < len(original):
            out.append(original.entries[k])
    return Trace(trace_id=original.trace_id, entries=out, label=original.label)


@dataclass(frozen=True)
class Verification:
    preserved: bool
    violation_index: int | None = None
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.preserved


def verify_functionality(original: Trace, modified: Trace) -> Verification:
    """Check the modification kept the original behavior.

    Preserved iff deleting some subset of modified entries yields the original
    exactly, comparing (api, status) in order, and every deleted entry reports
    success. Greedy left-to-right matching is exact here: every embedding of
    the original into the modified trace matches the same multiset of entries,
    so the leftover set the success rule applies to does not depend on which
    embedding the scan picks.
    """
    orig = original.entries
    ptr = 0
    for i, entry in enumerate(modified.entries):
        if ptr < len(orig) and entry.api == orig[ptr].api and entry.status == orig[ptr].status:
            ptr += 1
        elif entry.status != STATUS_SUCCESS:
            return Verification(False, violation_index=i,
                                reason=f"added entry {i} ({entry.api}) reports {entry.status}")
    if ptr < len(orig):
        return Verification(False, violation_index=ptr,
                            reason=f"original entry {ptr} ({orig[ptr].api}) is missing "
                                   "from the modified trace")
    return Verification(True)
