"""Accuracy, attack effectiveness and overhead, and the transfer experiment.

Effectiveness is always computed over the target's own detections: the
denominator is the set of malicious samples the target classifies malicious,
so changing the surrogate never changes it.
"""

from __future__ import annotations

import csv
import multiprocessing as mp
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import AttackConfig, AttackResult, NotMalicious, generate_adversarial, \
    random_insertion_attack
from .core import Dataset, Label, Vocabulary
from .models import ModelSpec, TrainedModel, train
from .surrogate import SurrogateConfig, train_surrogate


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_json(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise ValueError("accuracy of zero evaluated samples is undefined")
    return (counts.tp + counts.tn) / counts.total


def evaluate_model(model: TrainedModel, dataset: Dataset) -> ConfusionCounts:
    """Sequence-level confusion counts (malicious is the positive class)."""
    tp = tn = fp = fn = 0
    for sample in dataset.samples:
        if model.needs_static:
            if sample.static is None:
                raise ValueError(f"sample {sample.sample_id} lacks static features")
            predicted = model.predict_sequence_pair(sample.sequence, sample.static.bits)
        else:
            predicted = model.predict_sequence(sample.sequence)
        if sample.label is Label.MALICIOUS:
            if predicted is Label.MALICIOUS:
                tp += 1
            else:
                fn += 1
        else:
            if predicted is Label.MALICIOUS:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def attack_effectiveness(results: list[AttackResult]) -> float:
    """Fraction of detected-malicious samples whose perturbation evades.

    Callers must pass results for exactly the samples the target detected;
    the attack loop enforces that precondition by refusing benign inputs.
    """
    if not results:
        raise ValueError("effectiveness over zero detected samples is undefined")
    return sum(1 for r in results if r.success) / len(results)


@dataclass(frozen=True)
class OverheadSummary:
    mean: float
    median: float
    count: int

    def to_json(self) -> dict:
        return {"mean": self.mean, "median": self.median, "count": self.count}


def attack_overhead(results: list[AttackResult]) -> OverheadSummary | None:
    """Added-call fraction over successful attacks only; None when none succeeded.

    The paper-style statistic is the mean; the median is reported alongside it
    for robustness at small sample counts.
    """
    overheads = [r.overhead for r in results if r.success]
    if not overheads:
        return None
    return OverheadSummary(mean=float(np.mean(overheads)),
                           median=float(np.median(overheads)), count=len(overheads))


@dataclass
class AttackBatch:
    """One attack method run against one target over a dataset's malicious samples."""

    results: list[AttackResult]
    undetected: int
    method: str

    @property
    def detected(self) -> int:
        return len(self.results)

    def summary(self) -> dict:
        out: dict = {
            "method": self.method,
            "detected": self.detected,
            "undetected": self.undetected,
            "successes": sum(1 for r in self.results if r.success),
        }
        out["effectiveness"] = attack_effectiveness(self.results) if self.results else None
        overhead = attack_overhead(self.results)
        out["overhead"] = overhead.to_json() if overhead else None
        if self.results:
            out["mean_loop_queries"] = float(np.mean([r.loop_queries for r in self.results]))
            out["mean_total_queries"] = float(np.mean([r.total_queries for r in self.results]))
        return out


# Worker state for sample-parallel attack batches; populated once per process
# (fork inheritance keeps per-task payloads down to the sample itself).
_BATCH_CTX: dict = {}


def _batch_init(target, surrogate, vocab, cfg, method) -> None:
    _BATCH_CTX.update(target=target, surrogate=surrogate, vocab=vocab, cfg=cfg, method=method)


def _batch_one(sample) -> AttackResult | None:
    run_cfg = _BATCH_CTX["cfg"].for_sample(sample.sample_id)
    try:
        if _BATCH_CTX["method"] == "gradient":
            return generate_adversarial(_BATCH_CTX["target"], _BATCH_CTX["surrogate"],
                                        sample.sequence, _BATCH_CTX["vocab"], run_cfg,
                                        sample_id=sample.sample_id)
        return random_insertion_attack(_BATCH_CTX["target"], sample.sequence,
                                       _BATCH_CTX["vocab"], run_cfg,
                                       sample_id=sample.sample_id)
    except NotMalicious:
        return None


def run_attack_batch(target: TrainedModel, surrogate: TrainedModel | None, dataset: Dataset,
                     vocab: Vocabulary, cfg: AttackConfig, method: str = "gradient",
                     limit: int | None = None, parallel: int = 1) -> AttackBatch:
    """Attack every malicious sample the target detects; skip the rest.

    The attack's own precondition check doubles as the detection filter, so
    each sample costs exactly one detection query plus the attack's budget.
    Per-sample seeds derive from the sample id, so results are identical at
    any parallelism level.
    """
    if method not in ("gradient", "random"):
        raise ValueError(f"unknown attack method {method!r}")
    if method == "gradient" and surrogate is None:
        raise ValueError("gradient attack needs a surrogate")
    malicious = [s for s in dataset.samples if s.label is Label.MALICIOUS]
    if limit is not None:
        malicious = malicious[:limit]
    if parallel > 1 and len(malicious) > 1:
        ctx = mp.get_context("fork")
        with ctx.Pool(processes=parallel, initializer=_batch_init,
                      initargs=(target, surrogate, vocab, cfg, method)) as pool:
            outcomes = pool.map(_batch_one, malicious)
    else:
        _batch_init(target, surrogate, vocab, cfg, method)
        outcomes = [_batch_one(s) for s in malicious]
    results = [r for r in outcomes if r is not None]
    return AttackBatch(results=results, undetected=outcomes.count(None), method=method)


@dataclass
class TransferCell:
    surrogate: str
    target: str
    effectiveness: float | None = None
    overhead_mean: float | None = None
    overhead_median: float | None = None
    mean_queries: float | None = None
    detected: int = 0
    successes: int = 0
    undetected: int = 0
    agreement: float | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return {"surrogate": self.surrogate, "target": self.target,
                "effectiveness": self.effectiveness, "overhead_mean": self.overhead_mean,
                "overhead_median": self.overhead_median, "mean_queries": self.mean_queries,
                "detected": self.detected, "successes": self.successes,
                "undetected": self.undetected, "agreement": self.agreement,
                "error": self.error}


@dataclass
class TransferMatrix:
    rows: list[str]
    columns: list[str]
    cells: dict[tuple[str, str], TransferCell] = field(default_factory=dict)

    def cell(self, surrogate: str, target: str) -> TransferCell:
        return self.cells[(surrogate, target)]

    def to_json(self) -> dict:
        return {"rows": self.rows, "columns": self.columns,
                "cells": [self.cells[(r, c)].to_json()
                          for r in self.rows for c in self.columns if (r, c) in self.cells]}

    @classmethod
    def from_json(cls, obj: dict) -> "TransferMatrix":
        matrix = cls(rows=list(obj["rows"]), columns=list(obj["columns"]))
        for cell in obj["cells"]:
            parsed = TransferCell(**cell)
            matrix.cells[(parsed.surrogate, parsed.target)] = parsed
        return matrix

    def write_csv(self, path: str | Path) -> None:
        """Wide effectiveness matrix: one row per surrogate, one column per target."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["surrogate"] + self.columns)
            for r in self.rows:
                row = [r]
                for c in self.columns:
                    cell = self.cells.get((r, c))
                    if cell is None or cell.effectiveness is None:
                        row.append("")
                    else:
                        row.append(f"{cell.effectiveness:.4f}")
                writer.writerow(row)


def run_transfer_matrix(surrogate_specs: dict[str, ModelSpec],
                        target_specs: dict[str, ModelSpec],
                        corpus: dict[str, Dataset], vocab: Vocabulary,
                        attack_cfg: AttackConfig, rounds: int = 6, epsilon: float = 0.2,
                        seed_count: int = 64, limit: int | None = None,
                        query_budget: int | None = None, parallel: int = 1,
                        ) -> tuple[TransferMatrix, dict[str, dict[str, list[AttackResult]]]]:
    """Train each target once, then for every (surrogate spec, target) cell
    train that surrogate against the target's label oracle and run the
    gradient attack on the test split's detected-malicious samples.

    A cell that raises is recorded with its error and the run continues. The
    per-sample results are returned so every cell metric can be recomputed.
    """
    for split in ("train", "validation", "test"):
        if split not in corpus:
            raise ValueError(f"corpus is missing the {split!r} split")
    targets = {name: train(spec, corpus["train"], vocab, val=corpus["validation"])
               for name, spec in target_specs.items()}
    seed_sequences = [s.sequence for s in corpus["validation"].samples[:seed_count]]
    holdout = [s.sequence for s in corpus["test"].samples]
    matrix = TransferMatrix(rows=list(surrogate_specs), columns=list(target_specs))
    raw: dict[str, dict[str, list[AttackResult]]] = {name: {} for name in surrogate_specs}
    for sur_name, sur_spec in surrogate_specs.items():
        for tgt_name, target in targets.items():
            cell = TransferCell(surrogate=sur_name, target=tgt_name)
            matrix.cells[(sur_name, tgt_name)] = cell
            try:
                sur_cfg = SurrogateConfig(spec=sur_spec, rounds=rounds, epsilon=epsilon,
                                          query_budget=query_budget)
                surrogate, sur_report = train_surrogate(target, sur_cfg, seed_sequences,
                                                        vocab, holdout=holdout)
                cell.agreement = sur_report.get("final_agreement")
                batch = run_attack_batch(target, surrogate, corpus["test"], vocab,
                                         attack_cfg, method="gradient", limit=limit,
                                         parallel=parallel)
            except Exception as exc:  # cell isolation: one failure must not kill the run
                cell.error = f"{type(exc).__name__}: {exc}"
                continue
            raw[sur_name][tgt_name] = batch.results
            cell.detected = batch.detected
            cell.undetected = batch.undetected
            cell.successes = sum(1 for r in batch.results if r.success)
            if batch.results:
                cell.effectiveness = attack_effectiveness(batch.results)
                cell.mean_queries = float(np.mean([r.total_queries for r in batch.results]))
            overhead = attack_overhead(batch.results)
            if overhead is not None:
                cell.overhead_mean = overhead.mean
                cell.overhead_median = overhead.median
    return matrix, raw
