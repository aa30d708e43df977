"""Surrogate training against a black-box oracle via Jacobian-guided
dataset augmentation.

The working set holds continuous window matrices; every black-box query is
the projection of a matrix to the nearest valid one-hot window, decoded to
events so the oracle can apply its own window length. The surrogate itself
trains on the continuous matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ApiSequence, Label, Vocabulary, encode_events, window_count
from .models import ModelSpec, NetModel, OracleCounter, TrainedModel
from .models.base import build_net, fit_net


class QueryBudgetExceeded(RuntimeError):
    """Budget ran out mid-augmentation; carries the best surrogate so far."""

    def __init__(self, message: str, model: TrainedModel | None = None, report: dict | None = None):
        super().__init__(message)
        self.model = model
        self.report = report or {}


@dataclass
class SurrogateConfig:
    spec: ModelSpec
    rounds: int = 6
    epsilon: float = 0.2
    query_budget: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


@dataclass
class AugmentationState:
    points: list[np.ndarray]
    labels: list[int]
    round: int = 1

    def size(self) -> int:
        return len(self.points)


def project_window(matrix: np.ndarray, epsilon: float) -> np.ndarray:
    """Nearest valid one-hot window: per-row argmax, except rows whose maximum
    is at most epsilon/2 stay all-zero (padding). Rows after the first padding
    row are zeroed so padding remains a suffix."""
    out = np.zeros_like(matrix)
    keep = matrix.max(axis=1) > epsilon / 2.0
    cols = matrix.argmax(axis=1)
    rows = np.nonzero(keep)[0]
    out[rows, cols[rows]] = 1.0
    if not keep.all():
        first_zero = int(np.argmin(keep))
        out[first_zero:] = 0.0
    return out


def _projected_events(matrix: np.ndarray, epsilon: float) -> np.ndarray:
    projected = project_window(matrix, epsilon)
    events = projected.argmax(axis=1)[projected.sum(axis=1) == 1.0]
    if events.size == 0:
        raise ValueError("projected query has no events; the working set degenerated")
    return events


def _query_label(oracle: OracleCounter, events: np.ndarray) -> int:
    return 1 if oracle.predict_sequence(events) is Label.MALICIOUS else 0


def augment_step(points: list[np.ndarray], labels: list[int], surrogate: TrainedModel,
                 epsilon: float) -> list[np.ndarray]:
    """One doubling: each point spawns x + eps * sign of the Jacobian row for
    its oracle-assigned class. Returns only the new points (len == len(points))."""
    new_points = []
    for x, lab in zip(points, labels):
        jac = surrogate.input_jacobian(x)
        direction = np.sign(jac) if lab == 1 else -np.sign(jac)
        new_points.append(x + epsilon * direction)
    return new_points


def _fit_round(spec: ModelSpec, points: list[np.ndarray], labels: list[int],
               vocab_size: int, vocab_hash: str) -> NetModel:
    X = np.stack(points)
    y = np.array(labels, dtype=np.float64)
    net = build_net(spec, vocab_size)
    report = fit_net(net, X, y, spec)
    model = NetModel(spec, vocab_size, vocab_hash, net)
    model.report = report
    return model


def train_surrogate(target: TrainedModel, cfg: SurrogateConfig,
                    seed_sequences: list[ApiSequence], vocab: Vocabulary,
                    holdout: list[ApiSequence] | None = None) -> tuple[TrainedModel, dict]:
    """Iterative augmentation: label the set via the black box, retrain the
    surrogate from fresh initialization, double the set by Jacobian steps.

    Each seed sequence contributes one window, drawn uniformly over its window
    positions so short final windows (zero-padded) appear in the working set
    at their natural rate. The report carries the per-round set sizes,
    cumulative labeling queries, and (when a holdout is given) per-round label
    agreement with the target.
    """
    if not seed_sequences:
        raise ValueError("seed set must be nonempty")
    vocab_size = len(vocab)
    if target.vocab_hash != vocab.content_hash():
        raise ValueError("target model was trained against a different vocabulary")
    oracle = OracleCounter(target)
    n = cfg.spec.window
    seed_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed & 0xFFFFFFFFFFFF,
                                                            spawn_key=(31,)))
    seed_points = []
    for s in seed_sequences:
        pick = int(seed_rng.integers(0, window_count(len(s), n)))
        seed_points.append(encode_events(s.events, pick * n, n, vocab_size))
    state = AugmentationState(points=seed_points, labels=[])
    eval_oracle = OracleCounter(target)
    target_holdout: list[int] = []
    if holdout:
        target_holdout = [1 if eval_oracle.predict_sequence(s) is Label.MALICIOUS else 0
                          for s in holdout]

    def check_budget(extra: int) -> None:
        if cfg.query_budget is not None and oracle.queries + extra > cfg.query_budget:
            raise QueryBudgetExceeded(
                f"query budget {cfg.query_budget} exhausted at round {state.round}",
                model=model_holder[0], report=_report())

    model_holder: list[TrainedModel | None] = [None]
    rounds_log: list[dict] = []

    def _report() -> dict:
        return {
            "rounds": rounds_log,
            "labeling_queries": oracle.queries,
            "evaluation_queries": eval_oracle.queries,
            "epsilon": cfg.epsilon,
            "seed_set_size": len(seed_sequences),
        }

    for t in range(1, cfg.rounds + 1):
        state.round = t
        unlabeled = state.points[len(state.labels):]
        for x in unlabeled:
            events = _projected_events(x, cfg.epsilon)
            # One labeling request costs one window evaluation per target
            # window the projected events span.
            check_budget(window_count(events.size, target.spec.window))
            state.labels.append(_query_label(oracle, events))
        model = _fit_round(cfg.spec, state.points, state.labels, vocab_size, vocab.content_hash())
        model_holder[0] = model
        entry = {"round": t, "set_size": state.size(), "labeling_queries": oracle.queries}
        if holdout:
            agree = [1 if model.predict_sequence(s) is Label.MALICIOUS else 0 for s in holdout]
            entry["agreement"] = float(np.mean([a == b for a, b in zip(agree, target_holdout)]))
        rounds_log.append(entry)
        if t < cfg.rounds:
            state.points.extend(augment_step(state.points, state.labels, model, cfg.epsilon))
    report = _report()
    if holdout:
        report["final_agreement"] = rounds_log[-1]["agreement"]
    return model_holder[0], report
