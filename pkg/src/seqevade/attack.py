"""Insertion-only evasion of sliding-window sequence classifiers.

The attack walks the ceil(l/n) windows of the original sequence. While the
black box still calls the current window span malicious (and the per-window
cap is unreached) it inserts one event at a uniformly drawn position, chosen
so the sign pattern of the resulting perturbation best matches the surrogate
Jacobian's sign. Events pushed past a window boundary become the head of the
next window's span, and original events are never removed or reordered.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import ApiSequence, Label, Vocabulary, encode_events, window_count
from .models import OracleCounter, TrainedModel
from .models.hybrid import HybridModel


class NotMalicious(ValueError):
    """The target already classifies the input benign; there is nothing to evade."""


@dataclass
class AttackConfig:
    window: int
    max_insertions_per_window: int | None = None
    insertable_only: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.max_insertions_per_window is not None and self.max_insertions_per_window < 0:
            raise ValueError("max_insertions_per_window must be >= 0")

    @property
    def cap(self) -> int:
        return self.window if self.max_insertions_per_window is None else self.max_insertions_per_window

    def for_sample(self, sample_id: str) -> "AttackConfig":
        """Stable per-sample seed derivation so batch runs are order-independent."""
        mixed = zlib.crc32(sample_id.encode("utf-8")) ^ (self.seed & 0xFFFFFFFF)
        return AttackConfig(window=self.window,
                            max_insertions_per_window=self.max_insertions_per_window,
                            insertable_only=self.insertable_only, seed=int(mixed))


@dataclass
class AttackResult:
    sample_id: str
    success: bool
    original_length: int
    perturbed: ApiSequence
    insertions: list[tuple[int, int]]  # (position in the original sequence, symbol index)
    loop_queries: int
    check_queries: int
    windows_processed: int

    @property
    def added(self) -> int:
        return len(self.insertions)

    @property
    def overhead(self) -> float:
        return self.added / self.original_length

    @property
    def total_queries(self) -> int:
        return self.loop_queries + self.check_queries

    def to_json(self) -> dict:
        return {
            "id": self.sample_id,
            "success": self.success,
            "original_length": self.original_length,
            "perturbed": self.perturbed.to_list(),
            "insertions": [[int(p), int(s)] for p, s in self.insertions],
            "loop_queries": self.loop_queries,
            "check_queries": self.check_queries,
            "windows_processed": self.windows_processed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttackResult":
        return cls(sample_id=obj["id"], success=bool(obj["success"]),
                   original_length=int(obj["original_length"]),
                   perturbed=ApiSequence(np.array(obj["perturbed"], dtype=np.int64)),
                   insertions=[(int(p), int(s)) for p, s in obj["insertions"]],
                   loop_queries=int(obj["loop_queries"]),
                   check_queries=int(obj["check_queries"]),
                   windows_processed=int(obj["windows_processed"]))


def select_insertion(window: np.ndarray, position: int, jacobian: np.ndarray,
                     vocab: Vocabulary, insertable_only: bool = True) -> int:
    """Symbol whose insertion at 1-based `position` minimizes the L2 distance
    between the sign of (old window - candidate window) and the Jacobian sign.

    Insertion shifts rows at and below `position` down by one and drops the
    last row. Ties break toward the lowest symbol index.
    """
    n, width = window.shape
    if not 1 <= position <= n:
        raise ValueError(f"position must be in [1, {n}], got {position}")
    candidates = np.array(vocab.insertable_indices() if insertable_only else range(len(vocab)),
                          dtype=np.int64)
    row = position - 1
    target_sign = np.sign(jacobian)
    shifted = np.zeros_like(window)
    shifted[:row] = window[:row]
    shifted[row + 1:] = window[row:n - 1]
    # Rows other than `row` contribute the same distance term for every
    # candidate; only the inserted row varies.
    diff_other = np.sign(window - shifted) - target_sign
    diff_other[row] = 0.0
    const_term = float((diff_other ** 2).sum())
    row_w = window[row]
    base_sign = np.sign(row_w)
    k = candidates.size
    cand_signs = np.tile(base_sign, (k, 1))
    cand_signs[np.arange(k), candidates] = np.sign(row_w[candidates] - 1.0)
    row_terms = ((cand_signs - target_sign[row][None, :]) ** 2).sum(axis=1)
    distances = const_term + row_terms
    return int(candidates[int(np.argmin(distances))])


def _insertion_attack(target: TrainedModel, seq: ApiSequence, vocab: Vocabulary,
                      cfg: AttackConfig, choose, sample_id: str) -> AttackResult:
    oracle = OracleCounter(target)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed & 0xFFFFFFFFFFFF,
                                                       spawn_key=(23,)))
    if oracle.predict_sequence(seq) is Label.BENIGN:
        raise NotMalicious(f"target classifies sample {sample_id or '<unnamed>'} benign")
    pre_queries = oracle.queries
    n = cfg.window
    vocab_size = len(vocab)
    events: list[int] = seq.to_list()
    inserted_flag: list[bool] = [False] * len(events)
    original_length = len(events)
    # Insertions push events rightward, so the sweep runs over the growing
    # sequence: material pushed out of window j is guarded when j+1 comes up.
    # The window ceiling bounds pathological growth; past it the final check
    # still decides success honestly.
    max_windows = 3 * window_count(original_length, n) + 8
    j = 0
    while j < window_count(len(events), n) and j < max_windows:
        inserted_here = 0
        while inserted_here < cfg.cap:
            span = events[j * n:(j + 1) * n]
            if oracle.predict_sequence(span) is Label.BENIGN:
                break
            i = int(rng.integers(1, n + 1))
            row = min(i - 1, len(span))
            matrix = encode_events(np.array(span, dtype=np.int64), 0, n, vocab_size)
            symbol = choose(matrix, row + 1, rng)
            events.insert(j * n + row, symbol)
            inserted_flag.insert(j * n + row, True)
            inserted_here += 1
        j += 1
    loop_queries = oracle.queries - pre_queries
    success = oracle.predict_sequence(events) is Label.BENIGN
    check_queries = oracle.queries - loop_queries
    insertions: list[tuple[int, int]] = []
    originals_seen = 0
    for flag, sym in zip(inserted_flag, events):
        if flag:
            insertions.append((originals_seen, int(sym)))
        else:
            originals_seen += 1
    return AttackResult(sample_id=sample_id, success=success,
                        original_length=original_length,
                        perturbed=ApiSequence(np.array(events, dtype=np.int64)),
                        insertions=insertions, loop_queries=loop_queries,
                        check_queries=check_queries, windows_processed=j)


def generate_adversarial(target: TrainedModel, surrogate: TrainedModel, seq: ApiSequence,
                         vocab: Vocabulary, cfg: AttackConfig,
                         sample_id: str = "") -> AttackResult:
    """Gradient-guided insertion attack (the surrogate supplies Jacobians,
    the target is consulted as a label-only black box)."""
    if not surrogate.has_jacobian():
        raise ValueError("surrogate must expose input Jacobians")

    def choose(matrix: np.ndarray, position: int, rng: np.random.Generator) -> int:
        jac = surrogate.input_jacobian(matrix)
        return select_insertion(matrix, position, jac, vocab, cfg.insertable_only)

    return _insertion_attack(target, seq, vocab, cfg, choose, sample_id)


def random_insertion_attack(target: TrainedModel, seq: ApiSequence, vocab: Vocabulary,
                            cfg: AttackConfig, sample_id: str = "") -> AttackResult:
    """Baseline: inserts uniformly random insertable symbols at the drawn positions."""
    pool = np.array(vocab.insertable_indices() if cfg.insertable_only else range(len(vocab)),
                    dtype=np.int64)

    def choose(matrix: np.ndarray, position: int, rng: np.random.Generator) -> int:
        return int(pool[int(rng.integers(0, pool.size))])

    return _insertion_attack(target, seq, vocab, cfg, choose, sample_id)


def replace_event(surrogate: TrainedModel, window: np.ndarray, row: int,
                  vocab: Vocabulary) -> tuple[np.ndarray, int]:
    """Replace the event at `row` with the symbol whose sign difference best
    matches the Jacobian sign on that row. Functionality-breaking baseline."""
    jac = surrogate.input_jacobian(window)
    target_row = np.sign(jac[row])
    row_w = window[row]
    syms = np.arange(len(vocab))
    cand_signs = np.tile(np.sign(row_w), (syms.size, 1))
    cand_signs[np.arange(syms.size), syms] = np.sign(row_w[syms] - 1.0)
    distances = ((cand_signs - target_row[None, :]) ** 2).sum(axis=1)
    best = int(np.argmin(distances))
    out = window.copy()
    out[row] = 0.0
    out[row, best] = 1.0
    return out, best


def replace_baseline(surrogate: TrainedModel, window: np.ndarray, vocab: Vocabulary,
                     max_steps: int | None = None) -> tuple[np.ndarray, bool, list[int]]:
    """Sweep rows left to right replacing events until the surrogate's own
    label flips. White-box comparison baseline; does not preserve the trace."""
    steps = window.shape[0] if max_steps is None else min(max_steps, window.shape[0])
    current = window.copy()
    replaced: list[int] = []
    for row in range(steps):
        label, _ = surrogate.predict_window(current)
        if label is Label.BENIGN:
            return current, True, replaced
        current, _ = replace_event(surrogate, current, row, vocab)
        replaced.append(row)
    label, _ = surrogate.predict_window(current)
    return current, label is Label.BENIGN, replaced


@dataclass
class StringsAttackResult:
    success: bool
    bits: np.ndarray
    flipped: list[int]
    checks: int
    non_actionable: list[int]

    def to_json(self) -> dict:
        return {"success": self.success, "flipped": [int(i) for i in self.flipped],
                "checks": self.checks,
                "non_actionable": [int(i) for i in self.non_actionable]}


def strings_attack(target: HybridModel, surrogate: HybridModel, seq: ApiSequence,
                   bits: np.ndarray, budget: int | None = None) -> StringsAttackResult:
    """Greedy 0->1 bit flips ranked by the surrogate's static-branch gradient.

    Only additions are allowed (strings can be appended to a binary, never
    proven absent), and only bits with a strictly score-reducing gradient are
    candidates. Bits already set whose gradient is negative are reported as
    non-actionable.
    """
    bits = np.asarray(bits, dtype=np.float64).copy()
    if budget is None:
        budget = bits.size
    first_window = surrogate.sequence_windows(seq)[0]
    grad0 = surrogate.gradient_static(first_window, bits)
    non_actionable = [int(i) for i in np.nonzero((bits == 1.0) & (grad0 < 0))[0]]
    flipped: list[int] = []
    checks = 0
    success = False
    while True:
        checks += 1
        if target.predict_sequence_pair(seq, bits) is Label.BENIGN:
            success = True
            break
        if len(flipped) >= budget:
            break
        grad = surrogate.gradient_static(first_window, bits)
        mask = (bits == 0.0) & (grad < 0.0)
        if not mask.any():
            break
        candidates = np.nonzero(mask)[0]
        bit = int(candidates[int(np.argmin(grad[candidates]))])
        bits[bit] = 1.0
        flipped.append(bit)
    return StringsAttackResult(success=success, bits=bits, flipped=flipped,
                               checks=checks, non_actionable=non_actionable)


@dataclass
class CombinedAttackResult:
    success: bool
    phase: str  # "api", "strings", or "none"
    api_result: AttackResult
    strings_result: StringsAttackResult | None

    def to_json(self) -> dict:
        return {"success": self.success, "phase": self.phase,
                "api": self.api_result.to_json(),
                "strings": self.strings_result.to_json() if self.strings_result else None}


def combined_hybrid_attack(target: HybridModel, surrogate: HybridModel, seq: ApiSequence,
                           bits: np.ndarray, vocab: Vocabulary, cfg: AttackConfig,
                           strings_budget: int | None = None,
                           sample_id: str = "") -> CombinedAttackResult:
    """API insertion phase first; if the hybrid still says malicious, a strings
    phase runs on the perturbed sequence. Short-circuits on success."""
    bound_target = target.bind_static(bits)
    bound_surrogate = surrogate.bind_static(bits)
    api_result = generate_adversarial(bound_target, bound_surrogate, seq, vocab, cfg,
                                      sample_id=sample_id)
    if api_result.success:
        return CombinedAttackResult(success=True, phase="api", api_result=api_result,
                                    strings_result=None)
    strings_result = strings_attack(target, surrogate, api_result.perturbed, bits,
                                    budget=strings_budget)
    phase = "strings" if strings_result.success else "none"
    return CombinedAttackResult(success=strings_result.success, phase=phase,
                                api_result=api_result, strings_result=strings_result)
