"""Adversarial evasion toolkit for sliding-window API-call-sequence classifiers.

Train a zoo of window classifiers, build a black-box surrogate by iterative
Jacobian-guided dataset augmentation, craft insertion-only adversarial
sequences, realize them as no-op trace rewrites, and measure effectiveness,
overhead, and cross-classifier transfer.
"""

from .attack import (AttackConfig, AttackResult, CombinedAttackResult, NotMalicious,
                     StringsAttackResult, combined_hybrid_attack, generate_adversarial,
                     random_insertion_attack, replace_baseline, replace_event,
                     select_insertion, strings_attack)
from .core import (ApiSequence, Dataset, Label, Sample, Symbol, Vocabulary, decode_window,
                   encode_events, encode_window, is_valid_window, window_count, windows)
from .data import (GeneratorConfig, StaticFeatures, Trace, TraceEntry, attach_static_features,
                   build_combo_vocabulary, extract_static_features, generate_corpus,
                   generate_dataset, ingest_traces, load_dataset, make_vocabulary,
                   read_traces, save_dataset, trace_from_sequence, write_traces)
from .gadget import (InsertionPlan, NoOpEntry, NoOpTable, Verification, read_plans,
                     rewrite_trace, verify_functionality, write_plans)
from .metrics import (AttackBatch, ConfusionCounts, OverheadSummary, TransferMatrix,
                      accuracy, attack_effectiveness, attack_overhead, evaluate_model,
                      run_attack_batch, run_transfer_matrix)
from .models import (FAMILIES, CapabilityError, ModelSpec, OracleCounter, TrainedModel,
                     TrainingError, input_jacobian, load_model, predict_sequence,
                     predict_window, save_model, train, train_hybrid)
from .surrogate import QueryBudgetExceeded, SurrogateConfig, project_window, train_surrogate

__version__ = "0.1.0"

__all__ = [
    "ApiSequence", "AttackBatch", "AttackConfig", "AttackResult", "CapabilityError",
    "CombinedAttackResult", "ConfusionCounts", "Dataset", "FAMILIES", "GeneratorConfig",
    "InsertionPlan", "Label", "ModelSpec", "NoOpEntry", "NoOpTable", "NotMalicious",
    "OracleCounter", "OverheadSummary", "QueryBudgetExceeded", "Sample", "StaticFeatures",
    "StringsAttackResult", "SurrogateConfig", "Symbol", "Trace", "TraceEntry",
    "TrainedModel", "TrainingError", "TransferMatrix", "Verification", "Vocabulary",
    "accuracy", "attach_static_features", "attack_effectiveness", "attack_overhead",
    "build_combo_vocabulary", "combined_hybrid_attack", "decode_window", "encode_events",
    "encode_window", "evaluate_model", "extract_static_features", "generate_adversarial",
    "generate_corpus", "generate_dataset", "ingest_traces", "input_jacobian",
    "is_valid_window", "load_dataset", "load_model", "make_vocabulary", "predict_sequence",
    "predict_window", "project_window", "random_insertion_attack", "read_plans",
    "read_traces", "replace_baseline", "replace_event", "rewrite_trace", "run_attack_batch",
    "run_transfer_matrix", "save_dataset", "save_model", "select_insertion",
    "strings_attack", "trace_from_sequence", "train", "train_hybrid", "train_surrogate",
    "verify_functionality", "window_count", "windows", "write_plans", "write_traces",
]
