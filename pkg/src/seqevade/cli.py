"""Command-line front end: corpus generation, training, surrogate building,
attacks, the transfer matrix, trace rewriting, and verification.

Every command writes its resolved configuration (flags plus input hashes)
next to its outputs, and identical resolved configurations produce
byte-identical output files. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .attack import AttackConfig
from .core import Dataset, Label, Vocabulary
from .data import (ConfigError, GeneratorConfig, attach_static_features, generate_corpus,
                   load_dataset, make_vocabulary, read_traces, save_dataset,
                   trace_from_sequence, write_traces)
from .gadget import NoOpTable, read_plans, rewrite_trace, verify_functionality, write_plans, \
    InsertionPlan
from .metrics import accuracy, evaluate_model, run_attack_batch, run_transfer_matrix
from .models import FAMILIES, ModelSpec, load_model, save_model, train
from .report import (attack_figure, dataset_figure, rewrite_figure, surrogate_figure,
                     training_figure, transfer_figure, verify_figure, write_json)
from .surrogate import QueryBudgetExceeded, SurrogateConfig, train_surrogate

_SPEC_OVERRIDE_FLAGS = ("hidden", "layers", "dropout", "optimizer", "learning_rate",
                        "epochs", "batch_size", "trees", "max_depth", "reg_c")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_config(out: Path, args: argparse.Namespace, inputs: dict[str, Path]) -> None:
    flags = {}
    for key, value in vars(args).items():
        if key in ("func", "config"):
            continue
        flags[key] = str(value) if isinstance(value, Path) else value
    resolved = {"command": args.command, "flags": flags,
                "input_hashes": {name: _sha256(p) for name, p in sorted(inputs.items())}}
    write_json(resolved, out / "config.json")


def _outdir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec_from_args(args: argparse.Namespace, family: str, window: int) -> ModelSpec:
    overrides = {k: getattr(args, k) for k in _SPEC_OVERRIDE_FLAGS
                 if hasattr(args, k) and getattr(args, k) is not None}
    return ModelSpec.defaults(family, window=window, seed=args.seed, **overrides)


def _load_split(data_dir: Path, split: str, required: bool = True) -> Dataset | None:
    path = data_dir / f"{split}.jsonl"
    if not path.exists():
        if required:
            raise ConfigError(f"{path} not found; point --data at a gen-data output directory")
        return None
    return load_dataset(path, split)


def _resolve_vocab(args: argparse.Namespace, near: Path) -> tuple[Vocabulary, Path]:
    path = Path(args.vocab) if getattr(args, "vocab", None) else near / "vocab.json"
    if not path.exists():
        raise ConfigError(f"vocabulary file {path} not found (pass --vocab)")
    return Vocabulary.load(path), path


def cmd_gen_data(args: argparse.Namespace) -> int:
    out = _outdir(args)
    gen_cfg = GeneratorConfig(vocab_size=args.vocab_size, motif_rate=args.motif_rate,
                              min_length=args.min_length, max_length=args.max_length,
                              seed=args.seed, string_tokens=args.string_tokens,
                              strings_enabled=not args.no_strings)
    vocab = make_vocabulary(args.vocab_size)
    corpus = generate_corpus(gen_cfg, args.train_per_class, args.val_per_class,
                             args.test_per_class)
    vocab.save(out / "vocab.json")
    for split, ds in corpus.items():
        save_dataset(ds, out / f"{split}.jsonl")
    write_json(gen_cfg.to_json(), out / "generator.json")
    lengths: dict[str, list[int]] = {"malicious": [], "benign": []}
    for ds in corpus.values():
        for s in ds.samples:
            lengths["malicious" if s.label is Label.MALICIOUS else "benign"].append(
                len(s.sequence))
    dataset_figure(lengths, out / "corpus.png")
    _write_config(out, args, {})
    total = sum(len(ds.samples) for ds in corpus.values())
    print(f"wrote {total} samples over {len(corpus)} splits to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    out = _outdir(args)
    data_dir = Path(args.data)
    vocab, vocab_path = _resolve_vocab(args, data_dir)
    splits = {"train": _load_split(data_dir, "train")}
    for name in ("validation", "test"):
        ds = _load_split(data_dir, name, required=False)
        if ds is not None:
            splits[name] = ds
    spec = _spec_from_args(args, args.family, args.window)
    if args.family == "hybrid":
        index = attach_static_features(splits, args.static_bits)
        write_json({"strings": index}, out / "string_index.json")
    model = train(spec, splits["train"], vocab, val=splits.get("validation"))
    model_path = out / f"{args.name or args.family}.model"
    save_model(model, model_path)
    report = {"spec": model.spec.to_json(), "training": model.report,
              "vocab_hash": vocab.content_hash()}
    for name in ("validation", "test"):
        if name in splits:
            counts = evaluate_model(model, splits[name])
            report[f"{name}_confusion"] = counts.to_json()
            report[f"{name}_accuracy"] = accuracy(counts)
    write_json(report, out / "train_report.json")
    training_figure(model.report, f"{args.family} (window {spec.window})", out / "training.png")
    inputs = {"vocab": vocab_path}
    inputs.update({name: data_dir / f"{name}.jsonl" for name in splits})
    _write_config(out, args, inputs)
    acc = report.get("test_accuracy")
    tail = f", test accuracy {acc:.3f}" if acc is not None else ""
    print(f"trained {args.family} -> {model_path}{tail}")
    return 0


def cmd_surrogate(args: argparse.Namespace) -> int:
    out = _outdir(args)
    data_dir = Path(args.data)
    target = load_model(args.target)
    vocab, vocab_path = _resolve_vocab(args, data_dir)
    seeds_ds = _load_split(data_dir, "validation")
    holdout_ds = _load_split(data_dir, "test", required=False)
    window = args.window if args.window is not None else target.spec.window
    spec = _spec_from_args(args, args.family, window)
    cfg = SurrogateConfig(spec=spec, rounds=args.rounds, epsilon=args.epsilon,
                          query_budget=args.budget, seed=args.seed)
    seed_sequences = [s.sequence for s in seeds_ds.samples[:args.seed_count]]
    holdout = [s.sequence for s in holdout_ds.samples] if holdout_ds else None
    inputs = {"target": Path(args.target), "vocab": vocab_path,
              "validation": data_dir / "validation.jsonl"}
    try:
        model, rep = train_surrogate(target, cfg, seed_sequences, vocab, holdout=holdout)
    except QueryBudgetExceeded as exc:
        if exc.model is not None:
            save_model(exc.model, out / "surrogate.model")
        write_json(exc.report, out / "surrogate_report.json")
        _write_config(out, args, inputs)
        print(f"error: {exc} (partial results in {out})", file=sys.stderr)
        return 1
    save_model(model, out / "surrogate.model")
    write_json(rep, out / "surrogate_report.json")
    surrogate_figure(rep, out / "surrogate.png")
    _write_config(out, args, inputs)
    agree = rep.get("final_agreement")
    tail = f", agreement {agree:.3f}" if agree is not None else ""
    print(f"surrogate trained with {rep['labeling_queries']} labeling queries{tail}")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    out = _outdir(args)
    data_path = Path(args.data)
    if data_path.is_dir():
        data_path = data_path / "test.jsonl"
    dataset = load_dataset(data_path, "test")
    vocab, vocab_path = _resolve_vocab(args, data_path.parent)
    target = load_model(args.target)
    if target.needs_static:
        raise ConfigError("the attack command drives sequence-only targets; "
                          "hybrid targets are attacked via the library's combined attack")
    surrogate = load_model(args.surrogate) if args.surrogate else None
    window = args.window if args.window is not None else target.spec.window
    cfg = AttackConfig(window=window, max_insertions_per_window=args.cap,
                       insertable_only=not args.allow_any_symbol, seed=args.seed)
    batch = run_attack_batch(target, surrogate, dataset, vocab, cfg, method=args.method,
                             limit=args.limit, parallel=args.parallel)
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for r in batch.results:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    plans = [InsertionPlan.from_result(r, vocab) for r in batch.results if r.success]
    write_plans(plans, out / "plans.jsonl")
    summary = batch.summary()
    summary["window"] = window
    write_json(summary, out / "attack_report.json")
    attack_figure(summary, batch.results, out / "attack.png")
    inputs = {"target": Path(args.target), "data": data_path, "vocab": vocab_path}
    if args.surrogate:
        inputs["surrogate"] = Path(args.surrogate)
    _write_config(out, args, inputs)
    eff = summary.get("effectiveness")
    eff_text = f"{eff:.1%}" if eff is not None else "n/a (nothing detected)"
    print(f"attacked {batch.detected} detected samples: effectiveness {eff_text}, "
          f"{len(plans)} plans -> {out}")
    return 0


def cmd_transfer(args: argparse.Namespace) -> int:
    out = _outdir(args)
    data_dir = Path(args.data)
    vocab, vocab_path = _resolve_vocab(args, data_dir)
    surrogate_names = [s.strip() for s in args.surrogates.split(",") if s.strip()]
    target_names = [s.strip() for s in args.targets.split(",") if s.strip()]
    for name in surrogate_names + target_names:
        if name not in FAMILIES or name == "hybrid":
            print(f"error: unknown or unsupported family {name!r}", file=sys.stderr)
            return 2
    corpus = {split: _load_split(data_dir, split) for split in ("train", "validation", "test")}
    surrogate_specs = {n: ModelSpec.defaults(n, window=args.window, seed=args.seed)
                       for n in surrogate_names}
    target_specs = {n: ModelSpec.defaults(n, window=args.window, seed=args.seed)
                    for n in target_names}
    attack_cfg = AttackConfig(window=args.window, max_insertions_per_window=args.cap,
                              seed=args.seed)
    matrix, raw = run_transfer_matrix(surrogate_specs, target_specs, corpus, vocab,
                                      attack_cfg, rounds=args.rounds, epsilon=args.epsilon,
                                      seed_count=args.seed_count, limit=args.limit,
                                      query_budget=args.budget, parallel=args.parallel)
    write_json(matrix.to_json(), out / "transfer.json")
    matrix.write_csv(out / "transfer.csv")
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for sur_name in matrix.rows:
            for tgt_name in matrix.columns:
                for r in raw.get(sur_name, {}).get(tgt_name, []):
                    row = {"surrogate": sur_name, "target": tgt_name, "result": r.to_json()}
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
    transfer_figure(matrix, out / "transfer.png")
    inputs = {"vocab": vocab_path}
    inputs.update({s: data_dir / f"{s}.jsonl" for s in ("train", "validation", "test")})
    _write_config(out, args, inputs)
    failed = [c for c in matrix.cells.values() if c.error]
    print(f"transfer matrix {len(matrix.rows)}x{len(matrix.columns)} -> {out}"
          + (f" ({len(failed)} cells failed)" if failed else ""))
    return 0


def cmd_rewrite(args: argparse.Namespace) -> int:
    out = _outdir(args)
    vocab = Vocabulary.load(args.vocab)
    plans = read_plans(args.plans)
    inputs = {"plans": Path(args.plans), "vocab": Path(args.vocab)}
    if args.traces:
        traces = read_traces(args.traces)
        inputs["traces"] = Path(args.traces)
    else:
        if not args.data:
            raise ConfigError("pass --traces or --data to supply the original traces")
        dataset = load_dataset(args.data, "test")
        traces = [trace_from_sequence(s.sequence, vocab, s.sample_id, s.label)
                  for s in dataset.samples]
        inputs["data"] = Path(args.data)
    table = NoOpTable.load(args.table) if args.table else NoOpTable.bundled()
    bound = table.for_vocabulary(vocab, arg_level=args.arg_level)
    if args.table:
        inputs["table"] = Path(args.table)
    by_id = {t.trace_id: t for t in traces}
    originals, rewritten, missing = [], [], []
    for plan in plans:
        trace = by_id.get(plan.sample_id)
        if trace is None:
            missing.append(plan.sample_id)
            continue
        originals.append(trace)
        rewritten.append(rewrite_trace(trace, plan, bound, vocab=vocab))
    write_traces(originals, out / "originals.jsonl")
    write_traces(rewritten, out / "rewritten.jsonl")
    added = [len(m) - len(o) for o, m in zip(originals, rewritten)]
    report = {"plans": len(plans), "rewritten": len(rewritten),
              "missing_traces": sorted(missing),
              "added_calls_total": sum(added)}
    write_json(report, out / "rewrite_report.json")
    rewrite_figure(added, out / "rewrite.png")
    _write_config(out, args, inputs)
    print(f"rewrote {len(rewritten)}/{len(plans)} traces -> {out}")
    if missing:
        print(f"error: {len(missing)} plans had no matching trace", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    originals = {t.trace_id: t for t in read_traces(args.original)}
    modified = read_traces(args.modified)
    verdicts = []
    for trace in modified:
        origin = originals.get(trace.trace_id)
        if origin is None:
            verdicts.append({"id": trace.trace_id, "preserved": False,
                             "reason": "no original trace with this id"})
            continue
        v = verify_functionality(origin, trace)
        entry = {"id": trace.trace_id, "preserved": v.preserved}
        if not v.preserved:
            entry["reason"] = v.reason
            entry["index"] = v.violation_index
        verdicts.append(entry)
    violations = [v for v in verdicts if not v["preserved"]]
    if args.out:
        out = _outdir(args)
        write_json({"checked": len(verdicts), "violations": violations}, out / "verify_report.json")
        verify_figure(len(verdicts), len(violations), out / "verify.png")
        _write_config(out, args, {"original": Path(args.original),
                                  "modified": Path(args.modified)})
    if violations:
        for v in violations[:10]:
            print(f"violated: {v['id']}: {v['reason']}", file=sys.stderr)
        print(f"{len(violations)}/{len(verdicts)} traces violated functionality", file=sys.stderr)
        return 1
    print(f"all {len(verdicts)} traces preserve functionality")
    return 0


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=int, default=None, help="hidden units")
    p.add_argument("--layers", type=int, default=None, help="stacked recurrent layers")
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--optimizer", choices=("sgd", "adam", "adadelta"), default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--trees", type=int, default=None, help="ensemble size (rf/gbdt)")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--reg-c", type=float, default=None,
                   help="inverse regularization strength (logreg/svm)")


def _build_cli() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="seqevade",
                                     description="Adversarial evasion toolkit for "
                                                 "sliding-window API-sequence classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic labelled corpus")
    gen.add_argument("--vocab-size", type=int, default=30)
    gen.add_argument("--train-per-class", type=int, default=500)
    gen.add_argument("--val-per-class", type=int, default=100)
    gen.add_argument("--test-per-class", type=int, default=100)
    gen.add_argument("--min-length", type=int, default=60)
    gen.add_argument("--max-length", type=int, default=400)
    gen.add_argument("--motif-rate", type=float, default=0.08)
    gen.add_argument("--string-tokens", type=int, default=240)
    gen.add_argument("--no-strings", action="store_true")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_data)

    tr = sub.add_parser("train", help="train a classifier on a generated corpus")
    tr.add_argument("--data", required=True, help="gen-data output directory")
    tr.add_argument("--family", choices=FAMILIES, required=True)
    tr.add_argument("--window", type=int, default=20)
    tr.add_argument("--static-bits", type=int, default=64,
                    help="string-indicator count for the hybrid family")
    tr.add_argument("--vocab", default=None, help="vocabulary file (default: <data>/vocab.json)")
    tr.add_argument("--name", default=None, help="model file stem (default: family)")
    _add_spec_flags(tr)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.set_defaults(func=cmd_train)

    su = sub.add_parser("surrogate", help="train a black-box surrogate by augmentation")
    su.add_argument("--target", required=True, help="trained target model file")
    su.add_argument("--data", required=True,
                    help="directory with validation.jsonl (seeds) and test.jsonl (holdout)")
    su.add_argument("--vocab", default=None)
    su.add_argument("--family", choices=sorted(set(FAMILIES) - {"hybrid", "rf", "gbdt"}),
                    default="gru")
    su.add_argument("--window", type=int, default=None,
                    help="surrogate window length (default: target's)")
    su.add_argument("--rounds", type=int, default=6)
    su.add_argument("--epsilon", type=float, default=0.2)
    su.add_argument("--seed-count", type=int, default=64)
    su.add_argument("--budget", type=int, default=None, help="labeling query budget")
    _add_spec_flags(su)
    su.add_argument("--seed", type=int, default=0)
    su.add_argument("--out", required=True)
    su.set_defaults(func=cmd_surrogate)

    at = sub.add_parser("attack", help="insertion attack on detected malicious samples")
    at.add_argument("--target", required=True)
    at.add_argument("--surrogate", default=None, help="surrogate model (gradient method)")
    at.add_argument("--data", required=True, help="dataset JSONL or gen-data directory")
    at.add_argument("--vocab", default=None)
    at.add_argument("--method", choices=("gradient", "random"), default="gradient")
    at.add_argument("--window", type=int, default=None,
                    help="attacker window length (default: target's)")
    at.add_argument("--cap", type=int, default=None,
                    help="max insertions per window (default: window length)")
    at.add_argument("--limit", type=int, default=None, help="attack at most N samples")
    at.add_argument("--allow-any-symbol", action="store_true",
                    help="drop the insertable-only restriction")
    at.add_argument("--parallel", type=int, default=1)
    at.add_argument("--seed", type=int, default=0)
    at.add_argument("--out", required=True)
    at.set_defaults(func=cmd_attack)

    tf = sub.add_parser("transfer", help="surrogate-by-target transfer matrix")
    tf.add_argument("--data", required=True, help="gen-data output directory")
    tf.add_argument("--vocab", default=None)
    tf.add_argument("--surrogates", default="gru", help="comma-separated surrogate families")
    tf.add_argument("--targets", default="rnn,lstm,gru,dnn,cnn,logreg,svm,rf",
                    help="comma-separated target families")
    tf.add_argument("--window", type=int, default=20)
    tf.add_argument("--cap", type=int, default=None)
    tf.add_argument("--rounds", type=int, default=6)
    tf.add_argument("--epsilon", type=float, default=0.2)
    tf.add_argument("--seed-count", type=int, default=64)
    tf.add_argument("--budget", type=int, default=None)
    tf.add_argument("--limit", type=int, default=None, help="samples attacked per cell")
    tf.add_argument("--parallel", type=int, default=1)
    tf.add_argument("--seed", type=int, default=0)
    tf.add_argument("--out", required=True)
    tf.set_defaults(func=cmd_transfer)

    rw = sub.add_parser("rewrite", help="materialize insertion plans as no-op trace entries")
    rw.add_argument("--plans", required=True, help="plans JSONL from the attack command")
    rw.add_argument("--vocab", required=True)
    rw.add_argument("--traces", default=None, help="original traces JSONL")
    rw.add_argument("--data", default=None,
                    help="dataset JSONL to materialize traces from (when no --traces)")
    rw.add_argument("--table", default=None, help="no-op table JSON (default: bundled)")
    rw.add_argument("--arg-level", choices=("none", "combo"), default="none")
    rw.add_argument("--out", required=True)
    rw.set_defaults(func=cmd_rewrite)

    vf = sub.add_parser("verify", help="check rewritten traces preserve functionality")
    vf.add_argument("--original", required=True)
    vf.add_argument("--modified", required=True)
    vf.add_argument("--out", default=None, help="optionally write a report directory")
    vf.set_defaults(func=cmd_verify)

    for command in sub.choices.values():
        command.add_argument("--config", default=None,
                             help="JSON file of flag defaults for this command")
    return parser, dict(sub.choices)


def build_parser() -> argparse.ArgumentParser:
    return _build_cli()[0]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subcommands = _build_cli()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return 1
        if not isinstance(overrides, dict):
            parser.error(f"config file {args.config} must hold a JSON object")
        defaults = {}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest in ("func", "command", "config") or not hasattr(args, dest):
                parser.error(f"config key {key!r} is not a flag of {args.command}")
            defaults[dest] = value
        # Re-parse so explicit command-line flags still win over file values.
        subcommands[args.command].set_defaults(**defaults)
        args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
