"""``propspan`` command line: validate, stats, train, predict, score, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .corpus import (CorpusError, Dataset, LabelVocabulary, Split, Task, VocabularyMismatchError, dump_dataset,
                     label_distribution_report, load_dataset)
from .eval import LabelPrediction, classwise_report, dumps_scores, modality_split_f1, rows_to_csv
from .features import VisualFeatureStore
from .model import TrainConfig, load_checkpoint
from .pipeline import FeaturizerOptions, UsageError, default_config, fit, predict_dataset, run_seeds
from .pipeline import score_predictions

log = logging.getLogger("propspan")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def _setup_logging() -> None:
    level = os.environ.get("PROPSPAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _dump_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def make_manifest(task: Task, cfg: TrainConfig, vocabulary: LabelVocabulary, seeds: Sequence[int],
                  paths: dict[str, Optional[str]], feature_dim: int, featurizer_kind: str) -> dict[str, Any]:
    manifest = {"tool": "propspan", "version": __version__, "task": task.value, "config_hash": cfg.hash(),
                "vocabulary_hash": vocabulary.hash(), "seeds": list(seeds), "paths": paths,
                "feature_dim": feature_dim, "featurizer": featurizer_kind}
    manifest["id"] = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()[:16]
    return manifest


# ---------------------------------------------------------------------------
# config


CONFIG_FLAGS = {"learning_rate": "lr", "batch_size": "batch_size", "patience": "patience",
                "max_epochs": "epochs", "dropout": "dropout", "weight_decay": "weight_decay",
                "optimizer": "optimizer", "warmup": "warmup", "hidden_dim": "hidden_dim",
                "threshold": "threshold", "max_sequence_length": "max_seq_len"}


def resolve_config(args: argparse.Namespace, task: Task) -> TrainConfig:
    """Built-in defaults < ``--config`` file < explicit flags."""
    overrides: dict[str, Any] = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key, flag in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "unweighted", False):
        overrides["class_weighted"] = False
    if args.seed is not None:
        overrides["seed"] = args.seed
    return default_config(task, ensemble=getattr(args, "ensemble", False), **overrides)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args: argparse.Namespace) -> int:
    task = _task(args)
    try:
        ds = load_dataset(args.data, task)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for w in ds.warnings:
        print(f"warning: {w}")
    print(f"ok: {len(ds)} records, {len(ds.vocabulary)} labels, {len(ds.warnings)} warnings")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    try:
        ds = load_dataset(args.data, _task(args))
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    rows = [{"label": n, "count": c, "fraction": f} for n, c, f in label_distribution_report(ds)]
    text = rows_to_csv(rows, ["label", "count", "fraction"])
    _emit(args, "stats.csv", text)
    return EXIT_OK


def _load_splits(args: argparse.Namespace, task: Task) -> tuple[Dataset, Dataset, Optional[Dataset]]:
    vocab = LabelVocabulary(task=task)
    train_set = load_dataset(args.train, task, Split.TRAIN, vocab)
    dev_set = load_dataset(args.dev, task, Split.DEV, vocab)
    test_set = load_dataset(args.test, task, Split.TEST, vocab) if args.test else None
    vocab.freeze()
    return train_set, dev_set, test_set


def _visual_store(args: argparse.Namespace) -> tuple[Optional[VisualFeatureStore], Optional[str]]:
    if getattr(args, "visual_store", None):
        return VisualFeatureStore.load(args.visual_store), str(args.visual_store)
    if getattr(args, "synthetic_visual", None):
        return VisualFeatureStore(regions=args.regions, dv=args.synthetic_visual, synthetic_seed=args.hash_seed), None
    return None, None


def cmd_train(args: argparse.Namespace) -> int:
    task = _task(args)
    if args.ensemble and task is not Task.C:
        raise UsageError("--ensemble requires --task c")
    if args.ensemble and not (args.visual_store or args.synthetic_visual):
        raise UsageError("--ensemble needs --visual-store or --synthetic-visual")
    train_set, dev_set, test_set = _load_splits(args, task)
    cfg = resolve_config(args, task)
    store, source = _visual_store(args)
    opts = FeaturizerOptions(text_dim=args.dim, token_window=args.window, chunk_size=args.chunk_size,
                             hash_seed=args.hash_seed, ensemble=args.ensemble)
    out = Path(args.out_dir or "run")
    out.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds or [cfg.seed]
    paths = {"train": str(args.train), "dev": str(args.dev), "test": str(args.test) if args.test else None,
             "visual_store": source, "out_dir": str(out)}

    def save(seed: int, model, result) -> None:
        target = out if len(seeds) == 1 else out / f"seed_{seed}"
        target.mkdir(parents=True, exist_ok=True)
        manifest = make_manifest(task, model.config, model.vocabulary, [seed], paths, model.featurizer.dim,
                                 type(model.featurizer).__name__)
        (target / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")
        model.save(target / "checkpoint.json", manifest)
        model.vocabulary.save(target / "vocab.json")
        result.write_log(target / "train_log.csv", header_comment=f"manifest {manifest['id']}")
        log.info("seed %d: best epoch %d, dev %.4f", seed, result.best_epoch, result.best_dev_metric)

    if len(seeds) == 1 and test_set is None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seeds[0]})
        model, result = fit(train_set, dev_set, cfg, opts, store, source)
        save(seeds[0], model, result)
        print(_dump_json({"best_epoch": result.best_epoch, "dev": result.best_dev_metric}), end="")
        return EXIT_OK

    summary = run_seeds(train_set, dev_set, test_set, cfg, seeds, opts, store, source, on_model=save)
    manifest = make_manifest(task, cfg, train_set.vocabulary, seeds, paths, -1, "summary")
    payload = {**summary.to_json(), "manifest": manifest["id"]}
    (out / "summary.json").write_text(_dump_json(payload), encoding="utf-8")
    if len(seeds) > 1:
        (out / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")
    print(_dump_json(payload), end="")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    store, _ = _visual_store(args)
    model = load_checkpoint(args.checkpoint, visual_store=store)
    if args.vocab:
        other = LabelVocabulary.load(args.vocab, model.task)
        if other.hash() != model.vocabulary.hash():
            raise VocabularyMismatchError(f"vocabulary {args.vocab} (hash {other.hash()}) does not match the "
                                          f"checkpoint (hash {model.vocabulary.hash()})")
    data = load_dataset(args.data, model.task, Split.TEST, LabelVocabulary(model.vocabulary, model.task, True))
    preds = predict_dataset(model, data, args.threshold)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_dataset(preds, out)
    return EXIT_OK


def _load_preds(path: str, task: Task) -> Dataset:
    return load_dataset(path, task, Split.TEST)


def cmd_score(args: argparse.Namespace) -> int:
    task = _task(args)
    gold = load_dataset(args.gold, task, Split.TEST)
    runs = [score_predictions(_load_preds(p, task).records, gold, args.macro_empty) for p in args.pred]
    scores: dict[str, Any] = dict(runs[0]) if len(runs) == 1 else {}
    if len(runs) > 1:
        from .eval import RunSummary

        summary = RunSummary()
        for i, r in enumerate(runs):
            summary.add(i, r)
        scores.update({f"{k}_mean": summary.mean(k) for k in summary.values})
        scores.update({f"{k}_std": summary.std(k) for k in summary.values})
        scores["runs"] = len(runs)
    tables: dict[str, str] = {}
    if args.modality_split:
        if not (args.gold_a and args.gold_c):
            raise UsageError("--modality-split needs --gold-a and --gold-c")
        gold_a = {r.id: r.labels for r in load_dataset(args.gold_a, Task.A).records}
        gold_c = {r.id: r.labels for r in load_dataset(args.gold_c, Task.C).records}
        rows = []
        for i, p in enumerate(args.pred):
            preds = {r.id: r.labels for r in _load_preds(p, task).records}
            textual, visual = modality_split_f1(gold_a, gold_c, preds)
            rows += [{"model": args.model, "mode": "textual", "seed": i, "f1": textual},
                     {"model": args.model, "mode": "visual", "seed": i, "f1": visual}]
        if len(args.pred) == 1:
            scores["textual_f1"], scores["visual_f1"] = rows[0]["f1"], rows[1]["f1"]
        tables["modality.csv"] = rows_to_csv(rows, ["model", "mode", "seed", "f1"])
    if args.classwise:
        if task is Task.B:
            raise UsageError("--classwise applies to label tasks (a, c)")
        ranking = [n for n, _, _ in label_distribution_report(load_dataset(args.train or args.gold, task))]
        rows = []
        for i, p in enumerate(args.pred):
            pred = {r.id: r.labels for r in _load_preds(p, task).records}
            lp = [LabelPrediction(g.id, pred.get(g.id, frozenset()), g.labels) for g in gold.records]
            rows += classwise_report(lp, ranking, args.classwise, args.model, i)
        tables["classwise.csv"] = rows_to_csv(rows, ["model", "label", "seed", "f1"])
    text = dumps_scores(scores) + "\n"
    _emit(args, "scores.json", text)
    if args.out_dir:
        for name, body in tables.items():
            (Path(args.out_dir) / name).write_text(body, encoding="utf-8")
    return EXIT_OK


def _parse_tagged(spec: str) -> tuple[str, Optional[int], str]:
    tag, sep, path = spec.partition("=")
    if not sep:
        raise UsageError(f"--pred expects MODEL[@SEED]=PATH, got {spec!r}")
    model, _, seed = tag.partition("@")
    return model, (int(seed) if seed else None), path


def cmd_report(args: argparse.Namespace) -> int:
    """Long-format CSVs for class-wise and modality-split plots."""
    task = _task(args)
    gold = load_dataset(args.gold, task, Split.DEV)
    ranking = [n for n, _, _ in label_distribution_report(load_dataset(args.train, task))]
    class_rows, mode_rows = [], []
    gold_a = gold_c = None
    if args.gold_a and args.gold_c:
        gold_a = {r.id: r.labels for r in load_dataset(args.gold_a, Task.A).records}
        gold_c = {r.id: r.labels for r in load_dataset(args.gold_c, Task.C).records}
    for spec in args.pred:
        model, seed, path = _parse_tagged(spec)
        pred = {r.id: r.labels for r in _load_preds(path, task).records}
        lp = [LabelPrediction(g.id, pred.get(g.id, frozenset()), g.labels) for g in gold.records]
        class_rows += classwise_report(lp, ranking, args.top_n, model, seed)
        if gold_a is not None:
            textual, visual = modality_split_f1(gold_a, gold_c, pred)
            mode_rows += [{"model": model, "mode": "textual", "seed": seed, "f1": textual},
                          {"model": model, "mode": "visual", "seed": seed, "f1": visual}]
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "classwise.csv").write_text(rows_to_csv(class_rows, ["model", "label", "seed", "f1"]), encoding="utf-8")
    if gold_a is not None:
        (out / "modality.csv").write_text(rows_to_csv(mode_rows, ["model", "mode", "seed", "f1"]), encoding="utf-8")
    print(f"wrote {out / 'classwise.csv'}" + (f" and {out / 'modality.csv'}" if gold_a is not None else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _task(args: argparse.Namespace) -> Task:
    if args.task is None:
        raise UsageError("--task is required")
    return Task.parse(args.task)


def _emit(args: argparse.Namespace, name: str, text: str) -> None:
    sys.stdout.write(text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--task", choices=["a", "b", "c"], type=str.lower)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="JSON file of TrainConfig overrides")
    common.add_argument("--out-dir")

    visual = argparse.ArgumentParser(add_help=False)
    visual.add_argument("--visual-store", help="region feature store (.json or .npz)")
    visual.add_argument("--synthetic-visual", type=int, metavar="DV",
                        help="use deterministic synthetic region features of this width")
    visual.add_argument("--regions", type=int, default=36)
    visual.add_argument("--hash-seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="propspan", description=__doc__)
    p.add_argument("--version", action="version", version=f"propspan {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check a corpus file")
    s.add_argument("data")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", parents=[common], help="label distribution as CSV")
    s.add_argument("data")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", parents=[common, visual], help="train a classifier head")
    s.add_argument("--train", required=True)
    s.add_argument("--dev", required=True)
    s.add_argument("--test")
    s.add_argument("--ensemble", action="store_true", help="task c: concatenate text and visual features")
    s.add_argument("--seeds", type=int, nargs="+", help="train once per seed and summarise dev/test")
    s.add_argument("--dim", type=int, default=256, help="hashed feature width")
    s.add_argument("--window", type=int, default=1, help="token context window (task b)")
    s.add_argument("--chunk-size", type=int, default=4)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--dropout", type=float)
    s.add_argument("--weight-decay", type=float)
    s.add_argument("--optimizer", choices=["sgd", "adam", "adamw", "bertadam"])
    s.add_argument("--warmup", type=float)
    s.add_argument("--hidden-dim", type=int)
    s.add_argument("--threshold", type=float)
    s.add_argument("--max-seq-len", type=int)
    s.add_argument("--unweighted", action="store_true", help="disable class weights in the loss")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common, visual], help="write predictions in corpus format")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--vocab", help="vocabulary file that must match the checkpoint")
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("score", parents=[common], help="score predictions against gold")
    s.add_argument("--pred", required=True, action="append", help="prediction file; repeat to aggregate seeds")
    s.add_argument("--gold", required=True)
    s.add_argument("--train", help="train split used to rank labels for --classwise")
    s.add_argument("--classwise", type=int, metavar="N", help="per-label F1 of the N most frequent labels")
    s.add_argument("--modality-split", action="store_true")
    s.add_argument("--gold-a")
    s.add_argument("--gold-c")
    s.add_argument("--model", default="model", help="model tag for CSV tables")
    s.add_argument("--macro-empty", choices=["exclude", "zero"], default="exclude")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("report", parents=[common], help="long-format CSVs for plots")
    s.add_argument("--pred", required=True, action="append", metavar="MODEL[@SEED]=PATH")
    s.add_argument("--gold", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--top-n", type=int, default=3)
    s.add_argument("--gold-a")
    s.add_argument("--gold-c")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
