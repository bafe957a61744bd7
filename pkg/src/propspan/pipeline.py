"""End-to-end helpers shared by the CLI and library users."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence

from .corpus import Dataset, MemeRecord, Task
from .eval import (LabelPrediction, RunSummary, SpanPrediction, macro_f1, micro_f1, multi_seed_summary,
                   span_precision_recall)
from .features import EnsembleSpec, TokenFeaturizer, VisualExtractor, VisualFeatureStore, fit_text_featurizer
from .model import TrainConfig, TrainedModel, TrainResult, train

DESK_LEARNING_RATE = 1e-3


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class FeaturizerOptions:
    text_dim: int = 256
    token_window: int = 1
    chunk_size: int = 4
    hash_seed: int = 0
    ensemble: bool = False


def default_config(task: "Task | str", ensemble: bool = False, **overrides: Any) -> TrainConfig:
    """Per-task published hyperparameters with a learning rate suited to a head trained from scratch."""
    base = {"learning_rate": DESK_LEARNING_RATE, "max_epochs": 200}
    base.update(overrides)
    return TrainConfig.for_task(task, ensemble=ensemble, **base)


def build_featurizer(train_set: Dataset, cfg: TrainConfig, opts: FeaturizerOptions = FeaturizerOptions(),
                     visual_store: Optional[VisualFeatureStore] = None, visual_source: Optional[str] = None) -> Any:
    task = train_set.task
    if opts.ensemble and task is not Task.C:
        raise UsageError("--ensemble is only meaningful for task c")
    if task is Task.B:
        return TokenFeaturizer(opts.text_dim, opts.token_window, opts.hash_seed, opts.chunk_size,
                               cfg.max_sequence_length)
    text = fit_text_featurizer(train_set, dim=opts.text_dim, seed=opts.hash_seed)
    if not opts.ensemble:
        return text
    if visual_store is None:
        raise UsageError("--ensemble needs visual features (--visual-store or --synthetic-visual)")
    missing = [r.id for r in train_set.records if r.image is None]
    if missing:
        raise UsageError(f"--ensemble: records without an image key: {missing[:5]}")
    return EnsembleSpec((text, VisualExtractor(visual_store, visual_source)))


def predict_dataset(model: TrainedModel, dataset: Dataset, threshold: Optional[float] = None) -> Dataset:
    """The dataset with labels (or spans) replaced by model predictions."""
    records = tuple(model.predict_record(r, threshold) for r in dataset.records)
    return Dataset(dataset.split, records, model.vocabulary)


def score_predictions(pred: Sequence[MemeRecord], gold: Dataset, macro_empty: str = "exclude") -> dict[str, float]:
    """Metrics for predicted records against gold, matched by id."""
    pred_by_id = {r.id: r for r in pred}
    gold_ids = [r.id for r in gold.records]
    missing = sorted(set(gold_ids) - set(pred_by_id))
    extra = sorted(set(pred_by_id) - set(gold_ids))
    if missing or extra:
        raise ValueError(f"prediction/gold id mismatch; missing predictions for {missing[:20]}, "
                         f"unknown ids {extra[:20]}")
    if gold.task is Task.B:
        spans = [SpanPrediction(g.id, pred_by_id[g.id].spans, g.spans) for g in gold.records]
        p, r, f = span_precision_recall(spans)
        labels = [LabelPrediction(g.id, pred_by_id[g.id].labels, g.labels) for g in gold.records]
        out = {"span_f1": f, "span_precision": p, "span_recall": r}
        if labels:
            out["micro_f1"] = micro_f1(labels)
        return out
    labels = [LabelPrediction(g.id, pred_by_id[g.id].labels, g.labels) for g in gold.records]
    if not labels:
        return {}
    return {"micro_f1": micro_f1(labels),
            "macro_f1": macro_f1(labels, gold.vocabulary.names, empty=macro_empty)}


def headline_metric(task: Task) -> str:
    return "span_f1" if task is Task.B else "micro_f1"


def evaluate(model: TrainedModel, dataset: Dataset) -> dict[str, float]:
    return score_predictions(predict_dataset(model, dataset).records, dataset)


def fit(train_set: Dataset, dev_set: Dataset, cfg: TrainConfig, opts: FeaturizerOptions = FeaturizerOptions(),
        visual_store: Optional[VisualFeatureStore] = None,
        visual_source: Optional[str] = None) -> tuple[TrainedModel, TrainResult]:
    featurizer = build_featurizer(train_set, cfg, opts, visual_store, visual_source)
    result = train(train_set, dev_set, featurizer, cfg)
    model = TrainedModel(train_set.task, train_set.vocabulary, featurizer, result.head, cfg)
    return model, result


def run_seeds(train_set: Dataset, dev_set: Dataset, test_set: Optional[Dataset], cfg: TrainConfig,
              seeds: Sequence[int], opts: FeaturizerOptions = FeaturizerOptions(),
              visual_store: Optional[VisualFeatureStore] = None,
              visual_source: Optional[str] = None, on_model=None) -> RunSummary:
    """Train once per seed, keep each best-dev head, score it on dev and test."""
    key = headline_metric(train_set.task)

    def run(seed: int) -> dict[str, float]:
        model, result = fit(train_set, dev_set, TrainConfig.from_dict({**cfg.to_dict(), "seed": seed}), opts,
                            visual_store, visual_source)
        if on_model is not None:
            on_model(seed, model, result)
        out = {"dev": evaluate(model, dev_set)[key]}
        if test_set is not None and len(test_set):
            out["test"] = evaluate(model, test_set)[key]
        return out

    return multi_seed_summary(run, seeds)


__all__ = ["DESK_LEARNING_RATE", "FeaturizerOptions", "UsageError", "build_featurizer", "default_config",
           "evaluate", "fit", "predict_dataset", "run_seeds", "score_predictions"]
