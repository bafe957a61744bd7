"""Multi-label and span metrics, class-wise and modality-split analyses."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import LabeledSpan


@dataclass(frozen=True)
class LabelPrediction:
    record_id: str
    predicted: frozenset[str]
    gold: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "predicted", frozenset(self.predicted))
        object.__setattr__(self, "gold", frozenset(self.gold))


@dataclass(frozen=True)
class SpanPrediction:
    record_id: str
    predicted: tuple[LabeledSpan, ...]
    gold: tuple[LabeledSpan, ...]

    def __post_init__(self):
        object.__setattr__(self, "predicted", tuple(self.predicted))
        object.__setattr__(self, "gold", tuple(self.gold))


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """``2TP / (2TP + FP + FN)``, taken as 1.0 when all counts are zero."""
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def label_counts(preds: Iterable[LabelPrediction]) -> dict[str, list[int]]:
    """Per-label [TP, FP, FN]."""
    counts: dict[str, list[int]] = {}
    for p in preds:
        for name in p.predicted | p.gold:
            c = counts.setdefault(name, [0, 0, 0])
            if name in p.predicted and name in p.gold:
                c[0] += 1
            elif name in p.predicted:
                c[1] += 1
            else:
                c[2] += 1
    return counts


def micro_f1(preds: Sequence[LabelPrediction]) -> float:
    if not preds:
        raise ValueError("micro_f1 needs at least one prediction")
    tp = fp = fn = 0
    for p in preds:
        tp += len(p.predicted & p.gold)
        fp += len(p.predicted - p.gold)
        fn += len(p.gold - p.predicted)
    return f1_from_counts(tp, fp, fn)


def per_label_f1(preds: Sequence[LabelPrediction], labels: Optional[Sequence[str]] = None) -> dict[str, float]:
    """F1 of each label; a label with no TP, FP or FN scores 0."""
    counts = label_counts(preds)
    names = list(labels) if labels is not None else sorted(counts)
    out = {}
    for name in names:
        tp, fp, fn = counts.get(name, (0, 0, 0))
        out[name] = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    return out


def macro_f1(preds: Sequence[LabelPrediction], labels: Optional[Sequence[str]] = None,
             empty: str = "exclude") -> float:
    """Unweighted mean of per-label F1.

    ``labels`` fixes the label universe (default: every label seen in gold or
    predictions). With ``empty="exclude"`` labels that never occur in gold
    are left out of the mean; with ``"zero"`` they stay in and score 0
    unless predicted correctly, which cannot happen. If exclusion leaves no
    label, the score is 1.0 when nothing was predicted and 0.0 otherwise.
    """
    if not preds:
        raise ValueError("macro_f1 needs at least one prediction")
    if empty not in ("exclude", "zero"):
        raise ValueError("empty must be 'exclude' or 'zero'")
    counts = label_counts(preds)
    names = list(labels) if labels is not None else sorted(counts)
    if empty == "exclude":
        names = [n for n in names if n in counts and counts[n][0] + counts[n][2] > 0]
        if not names:
            return 0.0 if any(p.predicted for p in preds) else 1.0
    if not names:
        return 1.0
    scores = per_label_f1(preds, names)
    return float(sum(scores[n] for n in names) / len(names))


def _check_spans(spans: Sequence[LabeledSpan], record_id: str, role: str) -> None:
    seen = set()
    for s in spans:
        if not (0 <= s.start < s.end):
            raise ValueError(f"record {record_id!r}: invalid {role} span ({s.start}, {s.end})")
        key = (s.start, s.end, s.technique)
        if key in seen:
            raise ValueError(f"record {record_id!r}: duplicate {role} span {key}")
        seen.add(key)


def span_credits(preds: Sequence[SpanPrediction]) -> tuple[float, int, float, int]:
    """(precision credit, |S|, recall credit, |T|) pooled over records."""
    p_credit = r_credit = 0.0
    n_pred = n_gold = 0
    for rec in preds:
        _check_spans(rec.predicted, rec.record_id, "predicted")
        _check_spans(rec.gold, rec.record_id, "gold")
        n_pred += len(rec.predicted)
        n_gold += len(rec.gold)
        for s in rec.predicted:
            for t in rec.gold:
                if s.technique != t.technique:
                    continue
                overlap = min(s.end, t.end) - max(s.start, t.start)
                if overlap > 0:
                    p_credit += overlap / (s.end - s.start)
                    r_credit += overlap / (t.end - t.start)
    return p_credit, n_pred, r_credit, n_gold


def span_precision_recall(preds: Sequence[SpanPrediction]) -> tuple[float, float, float]:
    p_credit, n_pred, r_credit, n_gold = span_credits(preds)
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    if n_pred == 0 or n_gold == 0:
        return (0.0 if n_pred else 1.0), (0.0 if n_gold else 1.0), 0.0
    p = p_credit / n_pred
    r = r_credit / n_gold
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def span_partial_f1(preds: Sequence[SpanPrediction]) -> float:
    """Micro F1 with fractional credit for partially overlapping same-label spans.

    A predicted span ``s`` earns ``sum |s & t| / |s|`` over same-label gold
    spans ``t`` (not capped at 1) and symmetrically for recall.
    """
    return span_precision_recall(preds)[2]


def classwise_report(preds: Sequence[LabelPrediction], ranked_labels: Sequence[str], top_n: int,
                     model: str = "model", seed: Optional[int] = None) -> list[dict[str, Any]]:
    """Per-label F1 rows for the ``top_n`` labels of ``ranked_labels``.

    ``ranked_labels`` is usually the label column of
    :func:`propspan.corpus.label_distribution_report` on the train split.
    """
    names = list(ranked_labels)[:top_n]
    scores = per_label_f1(preds, names)
    return [{"model": model, "label": n, "seed": seed, "f1": scores[n]} for n in names]


def _as_map(obj: Any) -> dict[str, frozenset[str]]:
    if isinstance(obj, Mapping):
        return {str(k): frozenset(v) for k, v in obj.items()}
    return {p.record_id: frozenset(p.predicted) for p in obj}


def modality_split_f1(task_a_gold: Mapping[str, Iterable[str]], task_c_gold: Mapping[str, Iterable[str]],
                      preds: "Mapping[str, Iterable[str]] | Sequence[LabelPrediction]") -> tuple[float, float]:
    """(textual F1, visual F1) from comparing text-only and multimodal gold.

    Visual-only instances are labels in task C gold but not in task A gold
    for the same record. The textual score is micro-F1 with those instances
    removed from both gold and predictions; the visual score only looks at
    those instances, so predictions of any other label are ignored there.
    """
    gold_a, gold_c, pred = _as_map(task_a_gold), _as_map(task_c_gold), _as_map(preds)
    if set(gold_a) != set(gold_c):
        missing = sorted(set(gold_a) ^ set(gold_c))
        raise ValueError(f"task A and task C gold disagree on record ids: {missing[:10]}")
    unknown = sorted(set(pred) - set(gold_c))
    if unknown:
        raise ValueError(f"predictions for unknown record ids: {unknown[:10]}")
    t_tp = t_fp = t_fn = 0
    v_tp = v_fn = 0
    for rid in sorted(gold_c):
        visual = gold_c[rid] - gold_a[rid]
        p = pred.get(rid, frozenset())
        g_text, p_text = gold_c[rid] - visual, p - visual
        t_tp += len(p_text & g_text)
        t_fp += len(p_text - g_text)
        t_fn += len(g_text - p_text)
        v_tp += len(p & visual)
        v_fn += len(visual - p)
    return f1_from_counts(t_tp, t_fp, t_fn), f1_from_counts(v_tp, 0, v_fn)


@dataclass
class RunSummary:
    """Per-seed metric values; statistics are always recomputed from them."""

    seeds: list[int] = field(default_factory=list)
    values: dict[str, list[float]] = field(default_factory=dict)

    def add(self, seed: int, metrics: Mapping[str, float]) -> None:
        if self.seeds and set(metrics) != set(self.values):
            raise ValueError("every run must report the same metrics")
        self.seeds.append(seed)
        for k, v in metrics.items():
            self.values.setdefault(k, []).append(float(v))

    def mean(self, key: str) -> float:
        return float(np.mean(self.values[key]))

    def std(self, key: str) -> float:
        return float(np.std(self.values[key], ddof=0))

    def to_json(self) -> dict[str, Any]:
        return {"seeds": list(self.seeds), "values": {k: list(v) for k, v in self.values.items()},
                "mean": {k: self.mean(k) for k in self.values}, "std": {k: self.std(k) for k in self.values}}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "RunSummary":
        return cls(list(obj["seeds"]), {k: list(v) for k, v in obj["values"].items()})


def multi_seed_summary(run_fn: Callable[[int], Mapping[str, float]], seeds: Sequence[int]) -> RunSummary:
    """Run ``run_fn(seed)`` for each seed and collect its metrics.

    ``run_fn`` is expected to train, keep the best-dev checkpoint and return
    e.g. ``{"dev": ..., "test": ...}`` for that checkpoint.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    summary = RunSummary()
    for seed in seeds:
        summary.add(int(seed), run_fn(int(seed)))
    return summary


def rows_to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def dumps_scores(scores: Mapping[str, Any]) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        return v

    return json.dumps({k: clean(v) for k, v in scores.items()}, sort_keys=True, indent=1)
