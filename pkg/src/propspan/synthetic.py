"""Synthetic corpora with planted label signals.

Used for protocol checks where real data and pretrained encoders are not
available: each generator plants a known relation between inputs and labels
so the achievable score is known in advance.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .corpus import Dataset, LabeledSpan, LabelVocabulary, MemeRecord, Split, Task
from .features import VisualFeatureStore

TECHNIQUES = (
    "Smears", "Loaded Language", "Name calling/Labeling", "Doubt", "Slogans", "Exaggeration/Minimisation",
    "Flag-waving", "Appeal to fear/prejudice", "Whataboutism", "Black-and-white Fallacy/Dictatorship",
)

FILLER = tuple(f"{a}{b}" for a in ("ba", "ke", "lo", "mi", "nu", "pe", "ro", "si", "tu", "vo")
               for b in ("n", "r", "sk", "lt", "mo", "de"))


def _marker(k: int, j: int) -> str:
    return f"zq{k}x{j}"


def _dataset(records: list[MemeRecord], names: Sequence[str], task: Task, split: Split) -> Dataset:
    return Dataset(split, tuple(records), LabelVocabulary(names, task=task, frozen=True))


def planted_label_records(n: int, n_labels: int = 5, seed: int = 0, label_prob: float = 0.35,
                          n_filler: tuple[int, int] = (4, 10), prefix: str = "r") -> list[MemeRecord]:
    """Records whose labels are signalled by label-specific marker words."""
    rng = np.random.default_rng(seed)
    names = TECHNIQUES[:n_labels]
    out = []
    for i in range(n):
        active = [k for k in range(n_labels) if rng.random() < label_prob]
        words = list(rng.choice(FILLER, size=int(rng.integers(*n_filler))))
        for k in active:
            words.append(_marker(k, int(rng.integers(3))))
        rng.shuffle(words)
        out.append(MemeRecord(f"{prefix}{i}", " ".join(words), frozenset(names[k] for k in active)))
    return out


def planted_label_splits(n_train: int = 200, n_dev: int = 50, n_test: int = 0, n_labels: int = 5,
                         seed: int = 0, task: "Task | str" = Task.A) -> dict[str, Dataset]:
    task = Task.parse(task)
    names = TECHNIQUES[:n_labels]
    recs = planted_label_records(n_train + n_dev + n_test, n_labels, seed)
    parts = {"train": recs[:n_train], "dev": recs[n_train:n_train + n_dev], "test": recs[n_train + n_dev:]}
    return {k: _dataset(v, names, task, Split(k)) for k, v in parts.items()}


def planted_span_records(n: int, n_labels: int = 3, seed: int = 0, label_prob: float = 0.5,
                         prefix: str = "s") -> list[MemeRecord]:
    """Task B records: each active label owns one phrase of its marker words."""
    rng = np.random.default_rng(seed)
    names = TECHNIQUES[:n_labels]
    out = []
    for i in range(n):
        chunks: list[tuple[Optional[int], list[str]]] = [
            (None, list(rng.choice(FILLER, size=int(rng.integers(1, 4))))) for _ in range(3)]
        for k in range(n_labels):
            if rng.random() < label_prob:
                phrase = [_marker(k, int(j)) for j in rng.integers(3, size=int(rng.integers(1, 4)))]
                chunks.insert(int(rng.integers(len(chunks) + 1)), (k, phrase))
        text, spans = "", []
        for k, words in chunks:
            if text:
                text += " "
            start = len(text)
            text += " ".join(words)
            if k is not None:
                spans.append(LabeledSpan(start, len(text), names[k]))
        out.append(MemeRecord(f"{prefix}{i}", text, frozenset(s.technique for s in spans), tuple(spans)))
    return out


def planted_span_splits(n_train: int = 120, n_dev: int = 40, n_labels: int = 3, seed: int = 0) -> dict[str, Dataset]:
    names = TECHNIQUES[:n_labels]
    recs = planted_span_records(n_train + n_dev, n_labels, seed)
    return {"train": _dataset(recs[:n_train], names, Task.B, Split.TRAIN),
            "dev": _dataset(recs[n_train:], names, Task.B, Split.DEV)}


def imbalanced_binary_splits(n_train: int = 400, n_dev: int = 100, n_test: int = 400, minority: float = 0.1,
                             signal_pos: float = 0.7, signal_neg: float = 0.15, seed: int = 0) -> dict[str, Dataset]:
    """One label present in ``minority`` of the records (9:1 by default).

    The marker word appears in ``signal_pos`` of positives and ``signal_neg``
    of negatives, so the label is only partly predictable.
    """
    rng = np.random.default_rng(seed)
    name = TECHNIQUES[0]
    recs = []
    for i in range(n_train + n_dev + n_test):
        pos = rng.random() < minority
        words = list(rng.choice(FILLER, size=int(rng.integers(4, 10))))
        if rng.random() < (signal_pos if pos else signal_neg):
            words.append(_marker(0, 0))
        rng.shuffle(words)
        recs.append(MemeRecord(f"b{i}", " ".join(words), frozenset({name}) if pos else frozenset()))
    cut = (n_train, n_train + n_dev)
    parts = {"train": recs[:cut[0]], "dev": recs[cut[0]:cut[1]], "test": recs[cut[1]:]}
    return {k: _dataset(v, [name], Task.A, Split(k)) for k, v in parts.items()}


def conjunctive_multimodal_splits(n_train: int = 300, n_dev: int = 100, n_test: int = 300, dv: int = 16,
                                  regions: int = 36, noise: float = 1.0, seed: int = 0
                                  ) -> tuple[dict[str, Dataset], VisualFeatureStore]:
    """A label that needs both a text flag and a visual flag.

    Each flag is an independent fair coin. The text flag is a marker word;
    the visual flag shifts every region along a fixed direction. Knowing one
    modality only tells you the label is possible, capping unimodal F1 at 2/3.
    """
    rng = np.random.default_rng(seed)
    name = "Appeal to fear/prejudice"
    direction = np.zeros(dv)
    direction[0] = 1.0
    store = VisualFeatureStore(regions=regions, dv=dv)
    recs = []
    for i in range(n_train + n_dev + n_test):
        t_flag, v_flag = rng.random() < 0.5, rng.random() < 0.5
        words = list(rng.choice(FILLER, size=int(rng.integers(4, 10))))
        if t_flag:
            words.append(_marker(7, 0))
        rng.shuffle(words)
        key = f"img{i}.png"
        mat = noise * rng.standard_normal((regions, dv)) + (2.0 if v_flag else -2.0) * direction
        store.add(key, mat)
        labels = frozenset({name}) if (t_flag and v_flag) else frozenset()
        recs.append(MemeRecord(f"m{i}", " ".join(words), labels, (), key))
    cut = (n_train, n_train + n_dev)
    parts = {"train": recs[:cut[0]], "dev": recs[cut[0]:cut[1]], "test": recs[cut[1]:]}
    return {k: _dataset(v, [name], Task.C, Split(k)) for k, v in parts.items()}, store
