"""Loading, validation and summary statistics for meme technique corpora.

A corpus file is a JSON array of records. Task A and C records carry plain
label names, task B records carry character-offset spans::

    {"id": "12", "text": "...", "labels": ["Smears"]}                        # A
    {"id": "12", "text": "...", "labels": [{"technique": "Smears",
                                            "start": 0, "end": 7}]}           # B
    {"id": "12", "text": "...", "labels": ["Smears"], "image": "12.png"}     # C

Offsets count Unicode code points (Python ``str`` indices), never bytes.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class Task(str, enum.Enum):
    A = "a"
    B = "b"
    C = "c"

    @classmethod
    def parse(cls, value: "Task | str") -> "Task":
        if isinstance(value, Task):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown task {value!r}, expected one of a, b, c") from None


class Split(str, enum.Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class CorpusError(ValueError):
    """Raised when a corpus file is malformed or violates a record invariant."""

    def __init__(self, message: str, record_id: Optional[str] = None, field: Optional[str] = None):
        self.record_id = record_id
        self.field = field
        prefix = ""
        if record_id is not None:
            prefix = f"record {record_id!r}"
            if field is not None:
                prefix += f", field {field!r}"
            prefix += ": "
        super().__init__(prefix + message)


class CorpusParseError(CorpusError):
    pass


class VocabularyMismatchError(CorpusError):
    pass


@dataclass(frozen=True)
class TechniqueLabel:
    id: int
    name: str


class LabelVocabulary:
    """Ordered label set, grown in first-appearance order and then frozen."""

    def __init__(self, names: Iterable[str] = (), task: "Task | str" = Task.A, frozen: bool = False):
        self.task = Task.parse(task)
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self._add(name)
        self.frozen = frozen

    def _add(self, name: str) -> int:
        if not isinstance(name, str) or not name.strip():
            raise CorpusError(f"label names must be non-empty strings, got {name!r}")
        if name in self._index:
            raise CorpusError(f"duplicate label name {name!r}")
        self._index[name] = len(self._names)
        self._names.append(name)
        return self._index[name]

    def add(self, name: str) -> int:
        """Return the index of ``name``, appending it if unseen and not frozen."""
        if name in self._index:
            return self._index[name]
        if self.frozen:
            raise VocabularyMismatchError(f"label {name!r} is not in the frozen vocabulary")
        return self._add(name)

    def freeze(self) -> "LabelVocabulary":
        self.frozen = True
        return self

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise VocabularyMismatchError(f"label {name!r} is not in the vocabulary") from None

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelVocabulary) and self._names == other._names

    def __repr__(self) -> str:
        return f"LabelVocabulary({self._names!r}, task={self.task.value!r})"

    @property
    def names(self) -> list[str]:
        return list(self._names)

    @property
    def labels(self) -> list[TechniqueLabel]:
        return [TechniqueLabel(i, n) for i, n in enumerate(self._names)]

    def multi_hot(self, names: Iterable[str]) -> np.ndarray:
        y = np.zeros(len(self), dtype=np.float64)
        for name in names:
            y[self.index(name)] = 1.0
        return y

    def hash(self) -> str:
        payload = json.dumps(self._names, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def save(self, path: "str | Path") -> None:
        Path(path).write_text(json.dumps(self._names, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: "str | Path", task: "Task | str" = Task.A) -> "LabelVocabulary":
        names = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(names, list):
            raise CorpusError(f"{path}: vocabulary file must be a JSON array of label names")
        return cls(names, task=task, frozen=True)


@dataclass(frozen=True, order=True)
class LabeledSpan:
    start: int
    end: int
    technique: str

    def to_json(self) -> dict[str, Any]:
        return {"technique": self.technique, "start": self.start, "end": self.end}


@dataclass(frozen=True)
class MemeRecord:
    id: str
    text: str
    labels: frozenset[str] = frozenset()
    spans: tuple[LabeledSpan, ...] = ()
    image: Optional[str] = None

    def to_json(self, task: "Task | str") -> dict[str, Any]:
        task = Task.parse(task)
        out: dict[str, Any] = {"id": self.id, "text": self.text}
        if task is Task.B:
            spans = [s.to_json() for s in sorted(self.spans)]
            spanned = {s.technique for s in self.spans}
            # labels without any gold span survive as bare names
            bare = sorted(self.labels - spanned)
            out["labels"] = spans + bare
        else:
            out["labels"] = sorted(self.labels)
        if self.image is not None:
            out["image"] = self.image
        return out


@dataclass(frozen=True)
class Dataset:
    split: Split
    records: tuple[MemeRecord, ...]
    vocabulary: LabelVocabulary
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def task(self) -> Task:
        return self.vocabulary.task

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, MemeRecord]:
        return {r.id: r for r in self.records}

    def targets(self) -> np.ndarray:
        """Multi-hot label matrix (records x labels)."""
        y = np.zeros((len(self.records), len(self.vocabulary)), dtype=np.float64)
        for i, rec in enumerate(self.records):
            for name in rec.labels:
                y[i, self.vocabulary.index(name)] = 1.0
        return y

    def to_json(self) -> list[dict[str, Any]]:
        return [r.to_json(self.task) for r in self.records]


def _require(cond: bool, message: str, record_id: str, field: str) -> None:
    if not cond:
        raise CorpusError(message, record_id=record_id, field=field)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def parse_record(obj: Any, task: Task, vocabulary: LabelVocabulary, position: int,
                 warnings: list[str]) -> MemeRecord:
    """Validate one raw JSON object and turn it into a :class:`MemeRecord`."""
    if not isinstance(obj, dict):
        raise CorpusError(f"entry {position} is not a JSON object")
    rid = obj.get("id")
    if isinstance(rid, int) and not isinstance(rid, bool):
        rid = str(rid)
    if not isinstance(rid, str) or not rid:
        raise CorpusError(f"entry {position} has no usable 'id'", field="id")
    text = obj.get("text")
    _require(isinstance(text, str), "text must be a string", rid, "text")
    raw_labels = obj.get("labels", [])
    _require(isinstance(raw_labels, list), "labels must be a list", rid, "labels")

    labels: set[str] = set()
    spans: list[LabeledSpan] = []
    for item in raw_labels:
        if isinstance(item, str):
            if task is Task.B:
                warnings.append(f"record {rid!r}: label {item!r} has no gold span")
            labels.add(item)
        elif isinstance(item, dict) and task is Task.B:
            technique = item.get("technique")
            start, end = item.get("start"), item.get("end")
            _require(isinstance(technique, str) and bool(technique), "span technique must be a non-empty string",
                     rid, "labels")
            _require(_is_int(start) and _is_int(end), "span start/end must be integers", rid, "labels")
            _require(start <= end, f"span end before start ({start}, {end})", rid, "labels")
            _require(start < end, f"empty span ({start}, {end})", rid, "labels")
            _require(start >= 0, f"span start {start} is negative", rid, "labels")
            _require(end <= len(text), f"span end {end} exceeds text length {len(text)}", rid, "labels")
            spans.append(LabeledSpan(start, end, technique))
            labels.add(technique)
        else:
            raise CorpusError(f"unexpected label entry {item!r} for task {task.value}", rid, "labels")

    by_technique: dict[str, list[LabeledSpan]] = {}
    for span in spans:
        by_technique.setdefault(span.technique, []).append(span)
    for technique, group in by_technique.items():
        group.sort()
        for prev, cur in zip(group, group[1:]):
            _require(cur.start >= prev.end,
                     f"overlapping {technique!r} spans ({prev.start}, {prev.end}) and ({cur.start}, {cur.end})",
                     rid, "labels")

    image = obj.get("image")
    _require(image is None or isinstance(image, str), "image must be a string key", rid, "image")
    if task is Task.C and image is None:
        warnings.append(f"record {rid!r}: task C record without an image key")

    # labels in first-appearance order so the vocabulary order is file order
    for item in raw_labels:
        vocabulary.add(item if isinstance(item, str) else item["technique"])
    return MemeRecord(rid, text, frozenset(labels), tuple(sorted(spans)), image)


def parse_dataset(objs: Any, task: "Task | str", split: "Split | str" = Split.TRAIN,
                  vocabulary: Optional[LabelVocabulary] = None) -> Dataset:
    task = Task.parse(task)
    if not isinstance(objs, list):
        raise CorpusParseError("corpus must be a JSON array of record objects")
    vocab = vocabulary if vocabulary is not None else LabelVocabulary(task=task)
    if vocab.task is not task:
        vocab = LabelVocabulary(vocab.names, task=task, frozen=vocab.frozen)
    warnings: list[str] = []
    records: list[MemeRecord] = []
    seen: set[str] = set()
    for i, obj in enumerate(objs):
        rec = parse_record(obj, task, vocab, i, warnings)
        if rec.id in seen:
            raise CorpusError("duplicate record id", record_id=rec.id, field="id")
        seen.add(rec.id)
        records.append(rec)
    for w in warnings:
        log.warning(w)
    return Dataset(Split(split), tuple(records), vocab, tuple(warnings))


def load_dataset(path: "str | Path", task: "Task | str", split: "Split | str" = Split.TRAIN,
                 vocabulary: Optional[LabelVocabulary] = None) -> Dataset:
    """Load and validate a corpus file.

    With ``vocabulary`` given (typically the frozen train vocabulary), labels
    outside it raise :class:`VocabularyMismatchError`; otherwise a fresh
    vocabulary is grown from the file.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    try:
        objs = json.loads(raw)
    except json.JSONDecodeError as exc:
        lines = raw.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise CorpusParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n  {context[:120]}") from exc
    try:
        return parse_dataset(objs, task, split, vocabulary)
    except CorpusError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def dump_dataset(dataset: Dataset, path: "str | Path") -> None:
    Path(path).write_text(json.dumps(dataset.to_json(), ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def class_frequencies(dataset: Dataset) -> np.ndarray:
    """Number of records carrying each label, in vocabulary order."""
    f = np.zeros(len(dataset.vocabulary), dtype=np.int64)
    for rec in dataset.records:
        for name in rec.labels:
            f[dataset.vocabulary.index(name)] += 1
    return f


def label_distribution_report(dataset: Dataset) -> list[tuple[str, int, float]]:
    """(label, count, count / n_records) rows, most frequent first.

    Ties keep vocabulary order. Fractions need not sum to one.
    """
    f = class_frequencies(dataset)
    n = len(dataset.records)
    order = sorted(range(len(f)), key=lambda k: (-int(f[k]), k))
    names = dataset.vocabulary.names
    return [(names[k], int(f[k]), (int(f[k]) / n) if n else 0.0) for k in order]


def check_vocabulary_subset(task_b: LabelVocabulary, task_c: LabelVocabulary) -> list[str]:
    """Warn about task B labels missing from the task C vocabulary."""
    missing = [name for name in task_b if name not in task_c]
    if missing:
        log.warning("task B labels absent from task C vocabulary: %s", ", ".join(missing))
    return missing


def align_vocabulary(dataset: Dataset, names: Sequence[str]) -> Dataset:
    """Re-express ``dataset`` against a frozen vocabulary with the given order."""
    vocab = LabelVocabulary(names, task=dataset.task, frozen=True)
    for rec in dataset.records:
        for name in rec.labels:
            vocab.index(name)
    return Dataset(dataset.split, dataset.records, vocab, dataset.warnings)
