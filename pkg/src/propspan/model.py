"""Class-weighted multi-label BCE, the Tanh MLP head, and its training loop.

Everything is plain numpy in float64 with hand-written gradients. A single
``numpy.random.Generator`` seeded from :class:`TrainConfig` drives
initialisation, shuffling and dropout, so a (data, config) pair always
produces the same parameters.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .corpus import Dataset, LabeledSpan, LabelVocabulary, MemeRecord, Task, VocabularyMismatchError
from .corpus import class_frequencies
from .features import TokenFeaturizer, featurize_all
from .spans import TokenizedText, merge_tokens_to_words, project_spans_to_tokens, words_to_char_spans

log = logging.getLogger(__name__)

EPS = 1e-7


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# class weights and loss


@dataclass(frozen=True)
class ClassWeights:
    frequencies: np.ndarray
    train_size: int
    weights: np.ndarray


def compute_class_weights(f: Sequence[float], train_size: int, fallback: float = 1.0) -> ClassWeights:
    """Positive weight ``(|K| - f_k) / f_k`` per label.

    Labels never seen in training get ``fallback`` and a warning.
    """
    f = np.asarray(f, dtype=np.float64)
    if train_size < 1:
        raise ValueError("train_size must be >= 1")
    if np.any(f < 0):
        raise ValueError("class frequencies must be non-negative")
    if np.any(f > train_size):
        raise ValueError("a class frequency exceeds the train set size")
    p = np.full_like(f, float(fallback))
    seen = f > 0
    p[seen] = (train_size - f[seen]) / f[seen]
    if not np.all(seen):
        log.warning("labels %s have zero train frequency; using weight %s", np.flatnonzero(~seen).tolist(),
                    fallback)
    return ClassWeights(f, int(train_size), p)


def _weights(p: "ClassWeights | np.ndarray | Sequence[float] | None", d: int) -> np.ndarray:
    if p is None:
        return np.ones(d)
    w = p.weights if isinstance(p, ClassWeights) else np.asarray(p, dtype=np.float64)
    if w.shape != (d,):
        raise ValueError(f"class weights have shape {w.shape}, expected ({d},)")
    return w


def _check_shapes(x: np.ndarray, y: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if x.ndim != 2 or x.shape != y.shape:
        raise ValueError(f"probabilities {x.shape} and targets {y.shape} must be equal 2-d shapes")
    if mask is None:
        return np.ones(x.shape[0], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x.shape[0],):
        raise ValueError(f"mask has shape {mask.shape}, expected ({x.shape[0]},)")
    return ~mask


def weighted_bce_loss(x, y, p=None, mask=None) -> float:
    """Mean positive-weighted binary cross-entropy over unmasked rows.

    ``x`` are sigmoid outputs (clamped to ``[EPS, 1 - EPS]``), ``y`` multi-hot
    targets, ``p`` per-label positive weights. Rows where ``mask`` is True
    are dropped from both the sum and the ``N * d`` normaliser.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = _check_shapes(x, y, mask)
    w = _weights(p, x.shape[1])
    n = int(keep.sum())
    if n == 0 or x.shape[1] == 0:
        return 0.0
    xc = np.clip(x[keep], EPS, 1.0 - EPS)
    yk = y[keep]
    terms = w * yk * np.log(xc) + (1.0 - yk) * np.log(1.0 - xc)
    return float(-terms.sum() / (n * x.shape[1]))


def bce_loss(x, y, mask=None) -> float:
    """Unweighted mean binary cross-entropy."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = _check_shapes(x, y, mask)
    if not keep.any() or x.shape[1] == 0:
        return 0.0
    xc = np.clip(x[keep], EPS, 1.0 - EPS)
    yk = y[keep]
    return float(-(yk * np.log(xc) + (1.0 - yk) * np.log(1.0 - xc)).mean())


def loss_gradient(x, y, p=None, mask=None) -> np.ndarray:
    """Gradient of :func:`weighted_bce_loss` with respect to the pre-sigmoid logits."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = _check_shapes(x, y, mask)
    w = _weights(p, x.shape[1])
    g = np.zeros_like(x)
    n = int(keep.sum())
    if n == 0 or x.shape[1] == 0:
        return g
    xk, yk = x[keep], y[keep]
    g[keep] = (w * yk * (xk - 1.0) + (1.0 - yk) * xk) / (n * x.shape[1])
    return g


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# classifier head


@dataclass
class MlpHead:
    """``sigmoid(W2 @ tanh(dropout(W1 @ x + b1)) + b2)``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout: float = 0.0

    @classmethod
    def init(cls, input_dim: int, n_labels: int, hidden_dim: Optional[int] = None, dropout: float = 0.0,
             rng: Optional[np.random.Generator] = None) -> "MlpHead":
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden_dim = hidden_dim or input_dim

        def glorot(fan_out: int, fan_in: int) -> np.ndarray:
            a = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-a, a, size=(fan_out, fan_in))

        return cls(glorot(hidden_dim, input_dim), np.zeros(hidden_dim), glorot(n_labels, hidden_dim),
                   np.zeros(n_labels), float(dropout))

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_labels(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "MlpHead":
        return copy.deepcopy(self)

    def check_finite(self) -> None:
        for name, arr in self.params().items():
            if not np.all(np.isfinite(arr)):
                raise TrainingError(f"non-finite values in head parameter {name}")

    def _inputs(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ValueError(f"feature dimension {x.shape[1]} does not match head input {self.input_dim}")
        return x

    def hidden(self, features: np.ndarray) -> np.ndarray:
        x = self._inputs(features)
        return np.tanh(x @ self.w1.T + self.b1)

    def logits(self, features: np.ndarray, train_mode: bool = False,
               rng: Optional[np.random.Generator] = None) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        x = self._inputs(features)
        a = x @ self.w1.T + self.b1
        keep = None
        if train_mode and self.dropout > 0:
            if rng is None:
                raise ValueError("train-mode dropout needs a random generator")
            keep = (rng.random(a.shape) >= self.dropout) / (1.0 - self.dropout)
            a = a * keep
        h = np.tanh(a)
        z = h @ self.w2.T + self.b2
        return z, {"x": x, "h": h, "keep": keep}

    def backward(self, cache: dict[str, np.ndarray], dz: np.ndarray) -> dict[str, np.ndarray]:
        x, h, keep = cache["x"], cache["h"], cache["keep"]
        da = (dz @ self.w2) * (1.0 - h * h)
        if keep is not None:
            da = da * keep
        return {"w1": da.T @ x, "b1": da.sum(axis=0), "w2": dz.T @ h, "b2": dz.sum(axis=0)}

    def to_json(self) -> dict[str, Any]:
        return {"dropout": self.dropout, **{k: v.tolist() for k, v in self.params().items()}}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "MlpHead":
        arr = {k: np.asarray(obj[k], dtype=np.float64) for k in ("w1", "b1", "w2", "b2")}
        head = cls(arr["w1"], arr["b1"].reshape(-1), arr["w2"].reshape(-1, arr["w1"].shape[0]),
                   arr["b2"].reshape(-1), float(obj["dropout"]))
        head.check_finite()
        return head

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for v in self.params().values():
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()


def forward(head: MlpHead, features: np.ndarray, train_mode: bool = False,
            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Per-label probabilities; 1-d input gives a 1-d result."""
    z, _ = head.logits(features, train_mode, rng)
    probs = sigmoid(z)
    return probs[0] if np.ndim(features) == 1 else probs


# ---------------------------------------------------------------------------
# optimisers


class Optimizer:
    def __init__(self, lr: float, weight_decay: float = 0.0, warmup_steps: int = 0):
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.t = 0

    def current_lr(self) -> float:
        if self.warmup_steps > 0 and self.t < self.warmup_steps:
            return self.lr * self.t / self.warmup_steps
        return self.lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        lr = self.current_lr()
        for name, p in params.items():
            self._update(name, p, grads[name], lr)

    def _update(self, name: str, p: np.ndarray, g: np.ndarray, lr: float) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, name, p, g, lr):
        if self.weight_decay:
            g = g + self.weight_decay * p
        p -= lr * g


class Adam(Optimizer):
    """Adam with bias correction; ``weight_decay`` is added to the gradient (L2)."""

    decoupled = False

    def __init__(self, lr: float, weight_decay: float = 0.0, warmup_steps: int = 0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(lr, weight_decay, warmup_steps)
        self.b1, self.b2 = betas
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _update(self, name, p, g, lr):
        if self.weight_decay and not self.decoupled:
            g = g + self.weight_decay * p
        if name not in self.m:
            self.m[name] = np.zeros_like(p)
            self.v[name] = np.zeros_like(p)
        m, v = self.m[name], self.v[name]
        m *= self.b1
        m += (1.0 - self.b1) * g
        v *= self.b2
        v += (1.0 - self.b2) * (g * g)
        if self.weight_decay and self.decoupled:
            p *= 1.0 - lr * self.weight_decay
        denom = np.sqrt(v / (1.0 - self.b2 ** self.t))
        denom += self.eps
        p -= (lr / (1.0 - self.b1 ** self.t)) * m / denom


class AdamW(Adam):
    decoupled = True


OPTIMIZERS = {"sgd": SGD, "adam": Adam, "adamw": AdamW, "bertadam": AdamW}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 8
    max_sequence_length: int = 128
    patience: int = 50
    weight_decay: float = 0.0
    optimizer: str = "adam"
    dropout: float = 0.1
    seed: int = 0
    max_epochs: int = 200
    warmup: float = 0.0
    hidden_dim: Optional[int] = None
    threshold: float = 0.5
    class_weighted: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.max_sequence_length < 2:
            raise ValueError("batch_size, max_epochs must be >= 1 and max_sequence_length >= 2")
        if self.patience < 0 or self.weight_decay < 0:
            raise ValueError("patience and weight_decay must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.warmup < 1.0:
            raise ValueError("warmup is a fraction of steps in [0, 1)")
        if self.optimizer.lower() not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")

    @classmethod
    def for_task(cls, task: "Task | str", ensemble: bool = False, **overrides: Any) -> "TrainConfig":
        """Published per-task hyperparameters, then ``overrides``."""
        task = Task.parse(task)
        base: dict[str, Any]
        if task is Task.A:
            base = dict(max_sequence_length=128, batch_size=8, warmup=0.0, weight_decay=0.0, optimizer="adam")
        elif task is Task.B:
            base = dict(max_sequence_length=512, batch_size=8, warmup=0.0, weight_decay=0.01, optimizer="adamw")
        else:
            base = dict(max_sequence_length=128, batch_size=32 if ensemble else 16, warmup=0.1,
                        weight_decay=0.01, optimizer="adamw")
        base.update(learning_rate=1e-5, patience=50, dropout=0.1)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def make_optimizer(cfg: TrainConfig, total_steps: int) -> Optimizer:
    warmup_steps = int(math.ceil(cfg.warmup * total_steps)) if cfg.warmup > 0 else 0
    return OPTIMIZERS[cfg.optimizer.lower()](cfg.learning_rate, cfg.weight_decay, warmup_steps)


# ---------------------------------------------------------------------------
# prediction


def predict_proba(head: MlpHead, features: np.ndarray) -> np.ndarray:
    return forward(head, np.atleast_2d(features))


def threshold_labels(probs: np.ndarray, names: Sequence[str], threshold: float = 0.5) -> frozenset[str]:
    return frozenset(names[k] for k in np.flatnonzero(np.asarray(probs) >= threshold))


def predict_labels(head: MlpHead, featurizer: Any, record: MemeRecord, vocabulary: "LabelVocabulary | Sequence[str]",
                   threshold: float = 0.5) -> frozenset[str]:
    """Labels whose probability is at least ``threshold``."""
    names = list(vocabulary)
    probs = forward(head, featurizer.featurize(record))
    return threshold_labels(probs, names, threshold)


def spans_from_token_probs(probs: np.ndarray, tokenized: TokenizedText, labels: Sequence[str],
                           threshold: float = 0.5) -> list[LabeledSpan]:
    m = np.asarray(probs) >= threshold
    m[tokenized.special_mask] = False
    return words_to_char_spans(merge_tokens_to_words(m, tokenized), tokenized, labels)


def predict_spans(head: MlpHead, token_featurizer: TokenFeaturizer, record: MemeRecord,
                  vocabulary: "LabelVocabulary | Sequence[str]", threshold: float = 0.5) -> list[LabeledSpan]:
    tokenized, feats = token_featurizer.featurize(record)
    return spans_from_token_probs(forward(head, feats), tokenized, list(vocabulary), threshold)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    dev_metric: float
    best_dev_metric: float


@dataclass
class TrainResult:
    head: MlpHead
    log: list[EpochLog]
    best_epoch: int
    best_dev_metric: float
    class_weights: ClassWeights
    trajectory: list[str] = field(default_factory=list, repr=False)

    def write_log(self, path: "str | Path", header_comment: Optional[str] = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "dev_metric", "best_dev_metric"])
            for row in self.log:
                w.writerow([row.epoch, repr(row.train_loss), repr(row.dev_metric), repr(row.best_dev_metric)])


@dataclass
class _Encoded:
    """Precomputed (frozen) features and targets for one split."""

    x: list[np.ndarray]
    y: list[np.ndarray]
    special: list[np.ndarray]
    tokenized: list[Optional[TokenizedText]]

    def batch(self, idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (np.concatenate([self.x[i] for i in idx]), np.concatenate([self.y[i] for i in idx]),
                np.concatenate([self.special[i] for i in idx]))


def _encode(dataset: Dataset, featurizer: Any, token_level: bool) -> _Encoded:
    names = dataset.vocabulary.names
    if not token_level:
        x = featurize_all(featurizer, dataset.records)
        y = dataset.targets()
        return _Encoded([x[i:i + 1] for i in range(len(x))], [y[i:i + 1] for i in range(len(y))],
                        [np.zeros(1, dtype=bool) for _ in range(len(x))], [None] * len(x))
    enc = _Encoded([], [], [], [])
    for rec in dataset.records:
        tokenized, feats = featurizer.featurize(rec)
        enc.x.append(feats)
        # spans beyond a truncation point simply hit no token
        enc.y.append(project_spans_to_tokens(rec.spans, tokenized, names).astype(np.float64))
        enc.special.append(tokenized.special_mask)
        enc.tokenized.append(tokenized)
    return enc


def _dev_metric(head: MlpHead, dev: Dataset, enc: _Encoded, token_level: bool, threshold: float) -> float:
    from .eval import LabelPrediction, SpanPrediction, micro_f1, span_partial_f1

    names = dev.vocabulary.names
    if token_level:
        preds = []
        for rec, x, tokenized in zip(dev.records, enc.x, enc.tokenized):
            spans = spans_from_token_probs(forward(head, x), tokenized, names, threshold)
            preds.append(SpanPrediction(rec.id, tuple(spans), rec.spans))
        return span_partial_f1(preds)
    probs = forward(head, np.concatenate(enc.x))
    preds = [LabelPrediction(rec.id, threshold_labels(p, names, threshold), rec.labels)
             for rec, p in zip(dev.records, probs)]
    return micro_f1(preds)


def train(train_set: Dataset, dev_set: Dataset, featurizer: Any, cfg: TrainConfig,
          record_trajectory: bool = False) -> TrainResult:
    """Mini-batch training with early stopping on the dev metric.

    Sequence-level featurizers (``featurize(record) -> vector``) train a
    per-record classifier scored by micro-F1. A :class:`TokenFeaturizer`
    switches to per-token tagging scored by partial-match span F1, with
    special tokens masked out of the loss. Returns the best-dev head.
    """
    if len(train_set) == 0:
        raise ValueError("empty train split")
    if len(dev_set) == 0:
        raise ValueError("empty dev split")
    if dev_set.vocabulary.names != train_set.vocabulary.names:
        raise VocabularyMismatchError("train and dev splits use different label vocabularies")
    token_level = isinstance(featurizer, TokenFeaturizer)
    n_labels = len(train_set.vocabulary)

    if cfg.class_weighted:
        weights = compute_class_weights(class_frequencies(train_set), len(train_set))
    else:
        weights = ClassWeights(class_frequencies(train_set).astype(np.float64), len(train_set), np.ones(n_labels))

    tr = _encode(train_set, featurizer, token_level)
    dv = _encode(dev_set, featurizer, token_level)

    rng = np.random.default_rng(cfg.seed)
    head = MlpHead.init(featurizer.dim, n_labels, cfg.hidden_dim, cfg.dropout, rng)
    n = len(train_set)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    opt = make_optimizer(cfg, steps_per_epoch * cfg.max_epochs)

    best_head, best_metric, best_epoch = head.copy(), -math.inf, 0
    since_best = 0
    history: list[EpochLog] = []
    trajectory: list[str] = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total, rows = 0.0, 0
        for s in range(0, n, cfg.batch_size):
            x, y, special = tr.batch(order[s:s + cfg.batch_size])
            z, cache = head.logits(x, train_mode=True, rng=rng)
            probs = sigmoid(z)
            loss = weighted_bce_loss(probs, y, weights, special)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, step {opt.t + 1}; "
                                    f"logit range [{z.min():.3g}, {z.max():.3g}]")
            grads = head.backward(cache, loss_gradient(probs, y, weights, special))
            opt.step(head.params(), grads)
            head.check_finite()
            kept = int((~special).sum())
            total += loss * kept
            rows += kept
        metric = _dev_metric(head, dev_set, dv, token_level, cfg.threshold)
        if metric > best_metric:
            best_head, best_metric, best_epoch, since_best = head.copy(), metric, epoch, 0
        else:
            since_best += 1
        history.append(EpochLog(epoch, total / max(rows, 1), metric, best_metric))
        if record_trajectory:
            trajectory.append(head.state_hash())
        log.debug("epoch %d loss %.6f dev %.4f best %.4f", epoch, history[-1].train_loss, metric, best_metric)
        if since_best > cfg.patience:
            break
    return TrainResult(best_head, history, best_epoch, best_metric, weights, trajectory)


# ---------------------------------------------------------------------------
# bundled model and checkpoints

CHECKPOINT_FORMAT = "propspan-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainedModel:
    task: Task
    vocabulary: LabelVocabulary
    featurizer: Any
    head: MlpHead
    config: TrainConfig

    @property
    def token_level(self) -> bool:
        return isinstance(self.featurizer, TokenFeaturizer)

    def predict(self, record: MemeRecord, threshold: Optional[float] = None) -> "frozenset[str] | list[LabeledSpan]":
        t = self.config.threshold if threshold is None else threshold
        if self.token_level:
            return predict_spans(self.head, self.featurizer, record, self.vocabulary, t)
        return predict_labels(self.head, self.featurizer, record, self.vocabulary, t)

    def predict_record(self, record: MemeRecord, threshold: Optional[float] = None) -> MemeRecord:
        out = self.predict(record, threshold)
        if self.token_level:
            spans = tuple(out)
            return MemeRecord(record.id, record.text, frozenset(s.technique for s in spans), spans, record.image)
        return MemeRecord(record.id, record.text, frozenset(out), (), record.image)

    def to_json(self, manifest: Optional[dict[str, Any]] = None) -> dict[str, Any]:
        from .features import extractor_to_config

        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "task": self.task.value,
                "vocabulary": self.vocabulary.names, "vocabulary_hash": self.vocabulary.hash(),
                "featurizer": extractor_to_config(self.featurizer), "config": self.config.to_dict(),
                "head": self.head.to_json(), "manifest": manifest}

    def save(self, path: "str | Path", manifest: Optional[dict[str, Any]] = None) -> None:
        Path(path).write_text(json.dumps(self.to_json(manifest), sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: "str | Path", vocabulary: Optional[LabelVocabulary] = None,
                    visual_store: Any = None) -> TrainedModel:
    """Read a checkpoint; a given ``vocabulary`` must hash to the stored one."""
    from .features import extractor_from_config

    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')}")
    task = Task.parse(obj["task"])
    vocab = LabelVocabulary(obj["vocabulary"], task=task, frozen=True)
    if vocab.hash() != obj["vocabulary_hash"]:
        raise VocabularyMismatchError("checkpoint vocabulary does not match its recorded hash")
    if vocabulary is not None and vocabulary.hash() != vocab.hash():
        raise VocabularyMismatchError(f"vocabulary hash {vocabulary.hash()} does not match checkpoint "
                                      f"vocabulary hash {vocab.hash()}")
    featurizer = extractor_from_config(obj["featurizer"], visual_store=visual_store)
    return TrainedModel(task, vocab, featurizer, MlpHead.from_json(obj["head"]), TrainConfig.from_dict(obj["config"]))
