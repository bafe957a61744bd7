"""Frozen feature extractors and the concatenation ensemble.

These stand in for pretrained encoders: each extractor maps a record to a
fixed-size vector and never changes once built. The downstream classifier
head is the only trainable part.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

import numpy as np

from .corpus import Dataset, MemeRecord
from .spans import ChunkTokenizer, TokenizedText, tokenize_with_offsets


class MissingModalityError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


@lru_cache(maxsize=1 << 18)
def _bucket(key: str, seed: int, dim: int) -> int:
    digest = hashlib.blake2b(f"{seed}\x1f{key}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    return v / norm if norm > 0 else v


def text_ngrams(text: str, word_orders: Sequence[int] = (1, 2),
                char_orders: Sequence[int] = (3, 5)) -> list[str]:
    """Tagged word and character n-grams of ``text``.

    Character n-grams are taken inside each lower-cased word padded with one
    space on each side; ``char_orders`` is an inclusive (low, high) range.
    """
    words = text.lower().split()
    grams: list[str] = []
    for n in range(word_orders[0], word_orders[-1] + 1):
        for i in range(len(words) - n + 1):
            grams.append("w:" + " ".join(words[i:i + n]))
    lo, hi = char_orders[0], char_orders[-1]
    for word in words:
        padded = f" {word} "
        for n in range(lo, hi + 1):
            for i in range(len(padded) - n + 1):
                grams.append("c:" + padded[i:i + n])
    return grams


@dataclass(frozen=True)
class TextFeaturizer:
    """Hashed n-gram tf-idf vectors.

    ``idf`` holds ``ln(n_docs / df)`` per hash bucket (buckets never seen in
    training use ``df = 1``). Counts are scaled by ``1 + idf`` so that
    n-grams present in every training document still contribute.
    """

    dim: int = 256
    seed: int = 0
    word_orders: tuple[int, int] = (1, 2)
    char_orders: tuple[int, int] = (3, 5)
    idf: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    n_docs: int = 0

    name = "text"

    def bucket_of(self, gram: str) -> int:
        return _bucket(gram, self.seed, self.dim)

    def buckets(self, text: str) -> list[int]:
        return [self.bucket_of(g) for g in text_ngrams(text, self.word_orders, self.char_orders)]

    def counts(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float64)
        for b in self.buckets(text):
            v[b] += 1.0
        return v

    def __call__(self, text: str) -> np.ndarray:
        return featurize_text(self, text)

    def featurize(self, record: MemeRecord) -> np.ndarray:
        return featurize_text(self, record.text)

    def config(self) -> dict[str, Any]:
        return {"kind": "text", "dim": self.dim, "seed": self.seed, "word_orders": list(self.word_orders),
                "char_orders": list(self.char_orders), "n_docs": self.n_docs,
                "idf": None if self.idf is None else self.idf.tolist()}

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "TextFeaturizer":
        idf = None if cfg.get("idf") is None else np.asarray(cfg["idf"], dtype=np.float64)
        if idf is not None:
            idf.setflags(write=False)
        return cls(cfg["dim"], cfg["seed"], tuple(cfg["word_orders"]), tuple(cfg["char_orders"]), idf,
                   cfg.get("n_docs", 0))

    def state_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.config(), sort_keys=True).encode()).hexdigest()


def fit_text_featurizer(train: "Dataset | Sequence[str]", dim: int = 256, seed: int = 0,
                        word_orders: tuple[int, int] = (1, 2),
                        char_orders: tuple[int, int] = (3, 5)) -> TextFeaturizer:
    """Learn bucket document frequencies from the training texts, then freeze."""
    texts = [r.text for r in train.records] if isinstance(train, Dataset) else list(train)
    if not texts:
        raise ValueError("cannot fit a text featurizer on an empty corpus")
    proto = TextFeaturizer(dim, seed, word_orders, char_orders)
    df = np.zeros(dim, dtype=np.float64)
    for text in texts:
        df[sorted(set(proto.buckets(text)))] += 1.0
    n = len(texts)
    idf = np.log(n / np.maximum(df, 1.0))
    idf.setflags(write=False)
    return TextFeaturizer(dim, seed, word_orders, char_orders, idf, n)


def featurize_text(f: TextFeaturizer, text: str) -> np.ndarray:
    if f.idf is None:
        raise ValueError("text featurizer is not fitted")
    v = f.counts(text) * (1.0 + f.idf)
    return _l2_normalize(v)


@dataclass(frozen=True)
class TokenFeaturizer:
    """Per-token hashed features: the token, its word, and neighbouring tokens.

    Special tokens get the zero vector.
    """

    dim: int = 256
    window: int = 1
    seed: int = 0
    chunk_size: int = 4
    max_length: int = 512

    name = "tokens"

    @property
    def tokenizer(self) -> ChunkTokenizer:
        return ChunkTokenizer(self.chunk_size, self.max_length)

    def tokenize(self, text: str) -> TokenizedText:
        return tokenize_with_offsets(text, self.tokenizer)

    def featurize_tokens(self, tokenized: TokenizedText) -> np.ndarray:
        toks = tokenized.tokens
        words: dict[int, str] = {}
        for t in toks:
            if not t.is_special:
                words[t.word_id] = words.get(t.word_id, "") + t.text
        out = np.zeros((len(toks), self.dim), dtype=np.float64)
        for j, tok in enumerate(toks):
            if tok.is_special:
                continue
            keys = [f"t:{tok.text.lower()}", f"W:{words[tok.word_id].lower()}"]
            keys += ["c:" + g[2:] for g in text_ngrams(words[tok.word_id], (1, 1), (3, 4)) if g.startswith("c:")]
            for off in range(1, self.window + 1):
                for sign, k in (("-", j - off), ("+", j + off)):
                    if 0 <= k < len(toks) and not toks[k].is_special:
                        keys.append(f"{sign}{off}:{words[toks[k].word_id].lower()}")
                    else:
                        keys.append(f"{sign}{off}:<pad>")
            for key in keys:
                out[j, _bucket(key, self.seed, self.dim)] += 1.0
            out[j] = _l2_normalize(out[j])
        return out

    def featurize(self, record: MemeRecord) -> tuple[TokenizedText, np.ndarray]:
        tokenized = self.tokenize(record.text)
        return tokenized, self.featurize_tokens(tokenized)

    def config(self) -> dict[str, Any]:
        return {"kind": "tokens", "dim": self.dim, "window": self.window, "seed": self.seed,
                "chunk_size": self.chunk_size, "max_length": self.max_length}

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "TokenFeaturizer":
        return cls(cfg["dim"], cfg["window"], cfg["seed"], cfg["chunk_size"], cfg["max_length"])

    def state_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.config(), sort_keys=True).encode()).hexdigest()


def synth_visual_features(image_key: str, dv: int = 64, regions: int = 36, seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-random region features for an image key."""
    digest = hashlib.blake2b(f"{seed}\x1f{image_key}".encode("utf-8"), digest_size=16).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return rng.standard_normal((regions, dv))


class VisualFeatureStore:
    """Region features per image key, all with the same (regions, dv) shape.

    With ``synthetic_seed`` set, unknown keys fall back to
    :func:`synth_visual_features` instead of raising.
    """

    def __init__(self, features: Optional[dict[str, np.ndarray]] = None, regions: int = 36, dv: int = 64,
                 synthetic_seed: Optional[int] = None):
        self.regions = regions
        self.dv = dv
        self.synthetic_seed = synthetic_seed
        self._features: dict[str, np.ndarray] = {}
        for key, mat in (features or {}).items():
            self.add(key, mat)

    def add(self, key: str, mat: Any) -> None:
        arr = np.asarray(mat, dtype=np.float64)
        if arr.shape != (self.regions, self.dv):
            raise ValueError(f"features for {key!r} have shape {arr.shape}, store expects "
                             f"{(self.regions, self.dv)}")
        arr.setflags(write=False)
        self._features[key] = arr

    def __contains__(self, key: object) -> bool:
        return key in self._features or (self.synthetic_seed is not None and isinstance(key, str))

    def __len__(self) -> int:
        return len(self._features)

    def keys(self) -> list[str]:
        return list(self._features)

    def get(self, key: str, record_id: Optional[str] = None) -> np.ndarray:
        if key in self._features:
            return self._features[key]
        if self.synthetic_seed is not None:
            return synth_visual_features(key, self.dv, self.regions, self.synthetic_seed)
        who = f"record {record_id!r}" if record_id is not None else "lookup"
        raise MissingModalityError(f"{who}: image key {key!r} not in visual feature store")

    def save(self, path: "str | Path") -> None:
        """Write JSON (``.json``) or packed float32 (``.npz``)."""
        path = Path(path)
        if path.suffix == ".npz":
            keys = sorted(self._features)
            stacked = (np.stack([self._features[k] for k in keys]).astype(np.float32) if keys
                       else np.zeros((0, self.regions, self.dv), np.float32))
            np.savez(path, keys=np.array(keys, dtype=str), features=stacked,
                     header=np.array([self.regions, self.dv]))
        else:
            payload = {"R": self.regions, "dv": self.dv,
                       "features": {k: self._features[k].tolist() for k in sorted(self._features)}}
            path.write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: "str | Path") -> "VisualFeatureStore":
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as z:
                regions, dv = (int(x) for x in z["header"])
                feats = {str(k): z["features"][i].astype(np.float64) for i, k in enumerate(z["keys"])}
            return cls(feats, regions, dv)
        payload = json.loads(path.read_text(encoding="utf-8"))
        return cls(payload["features"], int(payload["R"]), int(payload["dv"]))

    def state_hash(self) -> str:
        h = hashlib.sha256(f"{self.regions},{self.dv},{self.synthetic_seed}".encode())
        for key in sorted(self._features):
            h.update(key.encode("utf-8"))
            h.update(self._features[key].tobytes())
        return h.hexdigest()


def pool_visual_features(store: VisualFeatureStore, key: str, record_id: Optional[str] = None) -> np.ndarray:
    """Mean over regions, L2-normalised (zero mean stays zero)."""
    return _l2_normalize(store.get(key, record_id).mean(axis=0))


class Extractor(Protocol):
    name: str
    dim: int

    def featurize(self, record: MemeRecord) -> np.ndarray: ...

    def state_hash(self) -> str: ...


@dataclass(frozen=True)
class VisualExtractor:
    store: VisualFeatureStore
    source: Optional[str] = None

    name = "visual"

    @property
    def dim(self) -> int:
        return self.store.dv

    def featurize(self, record: MemeRecord) -> np.ndarray:
        if record.image is None:
            raise MissingModalityError(f"record {record.id!r} has no image key")
        return pool_visual_features(self.store, record.image, record.id)

    def state_hash(self) -> str:
        return self.store.state_hash()


@dataclass(frozen=True)
class HiddenLayerExtractor:
    """Hidden Tanh activations of a trained head on top of a base extractor.

    This is the "fine-tune unimodally, then freeze" encoder: its output plays
    the role of a fine-tuned [CLS] embedding.
    """

    base: Any
    head: Any
    name: str = "hidden"

    @property
    def dim(self) -> int:
        return self.head.hidden_dim

    def featurize(self, record: MemeRecord) -> np.ndarray:
        return self.head.hidden(self.base.featurize(record)[None, :])[0]

    def state_hash(self) -> str:
        return hashlib.sha256((self.base.state_hash() + self.head.state_hash()).encode()).hexdigest()


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple[Any, ...]

    name = "ensemble"

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")

    @property
    def dim(self) -> int:
        return sum(m.dim for m in self.members)

    def slices(self) -> list[slice]:
        out, at = [], 0
        for m in self.members:
            out.append(slice(at, at + m.dim))
            at += m.dim
        return out

    def featurize(self, record: MemeRecord) -> np.ndarray:
        return ensemble_featurize(self, record)

    def state_hash(self) -> str:
        return hashlib.sha256("".join(m.state_hash() for m in self.members).encode()).hexdigest()


def ensemble_featurize(spec: EnsembleSpec, record: MemeRecord) -> np.ndarray:
    parts = []
    for member in spec.members:
        v = np.asarray(member.featurize(record), dtype=np.float64)
        if v.shape != (member.dim,):
            raise ValueError(f"member {member.name!r} returned shape {v.shape}, declared dim {member.dim}")
        parts.append(v)
    return np.concatenate(parts)


def featurize_all(extractor: Any, records: Sequence[MemeRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, extractor.dim))
    return np.stack([extractor.featurize(r) for r in records])


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b) / (na * nb)


def extractor_to_config(extractor: Any) -> dict[str, Any]:
    """JSON description of a frozen extractor, enough to rebuild it exactly."""
    if isinstance(extractor, (TextFeaturizer, TokenFeaturizer)):
        return extractor.config()
    if isinstance(extractor, VisualExtractor):
        store = extractor.store
        return {"kind": "visual", "source": extractor.source, "R": store.regions, "dv": store.dv,
                "synthetic_seed": store.synthetic_seed, "state_hash": store.state_hash()}
    if isinstance(extractor, HiddenLayerExtractor):
        return {"kind": "hidden", "name": extractor.name, "base": extractor_to_config(extractor.base),
                "head": extractor.head.to_json()}
    if isinstance(extractor, EnsembleSpec):
        return {"kind": "ensemble", "dim": extractor.dim,
                "members": [extractor_to_config(m) for m in extractor.members]}
    raise TypeError(f"cannot serialise extractor of type {type(extractor).__name__}")


def extractor_from_config(cfg: dict[str, Any], visual_store: Optional[VisualFeatureStore] = None) -> Any:
    """Inverse of :func:`extractor_to_config`.

    Visual members need the feature store: pass it, or rely on the recorded
    ``source`` path or synthetic seed. Its content hash must match.
    """
    kind = cfg["kind"]
    if kind == "text":
        return TextFeaturizer.from_config(cfg)
    if kind == "tokens":
        return TokenFeaturizer.from_config(cfg)
    if kind == "visual":
        store = visual_store
        if store is None and cfg.get("source"):
            store = VisualFeatureStore.load(cfg["source"])
        if store is None and cfg.get("synthetic_seed") is not None:
            store = VisualFeatureStore(regions=cfg["R"], dv=cfg["dv"], synthetic_seed=cfg["synthetic_seed"])
        if store is None:
            raise MissingModalityError("checkpoint needs a visual feature store")
        if store.state_hash() != cfg["state_hash"]:
            raise ValueError("visual feature store differs from the one the checkpoint was trained with")
        return VisualExtractor(store, cfg.get("source"))
    if kind == "hidden":
        from .model import MlpHead

        return HiddenLayerExtractor(extractor_from_config(cfg["base"], visual_store), MlpHead.from_json(cfg["head"]),
                                    cfg["name"])
    if kind == "ensemble":
        return EnsembleSpec(tuple(extractor_from_config(m, visual_store) for m in cfg["members"]))
    raise ValueError(f"unknown extractor kind {kind!r}")


__all__ = [
    "EnsembleSpec", "Extractor", "HiddenLayerExtractor", "MissingModalityError", "TextFeaturizer",
    "TokenFeaturizer", "VisualExtractor", "VisualFeatureStore", "cosine", "ensemble_featurize", "extractor_from_config", "extractor_to_config",
    "featurize_all", "featurize_text", "fit_text_featurizer", "pool_visual_features", "synth_visual_features",
    "text_ngrams",
]
