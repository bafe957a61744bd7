"""Span algebra between character offsets, tokens and words.

Tokens carry character offsets and a ``word_id``; special boundary tokens
have ``word_id == -1`` and never receive a label. Label matrices are plain
boolean numpy arrays with one row per token (or word) and one column per
label in vocabulary order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .corpus import LabeledSpan

SPECIAL_WORD_ID = -1


class SpanError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int
    word_id: int
    is_special: bool = False


@dataclass(frozen=True)
class TokenizedText:
    source: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def special_mask(self) -> np.ndarray:
        return np.array([t.is_special for t in self.tokens], dtype=bool)

    @property
    def n_words(self) -> int:
        ids = [t.word_id for t in self.tokens if not t.is_special]
        return max(ids) + 1 if ids else 0

    def word_ranges(self) -> list[tuple[int, int]]:
        """Character range of each word, indexed by word_id."""
        ranges: list[list[int]] = [[-1, -1] for _ in range(self.n_words)]
        for tok in self.tokens:
            if tok.is_special:
                continue
            r = ranges[tok.word_id]
            if r[0] < 0:
                r[0] = tok.start
            r[1] = tok.end
        return [(a, b) for a, b in ranges]


class Tokenizer(Protocol):
    """Anything that maps text to offset-carrying tokens with word grouping."""

    def __call__(self, text: str) -> TokenizedText: ...


@dataclass(frozen=True)
class ChunkTokenizer:
    """Whitespace words split into fixed-size character chunks.

    The chunks play the role of subword pieces: every chunk of a word shares
    that word's ``word_id``. One special token is added at each end. Text
    longer than ``max_length`` tokens is cut at the last word that fits.
    """

    chunk_size: int = 4
    max_length: int = 512
    bos: str = "[CLS]"
    eos: str = "[SEP]"

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.max_length < 2:
            raise ValueError("max_length must leave room for the two special tokens")

    def __call__(self, text: str) -> TokenizedText:
        return tokenize_with_offsets(text, self)

    def words(self, text: str) -> list[tuple[int, int]]:
        spans, start = [], None
        for i, ch in enumerate(text):
            if ch.isspace():
                if start is not None:
                    spans.append((start, i))
                    start = None
            elif start is None:
                start = i
        if start is not None:
            spans.append((start, len(text)))
        return spans


def tokenize_with_offsets(text: str, tokenizer: Tokenizer | None = None) -> TokenizedText:
    if tokenizer is None:
        tokenizer = ChunkTokenizer()
    if not isinstance(tokenizer, ChunkTokenizer):
        return tokenizer(text)

    c = tokenizer.chunk_size
    budget = tokenizer.max_length - 2
    body: list[Token] = []
    for wid, (ws, we) in enumerate(tokenizer.words(text)):
        pieces = [(s, min(s + c, we)) for s in range(ws, we, c)]
        if len(body) + len(pieces) > budget:
            break
        body.extend(Token(text[s:e], s, e, wid) for s, e in pieces)
    bos = Token(tokenizer.bos, 0, 0, SPECIAL_WORD_ID, True)
    eos = Token(tokenizer.eos, 0, 0, SPECIAL_WORD_ID, True)
    return TokenizedText(text, (bos, *body, eos))


def project_spans_to_tokens(spans: Sequence[LabeledSpan], tokenized: TokenizedText,
                            labels: Sequence[str]) -> np.ndarray:
    """Mark every non-special token that intersects a span with that span's label."""
    col = {name: k for k, name in enumerate(labels)}
    m = np.zeros((len(tokenized.tokens), len(labels)), dtype=bool)
    n = len(tokenized.source)
    for span in spans:
        if not (0 <= span.start < span.end <= n):
            raise SpanError(f"span ({span.start}, {span.end}) outside text of length {n}")
        if span.technique not in col:
            raise SpanError(f"span label {span.technique!r} not in label list")
        k = col[span.technique]
        for j, tok in enumerate(tokenized.tokens):
            if not tok.is_special and tok.start < span.end and span.start < tok.end:
                m[j, k] = True
    return m


def merge_tokens_to_words(m: np.ndarray, tokenized: TokenizedText) -> np.ndarray:
    """Union of token label sets per word (words x labels)."""
    if m.shape[0] != len(tokenized.tokens):
        raise SpanError(f"label matrix has {m.shape[0]} rows for {len(tokenized.tokens)} tokens")
    w = np.zeros((tokenized.n_words, m.shape[1]), dtype=bool)
    for j, tok in enumerate(tokenized.tokens):
        if not tok.is_special:
            w[tok.word_id] |= m[j].astype(bool)
    return w


def broadcast_words_to_tokens(w: np.ndarray, tokenized: TokenizedText) -> np.ndarray:
    """Give every token its word's label set; special rows stay empty."""
    m = np.zeros((len(tokenized.tokens), w.shape[1]), dtype=bool)
    for j, tok in enumerate(tokenized.tokens):
        if not tok.is_special:
            m[j] = w[tok.word_id]
    return m


def words_to_char_spans(w: np.ndarray, tokenized: TokenizedText, labels: Sequence[str]) -> list[LabeledSpan]:
    """Merge runs of adjacent labelled words into maximal character spans.

    The output is sorted by label index, then start offset.
    """
    ranges = tokenized.word_ranges()
    if w.shape[0] != len(ranges):
        raise SpanError(f"word label matrix has {w.shape[0]} rows for {len(ranges)} words")
    out: list[LabeledSpan] = []
    for k, name in enumerate(labels):
        run_start = None
        for i in range(len(ranges) + 1):
            on = i < len(ranges) and bool(w[i, k])
            if on and run_start is None:
                run_start = i
            elif not on and run_start is not None:
                out.append(LabeledSpan(ranges[run_start][0], ranges[i - 1][1], name))
                run_start = None
    return out


def merge_adjacent_spans(spans: Sequence[LabeledSpan], text: str) -> list[LabeledSpan]:
    """Join same-label spans separated only by whitespace.

    This is the canonical form produced by :func:`words_to_char_spans`, so
    gold spans are normalised with it before round-trip comparisons.
    """
    out: list[LabeledSpan] = []
    for span in sorted(spans, key=lambda s: (s.technique, s.start)):
        prev = out[-1] if out else None
        gap = text[prev.end:span.start] if prev is not None else ""
        if (prev is not None and prev.technique == span.technique and prev.end <= span.start
                and (gap == "" or gap.isspace())):
            out[-1] = LabeledSpan(prev.start, span.end, span.technique)
        else:
            out.append(span)
    return out
