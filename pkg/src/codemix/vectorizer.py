"""Sparse bag-of-n-grams features.

Word n-grams are joined with a single space ("a b"), which cannot collide
with a token since tokens never contain whitespace. Emoji names such as
``red_heart`` therefore stay distinct from the bigram "red heart".
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from codemix.corpus_miner import strip_edges
from codemix.errors import ValidationError
from codemix.fileio import atomic_write

ANALYZERS = ("word", "char")


class SparseVector:
    """Sorted ``(index, value)`` pairs over a fixed dimension."""

    __slots__ = ("indices", "values", "dim")

    def __init__(self, indices, values, dim: int):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self.dim = int(dim)
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValidationError("indices and values must be 1-d and of equal length")
        if len(self.indices):
            if np.any(np.diff(self.indices) <= 0):
                raise ValidationError("sparse indices must be strictly increasing")
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValidationError(f"sparse index out of range for dimension {self.dim}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("sparse values must be finite")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], dim: int) -> SparseVector:
        pairs = sorted(pairs)
        return cls([i for i, _ in pairs], [v for _, v in pairs], dim)

    @classmethod
    def from_dense(cls, dense) -> SparseVector:
        dense = np.asarray(dense, dtype=np.float64)
        idx = np.flatnonzero(dense)
        return cls(idx, dense[idx], len(dense))

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseVector({self.pairs()}, dim={self.dim})"


def stack(vectors: Sequence[SparseVector], dim: int | None = None) -> sp.csr_matrix:
    """Rows of a CSR matrix; every vector must share the dimension."""
    if dim is None:
        if not vectors:
            raise ValidationError("cannot infer dimension of an empty stack")
        dim = vectors[0].dim
    indptr = [0]
    for v in vectors:
        if v.dim != dim:
            raise ValidationError(f"dimension mismatch: expected {dim}, got {v.dim}")
        indptr.append(indptr[-1] + len(v))
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.zeros(0, np.int64)
    data = np.concatenate([v.values for v in vectors]) if vectors else np.zeros(0)
    return sp.csr_matrix((data, indices, np.asarray(indptr)), shape=(len(vectors), dim))


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Whitespace split with edge punctuation stripped; order and duplicates kept."""
    if lowercase:
        text = text.lower()
    return [t for t in (strip_edges(p) for p in text.split()) if t]


def _word_ngrams(tokens: Sequence[str], lo: int, hi: int) -> Iterable[str]:
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            yield " ".join(tokens[i:i + n]) if n > 1 else tokens[i]


def _char_ngrams(tokens: Sequence[str], lo: int, hi: int) -> Iterable[str]:
    # within-token character n-grams, padded with spaces at token edges
    for tok in tokens:
        padded = f" {tok} "
        for n in range(lo, hi + 1):
            for i in range(len(padded) - n + 1):
                yield padded[i:i + n]


@dataclass
class Vocabulary:
    index: dict[str, int] = field(default_factory=dict)
    df: list[int] = field(default_factory=list)
    ngram_range: tuple[int, int] = (1, 2)
    min_df: int = 2
    lowercase: bool = True
    binarize: bool = True
    analyzer: str = "word"

    def __len__(self):
        return len(self.index)

    def ngrams(self, tokens: Sequence[str]) -> Iterable[str]:
        lo, hi = self.ngram_range
        if self.analyzer == "char":
            return _char_ngrams(tokens, lo, hi)
        return _word_ngrams(tokens, lo, hi)

    def terms(self) -> list[str]:
        out = [""] * len(self.index)
        for term, i in self.index.items():
            out[i] = term
        return out

    def transform_text(self, text: str) -> SparseVector:
        return vectorize(tokenize(text, self.lowercase), self, self.binarize)

    def header(self) -> str:
        lo, hi = self.ngram_range
        return (
            f"#vocab ngram_range={lo},{hi} min_df={self.min_df} lowercase={str(self.lowercase).lower()}"
            f" binarize={str(self.binarize).lower()} analyzer={self.analyzer}"
        )

    def save(self, path) -> None:
        """TSV: header line, then ``ngram<TAB>index<TAB>df`` per entry in index order."""
        with atomic_write(path) as f:
            f.write(self.header() + "\n")
            for i, term in enumerate(self.terms()):
                f.write(f"{term}\t{i}\t{self.df[i]}\n")

    @classmethod
    def parse_header(cls, line: str) -> dict:
        if not line.startswith("#vocab"):
            raise ValidationError("missing vocabulary header line")
        fields = dict(part.split("=", 1) for part in line.split()[1:])
        lo, hi = (int(x) for x in fields["ngram_range"].split(","))
        return dict(
            ngram_range=(lo, hi),
            min_df=int(fields["min_df"]),
            lowercase=fields["lowercase"] == "true",
            binarize=fields["binarize"] == "true",
            analyzer=fields.get("analyzer", "word"),
        )

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> Vocabulary:
        params = cls.parse_header(lines[0].rstrip("\n"))
        index, df = {}, []
        for line in lines[1:]:
            line = line.rstrip("\n")
            if not line:
                continue
            term, i, d = line.rsplit("\t", 2)
            if int(i) != len(df):
                raise ValidationError(f"vocabulary indices must be dense and ordered (at {term!r})")
            index[term] = int(i)
            df.append(int(d))
        return cls(index=index, df=df, **params)

    @classmethod
    def load(cls, path) -> Vocabulary:
        with open(path, encoding="utf-8", newline="") as f:
            return cls.from_lines(f.read().split("\n"))


def build_vocab(
    corpus: Sequence[Sequence[str]],
    ngram_range: tuple[int, int] = (1, 2),
    min_df: int = 2,
    lowercase: bool = True,
    binarize: bool = True,
    analyzer: str = "word",
) -> Vocabulary:
    """Collect n-grams occurring in at least ``min_df`` documents.

    Indices follow first occurrence over the corpus scan (unigrams of a
    document before its bigrams), after pruning.
    """
    lo, hi = ngram_range
    if analyzer not in ANALYZERS:
        raise ValidationError(f"analyzer must be one of {ANALYZERS}")
    max_n = 3 if analyzer == "word" else 8
    if not 1 <= lo <= hi <= max_n:
        raise ValidationError(f"ngram_range must satisfy 1 <= lo <= hi <= {max_n}, got {ngram_range}")
    if min_df < 1:
        raise ValidationError(f"min_df must be >= 1, got {min_df}")
    if not corpus:
        raise ValidationError("cannot build a vocabulary from an empty corpus")

    vocab = Vocabulary(ngram_range=(lo, hi), min_df=min_df, lowercase=lowercase,
                       binarize=binarize, analyzer=analyzer)
    df: Counter = Counter()
    order: dict[str, None] = {}
    for tokens in corpus:
        grams = list(vocab.ngrams(tokens))
        for g in grams:
            order.setdefault(g)
        df.update(set(grams))
    for g in order:
        if df[g] >= min_df:
            vocab.index[g] = len(vocab.df)
            vocab.df.append(df[g])
    return vocab


def vectorize(tokens: Sequence[str], vocab: Vocabulary, binarize: bool = True) -> SparseVector:
    counts = Counter(vocab.index[g] for g in vocab.ngrams(tokens) if g in vocab.index)
    idx = sorted(counts)
    vals = [1.0 if binarize else float(counts[i]) for i in idx]
    return SparseVector(idx, vals, len(vocab))
