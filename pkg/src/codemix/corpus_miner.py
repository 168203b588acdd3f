"""Dictionary-overlap mining of code-mixed tweets.

A tweet is accepted when enough of its tokens appear in a seed dictionary
of code-mixed words and spelling variants. Tokens of accepted tweets that
the dictionary lacks become candidates; a human reviews them offline and
the approved ones are merged back before the next batch is filtered.
"""
from __future__ import annotations

import random
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Sequence

from codemix.errors import ConfigurationError, ValidationError
from codemix.fileio import iter_jsonl, read_token_file


class ScoreMode(str, Enum):
    JACCARD = "jaccard"
    CONTAINMENT = "containment"


@dataclass(frozen=True)
class Tweet:
    id: str
    text: str
    is_retweet: bool = False
    retweet_source_text: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("tweet id must be non-empty")


class OverlapScore(NamedTuple):
    value: float
    mode: ScoreMode


@dataclass(frozen=True)
class CandidateSet:
    tokens: frozenset
    source_batch: int


@dataclass(frozen=True)
class MinerConfig:
    threshold: float = 0.6
    mode: ScoreMode = ScoreMode.CONTAINMENT
    batch_size: int = 10_000
    max_batches: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ScoreMode(self.mode))
        if not 0 < self.threshold <= 1:
            raise ConfigurationError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_batches is not None and self.max_batches < 1:
            raise ConfigurationError(f"max_batches must be >= 1, got {self.max_batches}")


def _is_word_char(ch: str) -> bool:
    # combining marks count as word-internal so Devanagari vowel signs survive
    return ch.isalnum() or unicodedata.category(ch)[0] == "M"


def strip_edges(piece: str) -> str:
    """Drop leading/trailing characters that are neither alphanumeric nor combining marks."""
    start, end = 0, len(piece)
    while start < end and not _is_word_char(piece[start]):
        start += 1
    while end > start and not _is_word_char(piece[end - 1]):
        end -= 1
    return piece[start:end]


def normalize_token(piece: str) -> str:
    return strip_edges(piece.lower())


def token_set(text: str) -> set[str]:
    """Whitespace-split, edge-stripped, lowercased, de-duplicated tokens."""
    tokens = {strip_edges(p) for p in text.lower().split()}
    tokens.discard("")
    return tokens


@dataclass(frozen=True)
class SeedDictionary:
    entries: frozenset = field(default_factory=frozenset)
    version: int = 0

    def __post_init__(self):
        entries = frozenset(self.entries)
        bad = sorted(t for t in entries if not t or normalize_token(t) != t or any(c.isspace() for c in t))
        if bad:
            raise ValidationError(f"dictionary entries are not normalized: {bad[:20]}")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, token):
        return token in self.entries

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], version: int = 0) -> SeedDictionary:
        """Build from raw tokens, normalizing each and dropping ones that normalize to nothing."""
        entries = {normalize_token(t) for t in tokens}
        entries = {t for t in entries if t and not any(c.isspace() for c in t)}
        return cls(frozenset(entries), version)

    @classmethod
    def load(cls, path, version: int = 0) -> SeedDictionary:
        return cls.from_tokens(read_token_file(path), version)


def _entries(dictionary) -> frozenset | set:
    entries = dictionary.entries if isinstance(dictionary, SeedDictionary) else dictionary
    if not entries:
        raise ConfigurationError("seed dictionary is empty")
    return entries


def overlap_score(tokens: set[str], dictionary, mode=ScoreMode.CONTAINMENT) -> OverlapScore:
    """Overlap between a tweet's token set and the dictionary.

    ``jaccard`` is |T & D| / |T | D|; ``containment`` is |T & D| / |T|,
    which stays meaningful when the dictionary is much larger than a tweet.
    An empty token set scores 0 in both modes.
    """
    mode = ScoreMode(mode)
    entries = _entries(dictionary)
    if not tokens:
        return OverlapScore(0.0, mode)
    if len(tokens) <= len(entries):
        inter = sum(1 for t in tokens if t in entries)
    else:
        inter = sum(1 for t in entries if t in tokens)
    if mode is ScoreMode.JACCARD:
        value = inter / (len(tokens) + len(entries) - inter)
    else:
        value = inter / len(tokens)
    return OverlapScore(value, mode)


def score_tweets(tweets: Sequence[Tweet], dictionary, mode=ScoreMode.CONTAINMENT) -> list[float]:
    entries = _entries(dictionary)
    return [overlap_score(token_set(t.text), entries, mode).value for t in tweets]


def partition_by_score(tweets: Sequence[Tweet], scores: Sequence[float], threshold: float):
    accepted, rejected = [], []
    for tweet, score in zip(tweets, scores):
        (accepted if score > threshold else rejected).append(tweet)
    return accepted, rejected


def filter_batch(tweets: Sequence[Tweet], dictionary, config: MinerConfig | None = None):
    """Split ``tweets`` into ``(accepted, rejected)``, preserving input order.

    A tweet is accepted only when its score is strictly above the threshold.
    """
    config = config or MinerConfig()
    scores = score_tweets(tweets, dictionary, config.mode)
    return partition_by_score(tweets, scores, config.threshold)


def extract_candidates(accepted: Iterable[Tweet], dictionary, batch_index: int) -> CandidateSet:
    entries = _entries(dictionary)
    found = set()
    for tweet in accepted:
        found.update(token_set(tweet.text))
    return CandidateSet(frozenset(found - entries), batch_index)


def merge_reviewed(dictionary: SeedDictionary, accepted_candidates: Iterable[str]) -> SeedDictionary:
    """Return a new dictionary with the reviewed tokens added and the version bumped."""
    accepted_candidates = set(accepted_candidates)
    bad = sorted(
        t for t in accepted_candidates if not t or normalize_token(t) != t or any(c.isspace() for c in t)
    )
    if bad:
        raise ValidationError(f"accept-list contains non-normalized tokens: {bad}")
    return SeedDictionary(dictionary.entries | accepted_candidates, dictionary.version + 1)


def iter_batches(tweets: Iterable[Tweet], batch_size: int, max_batches: int | None = None) -> Iterator[list[Tweet]]:
    batch = []
    emitted = 0
    for tweet in tweets:
        if max_batches is not None and emitted >= max_batches:
            return
        batch.append(tweet)
        if len(batch) == batch_size:
            yield batch
            emitted += 1
            batch = []
    if batch and (max_batches is None or emitted < max_batches):
        yield batch


def score_histogram(scores: Iterable[float], width: float = 0.05) -> list[int]:
    """Counts per ``width``-wide bucket over [0, 1]; 1.0 falls in the last bucket."""
    n = round(1 / width)
    counts = [0] * n
    for s in scores:
        counts[min(int(s * n + 1e-9), n - 1)] += 1
    return counts


def sample_tweets(tweets: Sequence[Tweet], n: int, seed: int = 13) -> list[Tweet]:
    """Random sample (without replacement) for manual purity labelling."""
    if n >= len(tweets):
        return list(tweets)
    idx = sorted(random.Random(seed).sample(range(len(tweets)), n))
    return [tweets[i] for i in idx]


def tweet_from_record(rec: dict, fallback_id: str) -> Tweet:
    text = rec.get("text")
    if text is None:
        text = rec.get("full_text", "")
    source = rec.get("retweeted_text")
    status = rec.get("retweeted_status")
    if source is None and isinstance(status, dict):
        source = status.get("full_text", status.get("text"))
    tid = rec.get("id", rec.get("id_str"))
    return Tweet(
        id=str(tid) if tid not in (None, "") else fallback_id,
        text=str(text),
        is_retweet=source is not None,
        retweet_source_text=source,
    )


def read_corpus(path, fmt: str = "jsonl") -> Iterator[Tweet]:
    """Stream tweets from JSON-lines or plain text (one tweet per line, ids = line numbers)."""
    if fmt == "jsonl":
        for lineno, rec in iter_jsonl(path):
            yield tweet_from_record(rec, str(lineno))
    elif fmt == "text":
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                yield Tweet(id=str(lineno), text=line.rstrip("\r\n"))
    else:
        raise ConfigurationError(f"unknown corpus format {fmt!r}")


def tweet_to_record(tweet: Tweet) -> dict:
    rec = {"id": tweet.id, "text": tweet.text}
    if tweet.retweet_source_text is not None:
        rec["retweeted_text"] = tweet.retweet_source_text
    return rec
