"""Tweet cleaning shared by training and inference.

The pipeline order is fixed: URLs, then mentions, then hashtags, then
emoji, then whitespace. Links go first so that ``@`` and ``#`` inside
URLs are never rewritten. Case is preserved here; lowercasing belongs to
the vectorizer.
"""
from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Iterable, Mapping, Sequence

from codemix.corpus_miner import Tweet
from codemix.errors import ConfigurationError, ValidationError

URL_RE = re.compile(r"(?:https?://|t\.co/)\S*", re.IGNORECASE)
_SPACES_RE = re.compile(r" {2,}")
_NAME_RE = re.compile(r"[a-z0-9_]+")

# @handle / #tag: a leading space is inserted only when glued to a preceding
# character, so "#a#b" becomes "hashtag a hashtag b"
_MENTION_GLUED = re.compile(r"(?<=\S)@(?=[A-Za-z0-9_])")
_MENTION_FREE = re.compile(r"(?<!\S)@(?=[A-Za-z0-9_])")
_HASHTAG_GLUED = re.compile(r"(?<=\S)#(?=\w)")
_HASHTAG_FREE = re.compile(r"(?<!\S)#(?=\w)")


@dataclass(frozen=True)
class CleanConfig:
    strip_urls: bool = True
    mention_token: str = "mention"
    hashtag_token: str = "hashtag"
    emoji_delimiter: str = " "

    def __post_init__(self):
        for name in ("mention_token", "hashtag_token"):
            tok = getattr(self, name)
            if not tok or any(c.isspace() for c in tok):
                raise ConfigurationError(f"{name} must be non-empty and whitespace-free, got {tok!r}")


def _char_class(chars) -> str:
    # contiguous code points collapsed into ranges; a flat class of ~1.5k
    # astral characters makes re.search an order of magnitude slower
    points = sorted(ord(c) for c in chars)
    parts = []
    start = prev = points[0]
    for p in points[1:] + [None]:
        if p is not None and p == prev + 1:
            prev = p
            continue
        lo, hi = re.escape(chr(start)), re.escape(chr(prev))
        parts.append(lo if start == prev else f"{lo}-{hi}")
        if p is not None:
            start = prev = p
    return "[" + "".join(parts) + "]"


class EmojiMap:
    """Emoji sequence -> ascii name, matched longest-first at each position."""

    def __init__(self, mapping: Mapping[str, str]):
        for emoji, name in mapping.items():
            if not emoji:
                raise ValidationError("emoji map contains an empty key")
            if not _NAME_RE.fullmatch(name):
                raise ValidationError(f"emoji name {name!r} must match [a-z0-9_]+")
        self._names = dict(mapping)
        by_first: dict[str, list[str]] = {}
        for emoji in self._names:
            by_first.setdefault(emoji[0], []).append(emoji)
        for keys in by_first.values():
            keys.sort(key=len, reverse=True)
        self._by_first = by_first
        self._first_re = re.compile(_char_class(by_first)) if by_first else None

    def __len__(self):
        return len(self._names)

    def __getitem__(self, emoji):
        return self._names[emoji]

    def __contains__(self, emoji):
        return emoji in self._names

    def items(self):
        return self._names.items()

    def extended(self, extra: Mapping[str, str]) -> EmojiMap:
        return EmojiMap({**self._names, **extra})

    def replace(self, text: str, delimiter: str = " ") -> str:
        if self._first_re is None:
            return text
        out = []
        pos = 0
        search_from = 0
        while True:
            m = self._first_re.search(text, search_from)
            if m is None:
                break
            i = m.start()
            for key in self._by_first[text[i]]:
                if text.startswith(key, i):
                    out.append(text[pos:i])
                    out.append(delimiter + self._names[key] + delimiter)
                    pos = search_from = i + len(key)
                    break
            else:
                search_from = i + 1
        if not out:
            return text
        out.append(text[pos:])
        return "".join(out)


def read_emoji_tsv(lines: Iterable[str], source: str = "<emoji map>") -> dict[str, str]:
    mapping = {}
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"{source}:{lineno}: expected 'emoji<TAB>name'")
        mapping[parts[0]] = parts[1].strip()
    return mapping


@functools.lru_cache(maxsize=None)
def default_emoji_map() -> EmojiMap:
    text = resources.files("codemix").joinpath("data/emoji_map.tsv").read_text(encoding="utf-8")
    return EmojiMap(read_emoji_tsv(text.splitlines(), "emoji_map.tsv"))


def load_emoji_map(path=None, extend_default: bool = True) -> EmojiMap:
    """Load a user TSV; by default it extends (and overrides) the shipped table."""
    if path is None:
        return default_emoji_map()
    with open(path, encoding="utf-8") as f:
        mapping = read_emoji_tsv(f, str(path))
    return default_emoji_map().extended(mapping) if extend_default else EmojiMap(mapping)


def dedup(tweets: Sequence[Tweet], key: Callable[[str], str] | None = None) -> list[Tweet]:
    """Keep the first tweet per exact text; drop tweets repeating an already-seen retweet source.

    ``key`` optionally maps texts before comparison (the CLI compares cleaned text).
    """
    key = key or (lambda s: s)
    seen: set[str] = set()
    kept = []
    for tweet in tweets:
        k = key(tweet.text)
        if k in seen:
            continue
        kept.append(tweet)
        seen.add(k)
        if tweet.retweet_source_text is not None:
            seen.add(key(tweet.retweet_source_text))
    return kept


def strip_urls(text: str) -> str:
    text = URL_RE.sub("", text)
    return _SPACES_RE.sub(" ", text).strip()


def replace_mentions(text: str, config: CleanConfig | None = None) -> str:
    token = (config or CleanConfig()).mention_token
    text = _MENTION_GLUED.sub(" " + token + " ", text)
    return _MENTION_FREE.sub(token + " ", text)


def replace_hashtags(text: str, config: CleanConfig | None = None) -> str:
    token = (config or CleanConfig()).hashtag_token
    text = _HASHTAG_GLUED.sub(" " + token + " ", text)
    return _HASHTAG_FREE.sub(token + " ", text)


def demojize(text: str, emoji_map: EmojiMap | None = None, config: CleanConfig | None = None) -> str:
    emoji_map = default_emoji_map() if emoji_map is None else emoji_map
    return emoji_map.replace(text, (config or CleanConfig()).emoji_delimiter)


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


def clean(text: str, emoji_map: EmojiMap | None = None, config: CleanConfig | None = None) -> str:
    config = config or CleanConfig()
    if config.strip_urls:
        text = strip_urls(text)
    text = replace_mentions(text, config)
    text = replace_hashtags(text, config)
    text = demojize(text, emoji_map, config)
    return normalize_whitespace(text)
