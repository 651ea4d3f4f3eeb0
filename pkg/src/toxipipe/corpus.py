"""File-based post ingestion, normalization, lexicon matching, and dedup.

This is the offline stand-in for platform API collection: posts arrive as
JSONL archives, get normalized, matched against the expanded lexicon with
whole-token semantics, and deduplicated per (author, normalized text).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import FormatError
from .lexvar import VariantSet


class Source(str, Enum):
    TWITTER = "twitter"
    REDDIT = "reddit"


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    author_id: str
    created_at: datetime
    text: str
    source: Source
    region: str | None = None
    is_repost: bool = False

    @classmethod
    def from_json(cls, obj: dict) -> "PostRecord":
        if not isinstance(obj, dict):
            raise FormatError("record is not a JSON object")
        post_id = obj.get("post_id")
        if not post_id or not isinstance(post_id, str):
            raise FormatError("missing or empty post_id")
        author = obj.get("author_id")
        if not author or not isinstance(author, str):
            raise FormatError(f"missing author_id for post {post_id}")
        created = _parse_timestamp(obj.get("created_at"), post_id)
        try:
            source = Source(obj.get("source", ""))
        except ValueError:
            raise FormatError(
                f"unknown source {obj.get('source')!r} for post {post_id}"
            ) from None
        text = obj.get("text")
        if text is None and source is Source.REDDIT:
            # Reddit archives may carry title/body; join with one newline.
            title, body = obj.get("title"), obj.get("body")
            if title or body:
                text = "\n".join(p for p in (title, body) if p)
        if not text or not isinstance(text, str):
            raise FormatError(f"missing or empty text for post {post_id}")
        region = obj.get("region")
        if region is not None and not isinstance(region, str):
            raise FormatError(f"region must be a string for post {post_id}")
        return cls(
            post_id=post_id,
            author_id=author,
            created_at=created,
            text=text,
            source=source,
            region=region,
            is_repost=bool(obj.get("is_repost", False)),
        )

    def to_json(self) -> dict:
        obj = {
            "post_id": self.post_id,
            "author_id": self.author_id,
            "created_at": self.created_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "text": self.text,
            "source": self.source.value,
        }
        if self.region is not None:
            obj["region"] = self.region
        if self.is_repost:
            obj["is_repost"] = True
        return obj


def _parse_timestamp(value, post_id: str) -> datetime:
    if not isinstance(value, str):
        raise FormatError(f"missing created_at for post {post_id}")
    try:
        parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise FormatError(
            f"unparseable created_at {value!r} for post {post_id}"
        ) from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    parsed = parsed.astimezone(timezone.utc).replace(microsecond=0)
    if parsed < _EPOCH:
        raise FormatError(f"created_at before 1970 for post {post_id}")
    return parsed


@dataclass
class IngestStats:
    lines: int = 0
    parsed: int = 0
    skipped: int = 0
    first_errors: list[str] = field(default_factory=list)

    def record_skip(self, lineno: int, reason: str) -> None:
        self.skipped += 1
        if len(self.first_errors) < 5:
            self.first_errors.append(f"line {lineno}: {reason}")


def read_jsonl(path: str | Path, stats: IngestStats | None = None) -> Iterator[PostRecord]:
    """Stream PostRecords from a JSONL archive.

    Malformed lines are skipped and counted, not fatal — unless they exceed
    half of all non-blank lines, which signals wrong-format input and raises
    at end of stream.
    """
    own_stats = stats if stats is not None else IngestStats()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            own_stats.lines += 1
            try:
                obj = json.loads(line)
                record = PostRecord.from_json(obj)
            except (json.JSONDecodeError, FormatError) as exc:
                own_stats.record_skip(lineno, str(exc))
                continue
            own_stats.parsed += 1
            yield record
    if own_stats.lines and own_stats.skipped * 2 > own_stats.lines:
        raise FormatError(
            f"{own_stats.skipped} of {own_stats.lines} lines malformed in {path}; "
            f"first errors: {own_stats.first_errors}"
        )


# ---------------------------------------------------------------------------
# Normalization

_URL_RE = re.compile(r"https?://\S+|www\.\S+")
_MENTION_RE = re.compile(r"@\w+")
_TM_RE = re.compile("[®™]")  # ® ™
_WS_RE = re.compile(r"\s+")
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)  # maximal alphanumeric runs


def normalize(text: str) -> str:
    """Case-fold and scrub platform noise from a post text."""
    text = _URL_RE.sub("<url>", text)
    text = _MENTION_RE.sub("<user>", text)
    text = _TM_RE.sub("", text)
    text = text.casefold()
    text = _WS_RE.sub(" ", text)
    return text.strip()


def tokenize(normalized: str) -> list[tuple[str, int, int]]:
    """(token, char_start, char_end) for each alphanumeric run."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(normalized)]


# ---------------------------------------------------------------------------
# Matching


@dataclass(frozen=True)
class TermMatch:
    seed: str
    surface: str
    offset: int  # byte offset into the UTF-8 encoding of the normalized text


@dataclass(frozen=True)
class MatchedPost:
    post: PostRecord
    normalized_text: str
    matched_terms: tuple[TermMatch, ...]

    def to_json(self) -> dict:
        obj = self.post.to_json()
        obj["matched_terms"] = [
            {"seed": m.seed, "surface": m.surface, "offset": m.offset}
            for m in self.matched_terms
        ]
        return obj

    def seeds(self) -> set[str]:
        return {m.seed for m in self.matched_terms}


class LexiconMatcher:
    """Whole-token matcher over a seed+variant lexicon.

    Terms are matched case-folded against normalized text; multi-word terms
    match as contiguous token sequences. Seeds themselves always count as
    their own surface forms.
    """

    def __init__(self, terms: Mapping[str, str]):
        """terms: surface form (possibly multi-word) -> lexicon seed."""
        self._single: dict[str, str] = {}
        self._multi: dict[tuple[str, ...], str] = {}
        for surface, seed in terms.items():
            parts = tuple(surface.casefold().split())
            if not parts:
                continue
            if len(parts) == 1:
                self._single[parts[0]] = seed
            else:
                self._multi[parts] = seed
        self._multi_lengths = sorted({len(k) for k in self._multi}, reverse=True)

    @classmethod
    def from_lexicon(cls, lexicon: Mapping[str, VariantSet]) -> "LexiconMatcher":
        terms: dict[str, str] = {}
        for seed, vs in lexicon.items():
            terms[seed] = seed
            for v in vs.variants:
                terms[v.token] = seed
        return cls(terms)

    @classmethod
    def seeds_only(cls, seeds: Iterable[str]) -> "LexiconMatcher":
        return cls({s: s for s in seeds})

    def match(self, normalized: str) -> list[TermMatch]:
        tokens = tokenize(normalized)
        matches: list[TermMatch] = []
        offsets_cache: dict[int, int] = {}

        def byte_offset(char_start: int) -> int:
            if char_start not in offsets_cache:
                offsets_cache[char_start] = len(
                    normalized[:char_start].encode("utf-8")
                )
            return offsets_cache[char_start]

        for i, (token, start, end) in enumerate(tokens):
            seed = self._single.get(token)
            if seed is not None:
                matches.append(TermMatch(seed, normalized[start:end], byte_offset(start)))
            for length in self._multi_lengths:
                if i + length > len(tokens):
                    continue
                window = tuple(t for t, _, _ in tokens[i : i + length])
                seed = self._multi.get(window)
                if seed is not None:
                    span_end = tokens[i + length - 1][2]
                    matches.append(
                        TermMatch(seed, normalized[start:span_end], byte_offset(start))
                    )
        return matches


def match_posts(
    stream: Iterable[PostRecord], matcher: LexiconMatcher
) -> Iterator[MatchedPost]:
    """Emit a MatchedPost for every record containing >= 1 lexicon term."""
    for post in stream:
        normalized = normalize(post.text)
        matches = matcher.match(normalized)
        if matches:
            yield MatchedPost(
                post=post, normalized_text=normalized, matched_terms=tuple(matches)
            )


def dedup(
    stream: Iterable[PostRecord], *, drop_reposts: bool = True
) -> Iterator[PostRecord]:
    """Drop reposts and (author, normalized text) duplicates, keeping order.

    Stateful: must see records in order; memory grows with the number of
    distinct (author, text) pairs.
    """
    seen: set[tuple[str, str]] = set()
    for post in stream:
        if drop_reposts and post.is_repost:
            continue
        key = (post.author_id, normalize(post.text))
        if key in seen:
            continue
        seen.add(key)
        yield post


# ---------------------------------------------------------------------------
# JSONL io for matched posts


def write_posts_jsonl(path: str | Path, posts: Iterable[PostRecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(json.dumps(post.to_json(), sort_keys=True) + "\n")
            count += 1
    return count


def write_matched_jsonl(path: str | Path, matched: Iterable[MatchedPost]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for mp in matched:
            fh.write(json.dumps(mp.to_json(), sort_keys=True) + "\n")
            count += 1
    return count


def read_matched_jsonl(path: str | Path) -> Iterator[MatchedPost]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                post = PostRecord.from_json(obj)
                terms = tuple(
                    TermMatch(t["seed"], t["surface"], int(t["offset"]))
                    for t in obj["matched_terms"]
                )
            except (json.JSONDecodeError, KeyError, TypeError, FormatError) as exc:
                raise FormatError(f"bad matched-post record: {exc}", line=lineno) from None
            yield MatchedPost(
                post=post, normalized_text=normalize(post.text), matched_terms=terms
            )
