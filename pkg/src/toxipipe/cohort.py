"""Longitudinal cohort: admission, recollection scheduling, bot filtering.

Authors are admitted when a post of theirs is scored as nonmedical use; from
then on the pipeline keeps a timeline per member and re-collects it on a
fixed cadence. Raw author handles never touch disk: members are keyed by a
salted hash, and timeline posts are stored with the hash in place of the
author id.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import statistics
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .annotation import LabelClass
from .classify import Prediction
from .corpus import PostRecord, normalize
from .errors import ContractError, FormatError

RECOLLECT_SECONDS = 14 * 86400
STORE_FORMAT_VERSION = 1

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_iso(value: str) -> datetime:
    parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def member_hash(author_id: str, salt: str) -> str:
    if not author_id:
        raise ContractError("empty author_id")
    digest = hashlib.sha256()
    digest.update(salt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(author_id.encode("utf-8"))
    return digest.hexdigest()


class MemberStatus(str, Enum):
    ACTIVE = "active"
    EXCLUDED_BOT = "excluded_bot"
    EXCLUDED_MANUAL = "excluded_manual"


@dataclass
class CohortMember:
    member_id: str
    admitted_at: datetime
    admitting_post_id: str
    admitting_score: float
    bot_score: float | None = None
    status: MemberStatus = MemberStatus.ACTIVE

    def to_json(self) -> dict:
        return {
            "member_id": self.member_id,
            "admitted_at": _iso(self.admitted_at),
            "admitting_post_id": self.admitting_post_id,
            "admitting_score": self.admitting_score,
            "bot_score": self.bot_score,
            "status": self.status.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CohortMember":
        return cls(
            member_id=obj["member_id"],
            admitted_at=_parse_iso(obj["admitted_at"]),
            admitting_post_id=obj["admitting_post_id"],
            admitting_score=float(obj["admitting_score"]),
            bot_score=None if obj.get("bot_score") is None else float(obj["bot_score"]),
            status=MemberStatus(obj["status"]),
        )


@dataclass(frozen=True)
class Timeline:
    member_id: str
    posts: tuple[PostRecord, ...]
    last_collected_at: datetime | None = None

    def __post_init__(self) -> None:
        keys = [(p.created_at, p.post_id) for p in self.posts]
        if keys != sorted(keys):
            raise ContractError("timeline posts out of order")
        ids = [p.post_id for p in self.posts]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate post_id in timeline")

    def to_json(self) -> dict:
        return {
            "member_id": self.member_id,
            "last_collected_at": (
                None if self.last_collected_at is None
                else _iso(self.last_collected_at)
            ),
            "posts": [p.to_json() for p in self.posts],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Timeline":
        last = obj.get("last_collected_at")
        return cls(
            member_id=obj["member_id"],
            posts=tuple(PostRecord.from_json(p) for p in obj["posts"]),
            last_collected_at=None if last is None else _parse_iso(last),
        )


@dataclass(frozen=True)
class AdmissionPolicy:
    mode: str = "argmax"
    threshold: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("argmax", "threshold"):
            raise ContractError(f"unknown admission mode {self.mode!r}")
        if self.mode == "threshold":
            if self.threshold is None or not 0.0 <= self.threshold <= 1.0:
                raise ContractError(f"threshold out of range: {self.threshold}")

    def admits(self, prediction: Prediction) -> bool:
        if self.mode == "argmax":
            return prediction.argmax is LabelClass.NONMEDICAL_USE
        return prediction.scores[LabelClass.NONMEDICAL_USE] >= self.threshold


def merge_timeline(existing: Timeline, new_posts: Iterable[PostRecord], *,
                   salt: str, now: datetime) -> Timeline:
    """Union the timeline with freshly collected posts.

    Posts keep their identity by post_id; on conflict the already-stored
    record wins. Incoming posts must belong to the timeline's member, either
    as a raw author id that hashes to member_id or already carrying the
    member hash. Stored copies carry the hash.
    """
    by_id = {p.post_id: p for p in existing.posts}
    max_ts = max((p.created_at for p in existing.posts), default=_EPOCH)
    for post in new_posts:
        if post.author_id != existing.member_id and \
                member_hash(post.author_id, salt) != existing.member_id:
            raise ContractError(
                f"post {post.post_id} does not belong to member "
                f"{existing.member_id[:12]}"
            )
        if post.post_id not in by_id:
            by_id[post.post_id] = dataclasses.replace(
                post, author_id=existing.member_id
            )
        max_ts = max(max_ts, post.created_at)
    merged = tuple(sorted(by_id.values(), key=lambda p: (p.created_at, p.post_id)))
    last = max(now, max_ts, existing.last_collected_at or _EPOCH)
    return Timeline(member_id=existing.member_id, posts=merged,
                    last_collected_at=last)


def due_for_recollection(members: Iterable[CohortMember],
                         timelines: dict[str, Timeline], now: datetime,
                         interval_seconds: float = RECOLLECT_SECONDS
                         ) -> list[CohortMember]:
    """Active members whose last collection is at least one interval old.

    Members never collected are always due and sort first; then ascending by
    last_collected_at, member_id breaking ties.
    """
    due = []
    for member in members:
        if member.status is not MemberStatus.ACTIVE:
            continue
        timeline = timelines.get(member.member_id)
        last = timeline.last_collected_at if timeline else None
        if last is None or (now - last).total_seconds() >= interval_seconds:
            due.append((last is not None, last or _EPOCH, member.member_id, member))
    return [entry[3] for entry in sorted(due, key=lambda e: e[:3])]


# ---------------------------------------------------------------------------
# Bot scoring


@dataclass(frozen=True)
class BotConfig:
    min_posts: int = 10
    max_rate_per_day: float = 50.0
    dup_ratio: float = 0.5
    url_ratio: float = 0.8
    cv_threshold: float = 0.1
    min_gaps: int = 20


FLAG_NAMES = ("rate", "duplicate_text", "url_share", "regular_cadence")


def bot_flags(timeline: Timeline, config: BotConfig = BotConfig()
              ) -> dict[str, bool] | None:
    """The four binary bot indicators, or None below the post minimum."""
    posts = timeline.posts
    n = len(posts)
    if n < config.min_posts:
        return None

    span_days = (posts[-1].created_at - posts[0].created_at).total_seconds() / 86400.0
    # a burst with zero span is the extreme of a high rate, not a free pass
    rate_flag = span_days == 0.0 or n / span_days > config.max_rate_per_day

    seen: set[str] = set()
    dups = 0
    urls = 0
    for post in posts:
        norm = normalize(post.text)
        if norm in seen:
            dups += 1
        seen.add(norm)
        if "<url>" in norm:
            urls += 1
    dup_flag = dups / n > config.dup_ratio
    url_flag = urls / n > config.url_ratio

    gaps = [
        (b.created_at - a.created_at).total_seconds()
        for a, b in zip(posts, posts[1:])
    ]
    cadence_flag = False
    if len(gaps) >= config.min_gaps:
        mean = statistics.fmean(gaps)
        if mean == 0:
            cadence_flag = True
        else:
            cv = statistics.pstdev(gaps) / mean
            cadence_flag = cv < config.cv_threshold

    return {
        "rate": rate_flag,
        "duplicate_text": dup_flag,
        "url_share": url_flag,
        "regular_cadence": cadence_flag,
    }


def bot_score(timeline: Timeline, config: BotConfig = BotConfig()) -> float | None:
    flags = bot_flags(timeline, config)
    if flags is None:
        return None
    return sum(flags.values()) / len(flags)


@dataclass
class BotReport:
    scored: int
    skipped: int
    excluded: list[tuple[str, float, dict[str, bool]]]

    def to_json(self) -> dict:
        return {
            "scored": self.scored,
            "skipped": self.skipped,
            "excluded": [
                {"member_id": m, "bot_score": s, "flags": f}
                for m, s, f in self.excluded
            ],
        }


# ---------------------------------------------------------------------------
# Store


class CohortStore:
    """Single-writer cohort state with an append-only event log.

    Events are JSONL ({"event": ..., ...}); a snapshot file carries the
    compacted state. Raw author ids exist only in the in-process map used to
    detect hash collisions; they are never written out.
    """

    def __init__(self, salt: str, event_log: str | Path | None = None):
        if not salt:
            raise ContractError("cohort salt must be non-empty")
        self.salt = salt
        self.members: dict[str, CohortMember] = {}
        self.timelines: dict[str, Timeline] = {}
        self._hash_owner: dict[str, str] = {}
        self._log_path = Path(event_log) if event_log else None
        self._log_fh = None
        if self._log_path:
            self._log_fh = open(self._log_path, "a", encoding="utf-8")

    # -- events

    def _emit(self, event: dict) -> None:
        if self._log_fh:
            self._log_fh.write(json.dumps(event, sort_keys=True) + "\n")
            self._log_fh.flush()

    def close(self) -> None:
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    def __enter__(self) -> "CohortStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- admission

    def _check_collision(self, member_id: str, author_id: str) -> None:
        owner = self._hash_owner.setdefault(member_id, author_id)
        if owner != author_id:
            raise ContractError(
                f"member hash collision on {member_id[:12]}; refusing to continue"
            )

    def admit(self, prediction: Prediction, post: PostRecord,
              policy: AdmissionPolicy = AdmissionPolicy()) -> CohortMember | None:
        """Admit the post's author if the prediction qualifies.

        Re-qualifying posts for known members only upgrade the admitting
        evidence when they score higher.
        """
        if not policy.admits(prediction):
            return None
        score = prediction.scores[LabelClass.NONMEDICAL_USE]
        member_id = member_hash(post.author_id, self.salt)
        self._check_collision(member_id, post.author_id)
        existing = self.members.get(member_id)
        if existing is not None:
            if score > existing.admitting_score:
                existing.admitting_post_id = post.post_id
                existing.admitting_score = score
                self._emit({"event": "evidence", "member_id": member_id,
                            "post_id": post.post_id, "score": score})
            return existing
        member = CohortMember(
            member_id=member_id,
            admitted_at=post.created_at,
            admitting_post_id=post.post_id,
            admitting_score=score,
        )
        self.members[member_id] = member
        self._emit({"event": "admit", **member.to_json()})
        return member

    # -- timelines

    def merge(self, member_id: str, posts: Sequence[PostRecord],
              now: datetime) -> Timeline:
        if member_id not in self.members:
            raise ContractError(f"unknown member {member_id[:12]}")
        existing = self.timelines.get(
            member_id, Timeline(member_id=member_id, posts=())
        )
        merged = merge_timeline(existing, posts, salt=self.salt, now=now)
        self.timelines[member_id] = merged
        self._emit({
            "event": "merge",
            "member_id": member_id,
            "n_posts": len(merged.posts),
            "last_collected_at": _iso(merged.last_collected_at),
        })
        return merged

    def due(self, now: datetime,
            interval_seconds: float = RECOLLECT_SECONDS) -> list[CohortMember]:
        return due_for_recollection(
            self.members.values(), self.timelines, now, interval_seconds
        )

    # -- bot filtering

    def filter_bots(self, threshold: float,
                    config: BotConfig = BotConfig()) -> BotReport:
        """Score active members and exclude those at or above the threshold.

        Thresholds above 1.0 are allowed and exclude nobody; re-running with
        the same threshold is a no-op for already-excluded members.
        """
        scored = skipped = 0
        excluded: list[tuple[str, float, dict[str, bool]]] = []
        for member_id in sorted(self.members):
            member = self.members[member_id]
            if member.status is not MemberStatus.ACTIVE:
                continue
            timeline = self.timelines.get(member_id)
            flags = bot_flags(timeline, config) if timeline else None
            if flags is None:
                skipped += 1
                continue
            scored += 1
            score = sum(flags.values()) / len(flags)
            member.bot_score = score
            if score >= threshold:
                member.status = MemberStatus.EXCLUDED_BOT
                excluded.append((member_id, score, flags))
                self._emit({"event": "exclude", "member_id": member_id,
                            "bot_score": score, "flags": flags})
        return BotReport(scored=scored, skipped=skipped, excluded=excluded)

    def exclude_manual(self, member_id: str) -> None:
        member = self.members[member_id]
        member.status = MemberStatus.EXCLUDED_MANUAL
        self._emit({"event": "exclude_manual", "member_id": member_id})

    def readmit(self, member_id: str) -> None:
        """Manual override reversing any exclusion."""
        member = self.members[member_id]
        member.status = MemberStatus.ACTIVE
        self._emit({"event": "readmit", "member_id": member_id})

    # -- aggregate view (identifier-free by design)

    def summary(self) -> dict:
        states = {s.value: 0 for s in MemberStatus}
        for member in self.members.values():
            states[member.status.value] += 1
        post_counts = [len(t.posts) for t in self.timelines.values()]
        return {
            "members": len(self.members),
            "by_status": states,
            "timelines": len(self.timelines),
            "timeline_posts": sum(post_counts),
            "max_timeline_posts": max(post_counts, default=0),
        }

    # -- persistence

    def save_snapshot(self, path: str | Path) -> None:
        payload = {
            "format_version": STORE_FORMAT_VERSION,
            "members": [self.members[m].to_json() for m in sorted(self.members)],
            "timelines": [
                self.timelines[m].to_json() for m in sorted(self.timelines)
            ],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load_snapshot(cls, path: str | Path, salt: str,
                      event_log: str | Path | None = None) -> "CohortStore":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad cohort snapshot {path}: {exc}") from None
        if payload.get("format_version") != STORE_FORMAT_VERSION:
            raise FormatError(
                f"unsupported cohort snapshot version in {path}"
            )
        store = cls(salt, event_log=event_log)
        for obj in payload["members"]:
            member = CohortMember.from_json(obj)
            store.members[member.member_id] = member
        for obj in payload["timelines"]:
            timeline = Timeline.from_json(obj)
            store.timelines[timeline.member_id] = timeline
        return store
