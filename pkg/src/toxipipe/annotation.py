"""Human labeling workflow: 4-class scheme, agreement metrics, task leasing.

The store is a single logical writer: label submissions and task handout
serialize through one lock, which is what makes concurrent annotators safe.
Kappa computations read a consistent snapshot taken under that lock.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import PostRecord
from .errors import ContractError, DomainError


class LabelClass(Enum):
    # Declaration order is the tie-break order used across the pipeline.
    NONMEDICAL_USE = "nonmedical_use"
    CONSUMPTION = "consumption"
    MENTION = "mention"
    UNRELATED = "unrelated"

    @classmethod
    def parse(cls, value: str) -> "LabelClass":
        try:
            return cls(value)
        except ValueError:
            raise ContractError(f"unknown label class: {value!r}") from None


LABEL_ORDER = tuple(LabelClass)


@dataclass(frozen=True)
class AnnotationRecord:
    post_id: str
    annotator_id: str
    label: LabelClass
    labeled_at: datetime


class GoldStatus(str, Enum):
    RESOLVED = "resolved"
    NEEDS_ADJUDICATION = "needs_adjudication"


@dataclass(frozen=True)
class GoldLabel:
    post_id: str
    label: LabelClass | None
    status: GoldStatus


# ---------------------------------------------------------------------------
# Agreement


def cohens_kappa(labels_a: Sequence, labels_b: Sequence) -> float:
    """Chance-corrected agreement between two aligned label sequences."""
    if len(labels_a) != len(labels_b):
        raise ContractError(
            f"label sequences differ in length: {len(labels_a)} vs {len(labels_b)}"
        )
    n = len(labels_a)
    if n < 2:
        raise ContractError("kappa requires >= 2 aligned labels")
    agree = sum(1 for a, b in zip(labels_a, labels_b) if a == b)
    p_o = agree / n
    classes = set(labels_a) | set(labels_b)
    p_e = 0.0
    for c in classes:
        ma = sum(1 for a in labels_a if a == c) / n
        mb = sum(1 for b in labels_b if b == c) / n
        p_e += ma * mb
    if p_e >= 1.0:
        if p_o == 1.0:
            return 1.0  # both annotators constant on the same class
        raise DomainError("expected agreement is 1 but observed agreement is not")
    return (p_o - p_e) / (1.0 - p_e)


@dataclass
class AgreementReport:
    average: float
    pairs: dict[tuple[str, str], tuple[float, int]]  # (a, b) -> (kappa, shared)
    excluded_pairs: list[tuple[str, str, int]]  # below the shared-post threshold

    def to_json(self) -> dict:
        return {
            "average": self.average,
            "pairs": [
                {"annotators": list(key), "kappa": kappa, "shared_posts": shared}
                for key, (kappa, shared) in sorted(self.pairs.items())
            ],
            "excluded_pairs": [
                {"annotators": [a, b], "shared_posts": shared}
                for a, b, shared in self.excluded_pairs
            ],
        }


def agreement_report(
    records: Iterable[AnnotationRecord], *, min_shared: int = 2
) -> AgreementReport:
    """Pairwise kappa over all annotator pairs with >= min_shared posts."""
    by_annotator: dict[str, dict[str, LabelClass]] = {}
    for rec in records:
        by_annotator.setdefault(rec.annotator_id, {})[rec.post_id] = rec.label

    pairs: dict[tuple[str, str], tuple[float, int]] = {}
    excluded: list[tuple[str, str, int]] = []
    for a, b in combinations(sorted(by_annotator), 2):
        shared = sorted(set(by_annotator[a]) & set(by_annotator[b]))
        if len(shared) < min_shared:
            excluded.append((a, b, len(shared)))
            continue
        kappa = cohens_kappa(
            [by_annotator[a][p] for p in shared],
            [by_annotator[b][p] for p in shared],
        )
        pairs[(a, b)] = (kappa, len(shared))

    if not pairs:
        raise DomainError("no annotator pair shares enough labeled posts")
    average = sum(k for k, _ in pairs.values()) / len(pairs)
    return AgreementReport(average=average, pairs=pairs, excluded_pairs=excluded)


def pairwise_average_kappa(records: Iterable[AnnotationRecord]) -> float:
    return agreement_report(records).average


def adjudicate(
    records: Sequence[AnnotationRecord], *, min_annotators: int = 1
) -> GoldLabel:
    """Resolve one post's records by strict majority; ties go to humans."""
    if not records:
        raise ContractError("adjudicate requires >= 1 record")
    post_ids = {r.post_id for r in records}
    if len(post_ids) != 1:
        raise ContractError(f"records span multiple posts: {sorted(post_ids)}")
    post_id = records[0].post_id
    if len(records) < min_annotators:
        return GoldLabel(post_id, None, GoldStatus.NEEDS_ADJUDICATION)
    counts: dict[LabelClass, int] = {}
    for r in records:
        counts[r.label] = counts.get(r.label, 0) + 1
    best = max(counts.values())
    winners = [label for label, c in counts.items() if c == best]
    if len(winners) == 1 and 2 * best > len(records):
        return GoldLabel(post_id, winners[0], GoldStatus.RESOLVED)
    return GoldLabel(post_id, None, GoldStatus.NEEDS_ADJUDICATION)


# ---------------------------------------------------------------------------
# Store


@dataclass
class _Lease:
    annotator_id: str
    expires_at: datetime


@dataclass
class _Task:
    post: PostRecord
    labels: dict[str, AnnotationRecord] = field(default_factory=dict)


class AnnotationStore:
    """Task queue plus label storage backing the annotator UI."""

    def __init__(
        self,
        *,
        target_annotations: int = 2,
        lease_seconds: int = 600,
        open_enrollment: bool = True,
        min_annotators: int = 2,
        guideline: str = "",
    ):
        self.target_annotations = target_annotations
        self.lease_seconds = lease_seconds
        self.open_enrollment = open_enrollment
        self.min_annotators = min_annotators
        self.guideline = guideline
        self._tasks: dict[str, _Task] = {}
        self._order: list[str] = []  # post ids sorted by (created_at, post_id)
        self._annotators: set[str] = set()
        self._leases: dict[str, _Lease] = {}
        self._lock = threading.Lock()

    # -- setup

    def load_tasks(self, posts: Iterable[PostRecord]) -> int:
        with self._lock:
            for post in posts:
                if post.post_id not in self._tasks:
                    self._tasks[post.post_id] = _Task(post=post)
            self._order = sorted(
                self._tasks, key=lambda pid: (self._tasks[pid].post.created_at, pid)
            )
            return len(self._tasks)

    def register_annotator(self, annotator_id: str) -> None:
        with self._lock:
            self._annotators.add(annotator_id)

    def _check_annotator(self, annotator_id: str) -> None:
        if annotator_id in self._annotators:
            return
        if not self.open_enrollment:
            raise ContractError(f"unknown annotator: {annotator_id!r}")
        self._annotators.add(annotator_id)

    # -- task handout

    def next_task(self, annotator_id: str, now: datetime | None = None) -> PostRecord | None:
        now = now or datetime.now(timezone.utc)
        with self._lock:
            self._check_annotator(annotator_id)
            self._expire_leases(now)
            for post_id in self._order:
                task = self._tasks[post_id]
                if annotator_id in task.labels:
                    continue
                if len(task.labels) >= self.target_annotations:
                    continue
                if post_id in self._leases:
                    continue  # leased to anyone, including this annotator
                self._leases[post_id] = _Lease(
                    annotator_id, now + timedelta(seconds=self.lease_seconds)
                )
                return task.post
            return None

    def _expire_leases(self, now: datetime) -> None:
        expired = [pid for pid, lease in self._leases.items() if lease.expires_at <= now]
        for pid in expired:
            del self._leases[pid]

    # -- labels

    def submit_label(
        self,
        post_id: str,
        annotator_id: str,
        label: LabelClass,
        now: datetime | None = None,
    ) -> AnnotationRecord:
        now = now or datetime.now(timezone.utc)
        with self._lock:
            self._check_annotator(annotator_id)
            task = self._tasks.get(post_id)
            if task is None:
                raise KeyError(post_id)
            record = AnnotationRecord(post_id, annotator_id, label, now)
            task.labels[annotator_id] = record  # resubmission overwrites
            lease = self._leases.get(post_id)
            if lease and lease.annotator_id == annotator_id:
                del self._leases[post_id]
            return record

    def records(self) -> list[AnnotationRecord]:
        with self._lock:
            out = []
            for pid in self._order:
                task = self._tasks[pid]
                for annotator in sorted(task.labels):
                    out.append(task.labels[annotator])
            return out

    def records_for(self, annotator_id: str) -> list[AnnotationRecord]:
        return [r for r in self.records() if r.annotator_id == annotator_id]

    def gold_labels(self) -> list[GoldLabel]:
        with self._lock:
            out = []
            for pid in self._order:
                labels = list(self._tasks[pid].labels.values())
                if labels:
                    out.append(adjudicate(labels, min_annotators=self.min_annotators))
            return out

    def agreement(self) -> AgreementReport:
        return agreement_report(self.records())

    def progress(self) -> dict:
        with self._lock:
            labeled = sum(
                1
                for t in self._tasks.values()
                if len(t.labels) >= self.target_annotations
            )
            return {
                "tasks": len(self._tasks),
                "fully_labeled": labeled,
                "labels": sum(len(t.labels) for t in self._tasks.values()),
                "annotators": len(self._annotators),
            }

    # -- persistence (CSV; see README for the schemas)

    def export_labels_csv(self, path: str | Path) -> int:
        rows = self.records()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["post_id", "annotator_id", "label", "labeled_at"])
            for r in rows:
                writer.writerow(
                    [
                        r.post_id,
                        r.annotator_id,
                        r.label.value,
                        r.labeled_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
                    ]
                )
        return len(rows)

    def load_labels_csv(self, path: str | Path) -> int:
        count = 0
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                when = datetime.fromisoformat(
                    row["labeled_at"].replace("Z", "+00:00")
                )
                if row["post_id"] not in self._tasks:
                    continue  # labels for posts outside the loaded task set
                self.register_annotator(row["annotator_id"])
                self.submit_label(
                    row["post_id"],
                    row["annotator_id"],
                    LabelClass.parse(row["label"]),
                    now=when,
                )
                count += 1
        return count

    def export_gold_csv(self, path: str | Path) -> int:
        golds = self.gold_labels()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["post_id", "label", "status"])
            for g in golds:
                writer.writerow(
                    [g.post_id, g.label.value if g.label else "", g.status.value]
                )
        return len(golds)
