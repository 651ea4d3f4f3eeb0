"""Surveillance signals over classified posts.

Region-level nonmedical-use rates, correlation against reference metric
tables (Pearson and Spearman with permutation significance), lexicon-based
emotion profiles, and chi-square group comparison. Significance comes from
permutation tests throughout: exact at these data sizes and free of any
special-function dependencies. Chi-square statistics are computed in exact
rational arithmetic so proportional tables yield exactly zero.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .annotation import LabelClass
from .corpus import PostRecord, normalize, tokenize
from .errors import ContractError, DomainError, FormatError

EMOTION_CATEGORIES = ("anger", "anticipation", "disgust", "fear", "joy",
                      "sadness", "surprise", "trust")


# ---------------------------------------------------------------------------
# Correlation primitives


def _check_pair(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise ContractError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise ContractError(f"need n >= 3, got {len(x)}")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation, summed with fsum for stability."""
    _check_pair(x, y)
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise DomainError("correlation undefined for a constant vector")
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks starting at 1; tied values share the average of their ranks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    _check_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


_STATISTICS: dict[str, Callable[[Sequence[float], Sequence[float]], float]] = {
    "pearson": pearson,
    "spearman": spearman,
}


def permutation_pvalue(x: Sequence[float], y: Sequence[float], *,
                       statistic: str = "pearson", permutations: int = 9999,
                       seed: int = 0) -> float:
    """Two-sided permutation p-value for the chosen correlation statistic.

    Shuffles y against a fixed x. When the full permutation group is no
    larger than the requested count, every permutation is enumerated once
    and p is the exact tail proportion (the identity permutation plays the
    add-one role); otherwise p = (1 + #{|s| >= |observed|}) / (count + 1)
    over seeded random shuffles.
    """
    if statistic not in _STATISTICS:
        raise ContractError(f"unknown statistic {statistic!r}")
    if permutations < 100:
        raise ContractError(f"need >= 100 permutations, got {permutations}")
    stat = _STATISTICS[statistic]
    observed = abs(stat(x, y))

    n = len(x)
    if math.factorial(n) <= permutations:
        hits = sum(
            abs(stat(x, perm)) >= observed
            for perm in itertools.permutations(y)
        )
        return hits / math.factorial(n)

    rng = random.Random(seed)
    shuffled = list(y)
    hits = 0
    for _ in range(permutations):
        rng.shuffle(shuffled)
        if abs(stat(x, shuffled)) >= observed:
            hits += 1
    return (1 + hits) / (permutations + 1)


# ---------------------------------------------------------------------------
# Chi-square group comparison


def chi_square(counts_a: Sequence[int], counts_b: Sequence[int]
               ) -> tuple[float, int]:
    """Pearson chi-square over a 2xK table of nonnegative integer counts.

    Categories empty in both groups are dropped first; df = K - 1 after the
    drop. Computed in exact rational arithmetic, so exactly proportional
    groups give exactly 0.0.
    """
    if len(counts_a) != len(counts_b):
        raise ContractError("category count mismatch")
    if any(c < 0 for c in counts_a) or any(c < 0 for c in counts_b):
        raise ContractError("negative counts")
    pairs = [(a, b) for a, b in zip(counts_a, counts_b) if a + b > 0]
    if not pairs:
        raise DomainError("all-zero contingency table")
    total_a = sum(a for a, _ in pairs)
    total_b = sum(b for _, b in pairs)
    if total_a == 0 or total_b == 0:
        raise DomainError("one group has no hits")
    grand = total_a + total_b
    stat = Fraction(0)
    for a, b in pairs:
        col = a + b
        for obs, row in ((a, total_a), (b, total_b)):
            expected = Fraction(row * col, grand)
            stat += (obs - expected) ** 2 / expected
    return float(stat), len(pairs) - 1


def _chi2_float(counts_a: Sequence[int], counts_b: Sequence[int]) -> float:
    total_a = sum(counts_a)
    total_b = sum(counts_b)
    grand = total_a + total_b
    stat = 0.0
    for a, b in zip(counts_a, counts_b):
        col = a + b
        if col == 0:
            continue
        for obs, row in ((a, total_a), (b, total_b)):
            expected = row * col / grand
            stat += (obs - expected) ** 2 / expected
    return stat


@dataclass(frozen=True)
class GroupComparison:
    statistic: float
    df: int
    p_value: float
    permutations: int

    def to_json(self) -> dict:
        return {"statistic": self.statistic, "df": self.df,
                "p_value": self.p_value, "permutations": self.permutations}


def compare_groups(counts_a: Mapping[str, int], counts_b: Mapping[str, int], *,
                   permutations: int = 9999, seed: int = 0) -> GroupComparison:
    """Chi-square with a hit-level permutation p-value.

    Both inputs map the same category list to hit counts. The null shuffles
    individual hits between the two groups, preserving group sizes.
    """
    if set(counts_a) != set(counts_b):
        raise ContractError("mismatched category sets")
    if permutations < 100:
        raise ContractError(f"need >= 100 permutations, got {permutations}")
    cats = sorted(counts_a)
    a = [int(counts_a[c]) for c in cats]
    b = [int(counts_b[c]) for c in cats]
    statistic, df = chi_square(a, b)

    observed = _chi2_float(a, b)
    hits_pool = []
    for i, (ca, cb) in enumerate(zip(a, b)):
        hits_pool.extend([i] * (ca + cb))
    n_a = sum(a)
    rng = random.Random(seed)
    extreme = 0
    k = len(cats)
    for _ in range(permutations):
        rng.shuffle(hits_pool)
        pa = [0] * k
        for cat in hits_pool[:n_a]:
            pa[cat] += 1
        pb = [a_i + b_i - p for a_i, b_i, p in zip(a, b, pa)]
        if _chi2_float(pa, pb) >= observed:
            extreme += 1
    p = (1 + extreme) / (permutations + 1)
    return GroupComparison(statistic=statistic, df=df, p_value=p,
                           permutations=permutations)


# ---------------------------------------------------------------------------
# Region rates


@dataclass(frozen=True)
class RegionRate:
    nm_posts: int
    total_matched: int
    rate: float
    low_support: bool

    def to_json(self) -> dict:
        return {"nm_posts": self.nm_posts, "total_matched": self.total_matched,
                "rate": self.rate, "low_support": self.low_support}


@dataclass
class RegionRateReport:
    rows: dict[str, RegionRate]
    regionless: int
    empty_regions: list[str]
    min_support: int

    def to_json(self) -> dict:
        return {
            "rows": {r: self.rows[r].to_json() for r in sorted(self.rows)},
            "regionless": self.regionless,
            "empty_regions": sorted(self.empty_regions),
            "min_support": self.min_support,
        }


def region_rates(labeled_posts: Iterable[tuple[PostRecord, LabelClass]], *,
                 min_support: int = 30,
                 known_regions: Iterable[str] | None = None) -> RegionRateReport:
    """Per-region share of matched posts labeled nonmedical use.

    Posts without a region code are counted separately and excluded from
    every rate. Regions listed in known_regions but absent from the posts
    appear under empty_regions.
    """
    totals: dict[str, int] = {}
    nm: dict[str, int] = {}
    regionless = 0
    for post, label in labeled_posts:
        if post.region is None:
            regionless += 1
            continue
        totals[post.region] = totals.get(post.region, 0) + 1
        if label is LabelClass.NONMEDICAL_USE:
            nm[post.region] = nm.get(post.region, 0) + 1
    rows = {
        region: RegionRate(
            nm_posts=nm.get(region, 0),
            total_matched=count,
            rate=nm.get(region, 0) / count,
            low_support=count < min_support,
        )
        for region, count in totals.items()
    }
    empty = sorted(set(known_regions or ()) - set(rows))
    return RegionRateReport(rows=rows, regionless=regionless,
                            empty_regions=empty, min_support=min_support)


# ---------------------------------------------------------------------------
# Metric tables


@dataclass(frozen=True)
class RegionMetricTable:
    name: str
    rows: dict[str, float]
    units: str = ""

    def __post_init__(self) -> None:
        for region, value in self.rows.items():
            if not math.isfinite(value):
                raise ContractError(f"non-finite metric for region {region}")

    def to_json(self) -> dict:
        return {"name": self.name, "units": self.units,
                "rows": {r: self.rows[r] for r in sorted(self.rows)}}


def read_metric_csv(path: str | Path) -> RegionMetricTable:
    """CSV with header ``region,<metric name>`` and one row per region."""
    rows: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        parts = header.split(",")
        if len(parts) != 2 or parts[0].strip().lower() != "region":
            raise FormatError(f"bad metric table header: {header!r}", line=1)
        name = parts[1].strip()
        if not name:
            raise FormatError("metric name missing from header", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise FormatError(f"expected 2 cells: {line!r}", line=lineno)
            region = cells[0].strip()
            if region in rows:
                raise FormatError(f"duplicate region {region!r}", line=lineno)
            try:
                value = float(cells[1])
            except ValueError:
                raise FormatError(
                    f"bad metric value {cells[1]!r}", line=lineno) from None
            if not math.isfinite(value):
                raise FormatError(f"non-finite metric value", line=lineno)
            rows[region] = value
    if not rows:
        raise FormatError(f"metric table {path} has no rows")
    return RegionMetricTable(name=name, rows=rows)


def _sha256_json(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode("utf-8")
    ).hexdigest()


@dataclass
class CorrelationReport:
    n: int
    metric_name: str
    pearson_r: float
    spearman_rho: float
    p_pearson: float
    p_spearman: float
    permutations: int
    seed: int
    dropped: list[tuple[str, str]]
    input_hashes: dict[str, str]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "metric_name": self.metric_name,
            "pearson_r": self.pearson_r,
            "spearman_rho": self.spearman_rho,
            "p_pearson": self.p_pearson,
            "p_spearman": self.p_spearman,
            "permutations": self.permutations,
            "seed": self.seed,
            "dropped": [{"region": r, "reason": why} for r, why in self.dropped],
            "input_hashes": self.input_hashes,
        }


def correlate_report(rates: RegionRateReport, table: RegionMetricTable, *,
                     permutations: int = 9999, seed: int = 0,
                     keep_low_support: bool = False) -> CorrelationReport:
    """Correlate per-region rates against a reference metric table."""
    dropped: list[tuple[str, str]] = []
    usable: list[str] = []
    for region in sorted(set(rates.rows) | set(table.rows)):
        if region not in rates.rows:
            dropped.append((region, "no matched posts"))
        elif region not in table.rows:
            dropped.append((region, "missing from metric table"))
        elif rates.rows[region].low_support and not keep_low_support:
            dropped.append((region, "low support"))
        else:
            usable.append(region)
    if len(usable) < 3:
        raise DomainError(
            f"need >= 3 overlapping regions, have {len(usable)}"
        )
    xs = [table.rows[r] for r in usable]
    ys = [rates.rows[r].rate for r in usable]
    return CorrelationReport(
        n=len(usable),
        metric_name=table.name,
        pearson_r=pearson(xs, ys),
        spearman_rho=spearman(xs, ys),
        p_pearson=permutation_pvalue(xs, ys, statistic="pearson",
                                     permutations=permutations, seed=seed),
        p_spearman=permutation_pvalue(xs, ys, statistic="spearman",
                                      permutations=permutations, seed=seed),
        permutations=permutations,
        seed=seed,
        dropped=dropped,
        input_hashes={
            "rates": _sha256_json(rates.to_json()),
            "table": _sha256_json(table.to_json()),
        },
    )


# ---------------------------------------------------------------------------
# Emotion profiles


@dataclass(frozen=True)
class EmotionLexicon:
    entries: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        for token, cats in self.entries.items():
            bad = cats - set(EMOTION_CATEGORIES)
            if bad:
                raise ContractError(
                    f"unknown emotion categories {sorted(bad)} for {token!r}"
                )

    def __len__(self) -> int:
        return len(self.entries)


def load_emotion_lexicon(path: str | Path) -> EmotionLexicon:
    """TSV rows ``token<TAB>category[,category...]``; repeats union."""
    entries: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"expected 2 tab-separated fields: {line!r}",
                                  line=lineno)
            token = parts[0].strip().casefold()
            cats = {c.strip() for c in parts[1].split(",") if c.strip()}
            if not token or not cats:
                raise FormatError(f"empty token or categories: {line!r}",
                                  line=lineno)
            unknown = cats - set(EMOTION_CATEGORIES)
            if unknown:
                raise FormatError(
                    f"unknown categories {sorted(unknown)}", line=lineno)
            entries.setdefault(token, set()).update(cats)
    return EmotionLexicon(
        entries={t: frozenset(c) for t, c in entries.items()}
    )


@dataclass
class EmotionProfile:
    counts: dict[str, int]
    total_hits: int
    distribution: dict[str, float]
    zero_total: bool
    n_posts: int

    def to_json(self) -> dict:
        return {
            "counts": {c: self.counts[c] for c in EMOTION_CATEGORIES},
            "total_hits": self.total_hits,
            "distribution": {c: self.distribution[c] for c in EMOTION_CATEGORIES},
            "zero_total": self.zero_total,
            "n_posts": self.n_posts,
        }


def emotion_profile(texts: Iterable[str], lexicon: EmotionLexicon
                    ) -> EmotionProfile:
    """Category hit counts over normalized tokens; one hit per category per
    token occurrence."""
    if not len(lexicon):
        raise ContractError("empty emotion lexicon")
    counts = {c: 0 for c in EMOTION_CATEGORIES}
    n_posts = 0
    for text in texts:
        n_posts += 1
        for token, _, _ in tokenize(normalize(text)):
            for cat in lexicon.entries.get(token, ()):
                counts[cat] += 1
    total = sum(counts.values())
    if total == 0:
        distribution = {c: 0.0 for c in EMOTION_CATEGORIES}
    else:
        distribution = {c: counts[c] / total for c in EMOTION_CATEGORIES}
    return EmotionProfile(counts=counts, total_hits=total,
                          distribution=distribution, zero_total=total == 0,
                          n_posts=n_posts)


@dataclass(frozen=True)
class DistributionComparison:
    pearson_r: float | None
    max_abs_diff: float
    note: str = ""

    def to_json(self) -> dict:
        return {"pearson_r": self.pearson_r, "max_abs_diff": self.max_abs_diff,
                "note": self.note}


def distribution_compare(estimated: Mapping[str, float],
                         reference: Mapping[str, float]) -> DistributionComparison:
    """Compare two category distributions over the same category set."""
    if set(estimated) != set(reference):
        raise ContractError("mismatched category sets")
    for name, dist in (("estimated", estimated), ("reference", reference)):
        total = math.fsum(dist.values())
        if abs(total - 1.0) > 1e-6:
            raise ContractError(f"{name} distribution sums to {total}")
    cats = sorted(estimated)
    diffs = max(abs(estimated[c] - reference[c]) for c in cats)
    if len(cats) < 3:
        return DistributionComparison(
            pearson_r=None, max_abs_diff=diffs,
            note="pearson requires >= 3 categories")
    return DistributionComparison(
        pearson_r=pearson([estimated[c] for c in cats],
                          [reference[c] for c in cats]),
        max_abs_diff=diffs,
    )
