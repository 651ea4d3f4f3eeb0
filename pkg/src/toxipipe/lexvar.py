"""Lexical-variant generation for medication names.

Variants (misspellings, spacing changes) are found by a breadth-first
recursion over an embedding vocabulary: a candidate is accepted when it is
semantically close to the term that reached it (cosine) and orthographically
close to the original seed (normalized edit distance). Accepted variants are
re-expanded until the frontier empties or the depth limit is hit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DomainError, FormatError


# ---------------------------------------------------------------------------
# Embeddings


@dataclass(frozen=True)
class EmbeddingModel:
    """Immutable token -> vector table. Safe to share across threads."""

    tokens: tuple[str, ...]
    vectors: np.ndarray  # shape (V, dimension), float64
    duplicate_count: int = 0
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def vector(self, token: str) -> np.ndarray:
        try:
            return self.vectors[self._index[token]]
        except KeyError:
            raise KeyError(f"token not in vocabulary: {token!r}") from None


def load_embeddings(path: str | Path) -> EmbeddingModel:
    """Load a text embedding file: one `token v1 .. vD` record per line.

    An optional first line `vocab_size dimension` (two integers) is treated
    as a header and skipped. Duplicate tokens keep the first occurrence and
    are tallied in ``duplicate_count``.
    """
    path = Path(path)
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    index: dict[str, int] = {}
    duplicates = 0
    dimension: int | None = None

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and _all_ints(parts):
                continue  # header
            token, values = parts[0], parts[1:]
            if dimension is None:
                if not values:
                    raise FormatError("record has no vector values", line=lineno)
                dimension = len(values)
            elif len(values) != dimension:
                raise FormatError(
                    f"expected {dimension} values, got {len(values)}", line=lineno
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"non-numeric value: {exc}", line=lineno) from None
            if token in index:
                duplicates += 1
                continue
            index[token] = len(tokens)
            tokens.append(token)
            rows.append(vec)

    if not tokens:
        raise FormatError(f"no embedding records in {path}")
    model = EmbeddingModel(
        tokens=tuple(tokens),
        vectors=np.vstack(rows),
        duplicate_count=duplicates,
        _index=index,
    )
    return model


def _all_ints(parts: Sequence[str]) -> bool:
    try:
        for p in parts:
            int(p)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# Similarity measures


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]. Zero-norm input is a DomainError."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ContractError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine undefined for zero-norm vector")
    value = float(np.dot(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, value))


def levenshtein(a: str, b: str) -> int:
    """Minimum number of single-character edits transforming a into b."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def lexical_similarity(a: str, b: str) -> float:
    """1 - levenshtein(a, b) / max(len(a), len(b)), in [0, 1]."""
    longest = max(len(a), len(b))
    if longest == 0:
        raise DomainError("lexical similarity undefined for two empty strings")
    return 1.0 - levenshtein(a, b) / longest


# ---------------------------------------------------------------------------
# Expansion


@dataclass(frozen=True)
class ExpansionConfig:
    """Thresholds and limits for the recursive expansion.

    Defaults only seed experimentation; tests and pipeline configs always
    pin explicit values.
    """

    theta_sem: float = 0.70
    theta_lex: float = 0.65
    max_depth: int = 3
    max_neighbors: int = 50
    max_altered_tokens: int = 1  # multi-word recombination cap

    def __post_init__(self) -> None:
        if not -1.0 <= self.theta_sem <= 1.0:
            raise ContractError(f"theta_sem must be in [-1, 1], got {self.theta_sem}")
        if not 0.0 <= self.theta_lex <= 1.0:
            raise ContractError(f"theta_lex must be in [0, 1], got {self.theta_lex}")
        if self.max_depth < 0:
            raise ContractError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.max_neighbors < 1:
            raise ContractError(f"max_neighbors must be >= 1, got {self.max_neighbors}")
        if self.max_altered_tokens < 0:
            raise ContractError(
                f"max_altered_tokens must be >= 0, got {self.max_altered_tokens}"
            )


@dataclass(frozen=True, order=True)
class Variant:
    token: str
    cosine_to_parent: float
    lexical_similarity_to_seed: float
    depth: int


@dataclass(frozen=True)
class VariantSet:
    """Accepted variants for one seed. ``variants`` is sorted by token."""

    seed: str
    variants: tuple[Variant, ...] = ()
    in_vocabulary: bool = True

    def tokens(self) -> set[str]:
        return {v.token for v in self.variants}

    def __len__(self) -> int:
        return len(self.variants)


def top_neighbors(
    model: EmbeddingModel, term: str, k: int
) -> list[tuple[str, float]]:
    """The k vocabulary tokens most cosine-similar to ``term``.

    The term itself is excluded; zero-norm candidates are skipped (they can
    never pass a similarity threshold). Ties break by lexicographic token
    order so expansion is deterministic.
    """
    query = model.vector(term)
    qn = float(np.linalg.norm(query))
    if qn == 0.0:
        raise DomainError(f"zero-norm vector for term {term!r}")
    norms = np.linalg.norm(model.vectors, axis=1)
    scored: list[tuple[str, float]] = []
    dots = model.vectors @ query
    for i, token in enumerate(model.tokens):
        if token == term or norms[i] == 0.0:
            continue
        value = float(dots[i]) / (qn * float(norms[i]))
        scored.append((token, max(-1.0, min(1.0, value))))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def expand_term(
    seed: str, model: EmbeddingModel, config: ExpansionConfig
) -> VariantSet:
    """Breadth-first variant expansion of a single seed token.

    Candidates come from each frontier term's top ``max_neighbors`` by
    cosine; acceptance requires cosine >= theta_sem to the parent and
    lexical similarity >= theta_lex to the *seed* (keeping variants
    orthographically tethered to the medication name). Comparison is
    case-folded; the seed's casing is canonical in the output.
    """
    if seed not in model:
        return VariantSet(seed=seed, variants=(), in_vocabulary=False)

    seed_cf = seed.casefold()
    accepted: dict[str, Variant] = {}
    frontier: list[str] = [seed]
    depth = 0
    while frontier and depth < config.max_depth:
        depth += 1
        next_frontier: list[str] = []
        for term in frontier:
            for candidate, cos in top_neighbors(model, term, config.max_neighbors):
                cand_cf = candidate.casefold()
                if cand_cf == seed_cf or cand_cf in accepted:
                    continue
                if cos < config.theta_sem:
                    continue
                lexsim = lexical_similarity(cand_cf, seed_cf)
                if lexsim < config.theta_lex:
                    continue
                accepted[cand_cf] = Variant(candidate, cos, lexsim, depth)
                next_frontier.append(candidate)
        frontier = next_frontier

    variants = tuple(sorted(accepted.values(), key=lambda v: v.token))
    return VariantSet(seed=seed, variants=variants)


def expand_multiword(
    phrase: Sequence[str], model: EmbeddingModel, config: ExpansionConfig
) -> VariantSet:
    """Expand a multi-token phrase by recombining per-token variants.

    Each token is expanded independently; the result is every recombination
    in which at least one and at most ``max_altered_tokens`` tokens differ
    from the original. A multi-word variant's lexical score is the minimum
    per-token lexical similarity (unchanged tokens count as 1.0); its
    cosine and depth are the minimum cosine and maximum depth over the
    altered tokens.
    """
    phrase = list(phrase)
    if len(phrase) < 2:
        raise ContractError(
            "expand_multiword requires >= 2 tokens; use expand_term for single tokens"
        )

    per_token = [expand_term(tok, model, config) for tok in phrase]
    in_vocab = all(vs.in_vocabulary for vs in per_token)
    seed_phrase = " ".join(phrase)

    # Each slot offers the original token (sentinel) plus its variants.
    slots: list[list[Variant | None]] = [
        [None] + list(vs.variants) for vs in per_token
    ]

    results: dict[str, Variant] = {}

    def recurse(i: int, chosen: list[Variant | None], altered: int) -> None:
        if altered > config.max_altered_tokens:
            return
        if i == len(slots):
            if altered == 0:
                return
            toks = [
                phrase[j] if pick is None else pick.token
                for j, pick in enumerate(chosen)
            ]
            picks = [p for p in chosen if p is not None]
            variant = Variant(
                token=" ".join(toks),
                cosine_to_parent=min(p.cosine_to_parent for p in picks),
                lexical_similarity_to_seed=min(
                    p.lexical_similarity_to_seed for p in picks
                ),
                depth=max(p.depth for p in picks),
            )
            results[variant.token] = variant
            return
        for pick in slots[i]:
            chosen.append(pick)
            recurse(i + 1, chosen, altered + (pick is not None))
            chosen.pop()

    recurse(0, [], 0)
    variants = tuple(sorted(results.values(), key=lambda v: v.token))
    return VariantSet(seed=seed_phrase, variants=variants, in_vocabulary=in_vocab)


def expand_lexicon(
    seeds: Iterable[str], model: EmbeddingModel, config: ExpansionConfig
) -> dict[str, VariantSet]:
    """Expand every seed (single- or multi-token) into its VariantSet."""
    out: dict[str, VariantSet] = {}
    for seed in seeds:
        parts = seed.split()
        if len(parts) > 1:
            out[seed] = expand_multiword(parts, model, config)
        else:
            out[seed] = expand_term(seed, model, config)
    return out


def retrieval_gain(baseline_hits: int, expanded_hits: int) -> float:
    """Percentage gain of expanded retrieval over the seed-only baseline."""
    if baseline_hits < 1:
        raise DomainError("retrieval gain undefined for baseline_hits < 1")
    if expanded_hits < baseline_hits:
        raise ContractError("expanded_hits must be >= baseline_hits")
    return 100.0 * (expanded_hits - baseline_hits) / baseline_hits


# ---------------------------------------------------------------------------
# Lexicon file io (CSV: seed,variant,cosine,lexsim,depth)

LEXICON_FIELDS = ["seed", "variant", "cosine", "lexsim", "depth"]


def write_lexicon_csv(path: str | Path, lexicon: Mapping[str, VariantSet]) -> None:
    """Write seed,variant rows plus a depth-0 marker row per seed.

    The marker row (variant == seed, depth 0) keeps seeds with zero accepted
    variants in the file and carries the in-vocabulary bit in its cosine
    column, so a read-back lexicon matches the original exactly.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LEXICON_FIELDS)
        for seed in sorted(lexicon):
            vs = lexicon[seed]
            in_vocab = "1.000000" if vs.in_vocabulary else "0.000000"
            writer.writerow([seed, seed, in_vocab, "1.000000", 0])
            for v in vs.variants:
                writer.writerow(
                    [
                        seed,
                        v.token,
                        f"{v.cosine_to_parent:.6f}",
                        f"{v.lexical_similarity_to_seed:.6f}",
                        v.depth,
                    ]
                )


def read_lexicon_csv(path: str | Path) -> dict[str, VariantSet]:
    grouped: dict[str, list[Variant]] = {}
    in_vocab: dict[str, bool] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != LEXICON_FIELDS:
            raise FormatError(
                f"unexpected lexicon header {reader.fieldnames!r} in {path}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                seed = row["seed"]
                depth = int(row["depth"])
                if depth == 0:
                    if row["variant"] != seed:
                        raise ValueError("depth-0 row must repeat the seed")
                    grouped.setdefault(seed, [])
                    in_vocab[seed] = float(row["cosine"]) > 0.5
                    continue
                variant = Variant(
                    token=row["variant"],
                    cosine_to_parent=float(row["cosine"]),
                    lexical_similarity_to_seed=float(row["lexsim"]),
                    depth=depth,
                )
            except (TypeError, ValueError) as exc:
                raise FormatError(f"bad lexicon row: {exc}", line=lineno) from None
            grouped.setdefault(seed, []).append(variant)
    return {
        seed: VariantSet(
            seed=seed,
            variants=tuple(sorted(vs, key=lambda v: v.token)),
            in_vocabulary=in_vocab.get(seed, True),
        )
        for seed, vs in grouped.items()
    }
