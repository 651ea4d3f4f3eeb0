"""Independent brute-force oracles used to freeze expected test values.

Everything here is deliberately written against the contracts, not the
implementations under test: full-matrix dynamic programming for edit
distance, exhaustive cosine scans for expansion, arbitrary-precision
arithmetic (mpmath / Fraction) for correlation and softmax.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import mpmath

mpmath.mp.dps = 50


def levenshtein_matrix(a: str, b: str) -> int:
    """Edit distance via the full (len(a)+1) x (len(b)+1) DP matrix."""
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[n][m]


def cosine_exact(u, v) -> float:
    num = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    return max(-1.0, min(1.0, num / (nu * nv)))


def expand_bruteforce(tokens, vectors, seed, *, theta_sem, theta_lex, max_depth,
                      max_neighbors):
    """Reference expansion: exhaustive cosine scan + DP edit distance.

    Mirrors the documented recursion contract (breadth-first, candidates are
    each frontier term's top-k cosine neighbors with lexicographic
    tie-break, lexical similarity measured against the seed, case-folded
    identity, depth limited) using only primitives defined in this file.
    Returns {token: depth}.
    """
    vec = {t: v for t, v in zip(tokens, vectors)}
    if seed not in vec:
        return {}
    seed_cf = seed.casefold()

    def neighbors(term):
        scored = []
        for t in tokens:
            if t == term:
                continue
            if math.fsum(x * x for x in vec[t]) == 0.0:
                continue
            scored.append((t, cosine_exact(vec[term], vec[t])))
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:max_neighbors]

    accepted: dict[str, int] = {}
    out: dict[str, int] = {}
    frontier = [seed]
    depth = 0
    while frontier and depth < max_depth:
        depth += 1
        nxt = []
        for term in frontier:
            for cand, cos in neighbors(term):
                cand_cf = cand.casefold()
                if cand_cf == seed_cf or cand_cf in accepted:
                    continue
                if cos < theta_sem:
                    continue
                longest = max(len(cand_cf), len(seed_cf))
                lexsim = 1.0 - levenshtein_matrix(cand_cf, seed_cf) / longest
                if lexsim < theta_lex:
                    continue
                accepted[cand_cf] = depth
                out[cand] = depth
                nxt.append(cand)
        frontier = nxt
    return out


def pearson_mp(x, y) -> float:
    """Pearson r computed at 50 decimal digits, rounded to float at the end."""
    n = len(x)
    xs = [mpmath.mpf(repr(float(v))) for v in x]
    ys = [mpmath.mpf(repr(float(v))) for v in y]
    mx = mpmath.fsum(xs) / n
    my = mpmath.fsum(ys) / n
    sxy = mpmath.fsum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = mpmath.fsum((a - mx) ** 2 for a in xs)
    syy = mpmath.fsum((b - my) ** 2 for b in ys)
    return float(sxy / mpmath.sqrt(sxx * syy))


def average_ranks_bruteforce(values) -> list[Fraction]:
    """1-based ranks with exact-average tie handling, by direct definition:

    rank(v) = (number of elements strictly below v) + (1 + ties) / 2.
    """
    ranks = []
    for v in values:
        below = sum(1 for w in values if w < v)
        ties = sum(1 for w in values if w == v)
        ranks.append(Fraction(2 * below + 1 + ties, 2))
    return ranks


def spearman_mp(x, y) -> float:
    rx = [float(r) for r in average_ranks_bruteforce(list(x))]
    ry = [float(r) for r in average_ranks_bruteforce(list(y))]
    return pearson_mp(rx, ry)


def exhaustive_perm_pvalue(x, y, statistic) -> Fraction:
    """Exact permutation p-value: enumerate all n! reorderings of y."""
    obs = abs(statistic(x, y))
    hits = 0
    total = 0
    for perm in itertools.permutations(y):
        total += 1
        if abs(statistic(x, list(perm))) >= obs:
            hits += 1
    return Fraction(hits, total)


def softmax_mp(logits) -> list[float]:
    exps = [mpmath.e ** mpmath.mpf(repr(float(z))) for z in logits]
    total = mpmath.fsum(exps)
    return [float(e / total) for e in exps]


def chi_square_2xk(row_a, row_b) -> float:
    """Pearson chi-square of a 2xK table via exact Fractions."""
    cols = [Fraction(a + b) for a, b in zip(row_a, row_b)]
    total = sum(cols) or Fraction(0)
    ra, rb = Fraction(sum(row_a)), Fraction(sum(row_b))
    stat = Fraction(0)
    for j, col in enumerate(cols):
        if col == 0:
            continue
        for row_total, obs in ((ra, row_a[j]), (rb, row_b[j])):
            expected = row_total * col / total
            stat += (obs - expected) ** 2 / expected
    return float(stat)
