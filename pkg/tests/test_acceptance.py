"""Top-level acceptance checks, one test per release criterion.

Each test pins the tolerances and time budgets the package commits to and
verifies implementation output against oracles that were written first and
independently (see oracles.py). Run with -v to get one pass/fail line per
criterion.
"""

import json
import random
import shutil
import subprocess
import sys
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

import oracles
from toxipipe.annotation import LabelClass, cohens_kappa
from toxipipe.classify import (
    FeatureConfig,
    FeatureVector,
    TrainConfig,
    evaluate,
    example_loss_grad,
    featurize,
    fuse,
    predict,
    train,
)
from toxipipe.cohort import (
    BotConfig,
    CohortMember,
    MemberStatus,
    Timeline,
    bot_flags,
    bot_score,
    due_for_recollection,
    member_hash,
    merge_timeline,
)
from toxipipe.corpus import LexiconMatcher, PostRecord, Source, dedup, match_posts
from toxipipe.lexvar import ExpansionConfig, expand_lexicon, expand_term, load_embeddings, retrieval_gain
from toxipipe.signals import chi_square, pearson, permutation_pvalue, spearman
from toxipipe.synthdata import (
    DEMO_SEEDS,
    generate_corpus,
    generate_labeled_dataset,
    write_demo_workspace,
)

FIXTURE_EMBEDDINGS = Path(__file__).resolve().parent.parent / "src" / "toxipipe" / "fixtures" / "toy_embeddings.txt"
UTC = timezone.utc


def post(pid, author, ts, text="hello", region=None):
    return PostRecord(post_id=pid, author_id=author, created_at=ts, text=text,
                      source=Source.TWITTER, region=region)


# ---------------------------------------------------------------------------
# 1. lexicon expansion equals the brute-force oracle


def test_lexicon_expansion_equals_bruteforce_oracle():
    model = load_embeddings(FIXTURE_EMBEDDINGS)
    vectors = [model.vectors[i] for i in range(len(model))]
    combos = [
        ("xanax", ExpansionConfig(0.70, 0.65, 3, 50)),
        ("xanax", ExpansionConfig(0.75, 0.70, 3, 50)),
        ("xanax", ExpansionConfig(0.60, 0.40, 2, 3)),
        ("adderall", ExpansionConfig(0.70, 0.65, 3, 50)),
        ("adderall", ExpansionConfig(0.50, 0.30, 4, 50)),
        ("adderall", ExpansionConfig(0.80, 0.60, 1, 50)),
        ("oxycodone", ExpansionConfig(0.70, 0.65, 3, 50)),
        ("oxycodone", ExpansionConfig(0.65, 0.50, 2, 2)),
        ("percocet", ExpansionConfig(0.70, 0.65, 3, 50)),
        ("zoloft", ExpansionConfig(0.60, 0.30, 3, 50)),
    ]
    started = time.perf_counter()
    for seed, config in combos:
        got = expand_term(seed, model, config)
        want = oracles.expand_bruteforce(
            model.tokens, vectors, seed,
            theta_sem=config.theta_sem, theta_lex=config.theta_lex,
            max_depth=config.max_depth, max_neighbors=config.max_neighbors,
        )
        assert {v.token: v.depth for v in got.variants} == want, (seed, config)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.3f}s, budget 1s"


# ---------------------------------------------------------------------------
# 2. retrieval gain on the planted-variant corpus


def test_planted_variant_corpus_retrieval_gain_exceeds_30pct():
    started = time.perf_counter()
    raw, truth = generate_corpus()
    records = [PostRecord.from_json(obj) for obj in raw]
    unique = list(dedup(iter(records)))
    assert len(unique) == truth.unique_posts

    model = load_embeddings(FIXTURE_EMBEDDINGS)
    lexicon = expand_lexicon(DEMO_SEEDS, model, ExpansionConfig(0.70, 0.65, 3, 50))
    baseline = sum(1 for _ in match_posts(unique, LexiconMatcher.seeds_only(DEMO_SEEDS)))
    expanded = sum(1 for _ in match_posts(unique, LexiconMatcher.from_lexicon(lexicon)))

    assert baseline == truth.baseline_matched
    assert expanded == truth.expanded_matched
    gain = retrieval_gain(baseline, expanded)
    assert gain == truth.retrieval_gain_pct
    assert gain > 30.0
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"took {elapsed:.3f}s, budget 5s"


# ---------------------------------------------------------------------------
# 3. Cohen's kappa reference values


def test_cohens_kappa_reference_values():
    started = time.perf_counter()
    # confusion [[20, 5], [10, 15]]
    a = ["A"] * 25 + ["B"] * 25
    b = ["A"] * 20 + ["B"] * 5 + ["A"] * 10 + ["B"] * 15
    assert abs(cohens_kappa(a, b) - 0.4) < 1e-9

    rng = random.Random(777)
    perfect = [rng.choice("ABCD") for _ in range(500)]
    assert cohens_kappa(perfect, list(perfect)) == 1.0

    n = 10_000
    null_a = [rng.choice("ABCD") for _ in range(n)]
    null_b = [rng.choice("ABCD") for _ in range(n)]
    assert abs(cohens_kappa(null_a, null_b)) < 0.1
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.3f}s, budget 1s"


# ---------------------------------------------------------------------------
# 4. analytic gradients match central finite differences


def test_classifier_gradients_match_finite_differences():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    space = 64
    class_weights = np.array([3.0, 1.0, 1.0, 1.0])
    eps = 1e-5
    for case in range(20):
        nnz = int(rng.integers(2, 7))
        indices = np.sort(rng.choice(space, size=nnz, replace=False)).astype(np.int64)
        fv = FeatureVector(indices=indices,
                           values=rng.uniform(0.1, 2.0, size=nnz))
        weights = rng.normal(0, 1.0, size=(4, space))
        bias = rng.normal(0, 0.5, size=4)
        label = list(LabelClass)[int(rng.integers(0, 4))]

        _, grad_w, grad_b = example_loss_grad(weights, bias, fv, label, class_weights)

        def loss_at(w, b):
            value, _, _ = example_loss_grad(w, b, fv, label, class_weights)
            return value

        for c in range(4):
            for j, col in enumerate(fv.indices):
                up = weights.copy(); up[c, col] += eps
                dn = weights.copy(); dn[c, col] -= eps
                fd = (loss_at(up, bias) - loss_at(dn, bias)) / (2 * eps)
                analytic = grad_w[c, j]
                rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
                assert rel < 1e-4, (case, c, j, analytic, fd)
            up = bias.copy(); up[c] += eps
            dn = bias.copy(); dn[c] -= eps
            fd = (loss_at(weights, up) - loss_at(weights, dn)) / (2 * eps)
            rel = abs(grad_b[c] - fd) / max(abs(grad_b[c]), abs(fd), 1e-6)
            assert rel < 1e-4, (case, c, grad_b[c], fd)
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"took {elapsed:.3f}s, budget 5s"


# ---------------------------------------------------------------------------
# 5. minority-class F1 and seed fusion on the bundled synthetic set


def test_classifier_minority_f1_and_fusion_on_bundled_set():
    started = time.perf_counter()
    dataset = generate_labeled_dataset()
    fc = FeatureConfig(hash_bits=18)
    train_X = [(featurize(ex.text, fc), ex.label) for ex in dataset.train]
    test_feats = [(ex.example_id, featurize(ex.text, fc)) for ex in dataset.test]
    gold = {ex.example_id: ex.label for ex in dataset.test}
    assert len(train_X) == 2000 and len(gold) == 500

    minority_f1 = {}
    per_seed_preds = []
    for seed in (11, 12, 13):
        tc = TrainConfig(epochs=8, learning_rate=0.5, l2=1e-6,
                         class_weights={LabelClass.NONMEDICAL_USE: 3.0}, seed=seed)
        model = train(train_X, tc, fc)
        preds = [predict(model, fv, post_id=pid) for pid, fv in test_feats]
        per_seed_preds.append(preds)
        minority_f1[seed] = evaluate(preds, gold).minority.f1

    for seed, f1 in minority_f1.items():
        assert f1 >= 0.90, f"seed {seed} minority F1 {f1:.4f} below 0.90"

    fused = [
        fuse([preds[i] for preds in per_seed_preds], strategy="mean")
        for i in range(len(test_feats))
    ]
    fused_f1 = evaluate(fused, gold).minority.f1
    assert fused_f1 >= max(minority_f1.values()) - 0.02
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s, budget 60s"


# ---------------------------------------------------------------------------
# 6. correlation statistics match arbitrary-precision oracles


def test_correlations_match_arbitrary_precision_oracles():
    started = time.perf_counter()
    rng = random.Random(31415)
    for _ in range(100):
        n = rng.randint(10, 50)
        x = [rng.uniform(-100, 100) for _ in range(n)]
        y = [rng.uniform(-100, 100) for _ in range(n)]
        assert abs(pearson(x, y) - oracles.pearson_mp(x, y)) < 1e-12
        assert abs(spearman(x, y) - oracles.spearman_mp(x, y)) < 1e-12

    # tie handling: integer-valued vectors force shared average ranks
    for _ in range(25):
        n = rng.randint(5, 30)
        x = [rng.randint(0, 6) for _ in range(n)]
        y = [rng.randint(0, 6) for _ in range(n)]
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert abs(spearman(x, y) - oracles.spearman_mp(x, y)) < 1e-12

    # exhaustive permutation enumeration at n=5 (120 permutations)
    for statistic, impl in (("pearson", pearson), ("spearman", spearman)):
        for _ in range(5):
            x = [rng.uniform(0, 1) for _ in range(5)]
            y = [rng.uniform(0, 1) for _ in range(5)]
            got = permutation_pvalue(x, y, statistic=statistic,
                                     permutations=120, seed=0)
            assert got == float(oracles.exhaustive_perm_pvalue(x, y, impl))
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"took {elapsed:.3f}s, budget 10s"


# ---------------------------------------------------------------------------
# 7. chi-square reference values


def test_chi_square_reference_values():
    stat, df = chi_square([30, 70], [10, 90])
    assert abs(stat - 12.5) < 1e-9
    assert df == 1
    for base, k in (([10, 20, 30], 2), ([7, 7, 7, 7], 3), ([1, 99], 5)):
        stat, _ = chi_square(base, [k * v for v in base])
        assert stat == 0.0


# ---------------------------------------------------------------------------
# 8. cohort laws: merge, recollection boundary, bot flag arithmetic


def test_cohort_merge_laws_recollection_boundary_bot_flags():
    salt = "acceptance-salt"
    t0 = datetime(2024, 3, 1, tzinfo=UTC)
    member = "alice"
    batch = [post(f"p{i:03d}", member, t0 + timedelta(hours=3 * i)) for i in range(30)]
    now = t0 + timedelta(days=30)

    # merge idempotence and commutativity over 1,000 random orders
    rng = random.Random(60601)
    mid = member_hash(member, salt)
    empty = Timeline(member_id=mid, posts=(), last_collected_at=None)
    reference = None
    for trial in range(1000):
        shuffled = batch[:]
        rng.shuffle(shuffled)
        cut_a, cut_b = sorted(rng.sample(range(len(shuffled) + 1), 2))
        parts = [shuffled[:cut_a], shuffled[cut_a:cut_b], shuffled[cut_b:]]
        timeline = empty
        for part in parts:
            timeline = merge_timeline(timeline, part, salt=salt, now=now)
        again = merge_timeline(timeline, shuffled, salt=salt, now=now)
        content = tuple((p.post_id, p.created_at) for p in again.posts)
        if reference is None:
            reference = content
        assert content == reference, f"merge order {trial} diverged"

    # due_for_recollection boundary at exactly 14 days
    admitted = CohortMember(member_id="m1", admitted_at=t0,
                            admitting_post_id="p000", admitting_score=0.9,
                            bot_score=None, status=MemberStatus.ACTIVE)
    timeline = Timeline(member_id="m1", posts=(), last_collected_at=t0)
    timelines = {"m1": timeline}
    at_boundary = t0 + timedelta(days=14)
    just_before = at_boundary - timedelta(seconds=1)
    assert due_for_recollection([admitted], timelines, at_boundary) == [admitted]
    assert due_for_recollection([admitted], timelines, just_before) == []

    # bot flag arithmetic: 0, 0.5, and 1.0 exactly
    config = BotConfig()
    calm = Timeline(member_id="m2", posts=tuple(
        post(f"c{i:02d}", "m2", t0 + timedelta(days=2 * i),
             text=f"ordinary diary entry number {i}")
        for i in range(12)
    ), last_collected_at=None)
    assert bot_score(calm, config) == 0.0

    # 60 posts in one hour at fixed cadence: rate + cadence flags only
    half = Timeline(member_id="m3", posts=tuple(
        post(f"h{i:02d}", "m3", t0 + timedelta(seconds=60 * i),
             text=f"different text every time {i}")
        for i in range(60)
    ), last_collected_at=None)
    flags = bot_flags(half, config)
    assert bot_score(half, config) == 0.5
    assert flags["rate"] and flags["regular_cadence"]
    assert not flags["duplicate_text"] and not flags["url_share"]

    full = Timeline(member_id="m4", posts=tuple(
        post(f"f{i:02d}", "m4", t0 + timedelta(seconds=60 * i),
             text="same spam https://spam.example every time")
        for i in range(60)
    ), last_collected_at=None)
    assert bot_score(full, config) == 1.0


# ---------------------------------------------------------------------------
# 9. end-to-end determinism of the CLI run


@pytest.fixture(scope="module")
def e2e_workspace(tmp_path_factory):
    """Two full CLI runs over one demo workspace; exports captured from both."""
    root = tmp_path_factory.mktemp("e2e")
    write_demo_workspace(root)
    config_path = root / "config.json"

    def run_once() -> dict[str, bytes]:
        proc = subprocess.run(
            [sys.executable, "-m", "toxipipe.cli", "run", "--config", str(config_path)],
            capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        export_dir = root / "out" / "export"
        return {p.name: p.read_bytes() for p in sorted(export_dir.iterdir())}

    started = time.perf_counter()
    first = run_once()
    first_elapsed = time.perf_counter() - started
    shutil.rmtree(root / "out")
    second = run_once()
    return {"root": root, "first": first, "second": second,
            "first_elapsed": first_elapsed}


def test_cli_run_twice_produces_byte_identical_exports(e2e_workspace):
    first, second = e2e_workspace["first"], e2e_workspace["second"]
    assert set(first) == {"stats.csv", "stats.json"}
    assert first == second, "exports differ between identical runs"
    assert e2e_workspace["first_elapsed"] < 120.0, (
        f"demo run took {e2e_workspace['first_elapsed']:.1f}s, budget 120s"
    )
    manifest = json.loads((e2e_workspace["root"] / "out" / "run_manifest.json").read_text())
    assert manifest["failed_stage"] is None
    for stage in manifest["stages"]:
        assert any(v for v in stage["counts"].values()), stage["name"]


# ---------------------------------------------------------------------------
# 10. privacy: no author or member identifiers in exports


def test_exports_contain_no_author_or_member_identifiers(e2e_workspace):
    root = e2e_workspace["root"]
    corpus_authors = {
        json.loads(line)["author_id"]
        for line in (root / "corpus.jsonl").read_text().splitlines() if line.strip()
    }
    snapshot = json.loads((root / "out" / "cohort_snapshot.json").read_text())
    member_ids = {m["member_id"] for m in snapshot["members"]}
    assert corpus_authors and member_ids

    blob = "".join(body.decode("utf-8") for body in e2e_workspace["second"].values())
    leaked_authors = sorted(a for a in corpus_authors if a in blob)
    leaked_members = sorted(m for m in member_ids if m in blob)
    assert leaked_authors == [], f"author ids leaked: {leaked_authors[:5]}"
    assert leaked_members == [], f"member ids leaked: {leaked_members[:5]}"
