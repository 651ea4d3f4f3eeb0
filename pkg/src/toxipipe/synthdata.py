"""Deterministic synthetic fixtures: labeled text, a planted corpus, demo files.

Real platform data cannot ship with the package, so the demo pipeline and the
test suite run on generated material. Every generator is seeded and records
its own ground truth (planted match counts, per-region rates, expected bot
flags) so downstream results can be checked against bookkeeping that never
touches the production code paths.
"""

from __future__ import annotations

import json
import math
import random
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .annotation import LabelClass

# Disjoint keyword pools. Class identity is carried by these tokens; filler
# and drug names are shared across classes so they carry no class signal.
NONMEDICAL_WORDS = ("snorted", "railed", "zooted", "faded", "boofed",
                    "blasted", "stacked", "bender")
CONSUMPTION_WORDS = ("prescribed", "dose", "refill", "pharmacy", "doctor",
                     "tapering", "script", "dosage")
MENTION_WORDS = ("article", "study", "lawsuit", "headline", "shortage",
                 "recall", "documentary", "segment")
UNRELATED_WORDS = ("soccer", "weather", "recipe", "concert", "homework",
                   "garden", "sunset", "traffic")
FILLER_WORDS = ("the", "a", "to", "and", "i", "my", "it", "was", "so", "this",
                "today", "really", "just", "still", "about", "then", "week",
                "time", "feel", "got", "like", "with", "for", "on", "at",
                "again", "never", "always", "maybe", "honestly")
DRUG_WORDS = ("xanax", "adderall", "oxycodone", "percocet", "valium", "ativan")

CLASS_WORDS: dict[LabelClass, tuple[str, ...]] = {
    LabelClass.NONMEDICAL_USE: NONMEDICAL_WORDS,
    LabelClass.CONSUMPTION: CONSUMPTION_WORDS,
    LabelClass.MENTION: MENTION_WORDS,
    LabelClass.UNRELATED: UNRELATED_WORDS,
}

DEMO_SEEDS = ("xanax", "adderall", "oxycodone", "percocet")
# Surface forms the default expansion recovers from the toy embeddings.
DEMO_VARIANTS = ("xanaxx", "aderall", "adderal", "oxycodon")

EPOCH_2024 = int(datetime(2024, 1, 1, tzinfo=timezone.utc).timestamp())


def _iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def make_text(rng: random.Random, label: LabelClass, *, extra: str | None = None,
              drug_chance: float = 0.6) -> str:
    """One synthetic post body: class keywords buried in shared filler."""
    n_keywords = rng.randint(3, 4)
    words = list(rng.sample(CLASS_WORDS[label], n_keywords))
    if extra is not None:
        words.append(extra)
    elif label is not LabelClass.UNRELATED and rng.random() < drug_chance:
        words.append(rng.choice(DRUG_WORDS))
    n_filler = rng.randint(6, 10)
    words.extend(rng.choice(FILLER_WORDS) for _ in range(n_filler))
    rng.shuffle(words)
    return " ".join(words)


# ---------------------------------------------------------------------------
# Labeled dataset (classifier fixture)

TRAIN_COUNTS = {
    LabelClass.NONMEDICAL_USE: 200,
    LabelClass.CONSUMPTION: 600,
    LabelClass.MENTION: 600,
    LabelClass.UNRELATED: 600,
}
TEST_COUNTS = {
    LabelClass.NONMEDICAL_USE: 50,
    LabelClass.CONSUMPTION: 150,
    LabelClass.MENTION: 150,
    LabelClass.UNRELATED: 150,
}


@dataclass(frozen=True)
class LabeledExample:
    example_id: str
    text: str
    label: LabelClass


@dataclass(frozen=True)
class LabeledDataset:
    train: tuple[LabeledExample, ...]
    test: tuple[LabeledExample, ...]


def generate_labeled_dataset(seed: int = 20240501) -> LabeledDataset:
    """2,000 train / 500 test posts; nonmedical use held at 10% prevalence."""
    rng = random.Random(seed)
    splits = []
    for split, counts in (("train", TRAIN_COUNTS), ("test", TEST_COUNTS)):
        examples = []
        for label, count in counts.items():
            for _ in range(count):
                examples.append((make_text(rng, label), label))
        rng.shuffle(examples)
        splits.append(tuple(
            LabeledExample(f"{split}{i:04d}", text, label)
            for i, (text, label) in enumerate(examples)
        ))
    return LabeledDataset(train=splits[0], test=splits[1])


def write_labeled_jsonl(examples, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(
                {"id": ex.example_id, "text": ex.text, "label": ex.label.value},
                sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Corpus with planted variants, regions, and bots


@dataclass(frozen=True)
class CorpusTruth:
    """Generator bookkeeping the pipeline's outputs are checked against."""

    n_lines: int
    unique_posts: int
    baseline_matched: int
    expanded_matched: int
    retrieval_gain_pct: float
    seeds: tuple[str, ...]
    variants: tuple[str, ...]
    region_metric: dict[str, float]
    region_matched: dict[str, int]
    region_nm: dict[str, int]
    planted_rates: dict[str, float]
    sample_r: float
    sample_rho: float
    bot_authors: tuple[str, ...]
    bot_expected_scores: dict[str, float]
    labels: dict[str, LabelClass] = field(repr=False)
    author_ids: tuple[str, ...] = field(repr=False)


def _mini_normalize(text: str) -> str:
    # Independent of corpus.normalize on purpose: ground-truth dedup keys
    # must not be produced by the code under test.
    out = []
    for tok in text.split():
        low = tok.casefold()
        if low.startswith(("http://", "https://", "www.")):
            out.append("<url>")
        elif low.startswith("@") and len(low) > 1:
            out.append("<user>")
        else:
            out.append(low)
    return " ".join(out)


def _pearson_direct(xs, ys) -> float:
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


def _avg_ranks(values) -> list[float]:
    ranks = [0.0] * len(values)
    for i, v in enumerate(values):
        below = sum(1 for w in values if w < v)
        ties = sum(1 for w in values if w == v)
        ranks[i] = below + (1 + ties) / 2
    return ranks


N_REGIONS = 10
MATCHED_SEED_PER_REGION = 35
MATCHED_VARIANT_PER_REGION = 12
AUTHORS_PER_REGION = 8


def generate_corpus(seed: int = 20240601):
    """Build the demo corpus; returns (post dicts, CorpusTruth).

    Layout per region R01..R10: 47 unique matched posts (35 carrying a seed
    term, 12 carrying only a planted variant) with a planted class split
    whose nonmedical-use share climbs linearly with the region's metric
    value. On top: unrelated noise with author-level duplicates, reposts
    (some baited with seed terms to verify they are dropped), and three
    scripted bot accounts with known flag patterns.
    """
    rng = random.Random(seed)
    posts: list[dict] = []
    seen_texts: set[tuple[str, str]] = set()
    labels: dict[str, LabelClass] = {}
    next_id = [0]

    def fresh_text(build) -> str:
        for _ in range(100):
            text = build()
            if ("_", _mini_normalize(text)) not in seen_texts:
                return text
        raise RuntimeError("could not produce a fresh text")

    def emit(author: str, text: str, ts: int, *, region: str | None = None,
             repost: bool = False, source: str = "twitter") -> dict:
        pid = f"p{next_id[0]:05d}"
        next_id[0] += 1
        post = {
            "post_id": pid,
            "author_id": author,
            "created_at": _iso(ts),
            "source": source,
            "text": text,
        }
        if region is not None:
            post["region"] = region
        if repost:
            post["is_repost"] = True
        posts.append(post)
        return post

    region_metric = {
        f"R{i:02d}": round(2.0 + 1.5 * i, 2) for i in range(1, N_REGIONS + 1)
    }
    region_matched: dict[str, int] = {}
    region_nm: dict[str, int] = {}
    baseline = 0
    expanded = 0

    for i in range(1, N_REGIONS + 1):
        region = f"R{i:02d}"
        authors = [f"user_{region.lower()}_{k}" for k in range(AUTHORS_PER_REGION)]
        total = MATCHED_SEED_PER_REGION + MATCHED_VARIANT_PER_REGION
        share = 0.15 + 0.025 * i + rng.uniform(-0.01, 0.01)
        nm_count = round(total * share)
        classes = [LabelClass.NONMEDICAL_USE] * nm_count
        rest = total - nm_count
        classes += [LabelClass.CONSUMPTION] * (rest // 2)
        classes += [LabelClass.MENTION] * (rest - rest // 2)
        carriers = ([rng.choice(DEMO_SEEDS) for _ in range(MATCHED_SEED_PER_REGION)]
                    + [rng.choice(DEMO_VARIANTS)
                       for _ in range(MATCHED_VARIANT_PER_REGION)])
        rng.shuffle(classes)
        rng.shuffle(carriers)
        for label, carrier in zip(classes, carriers):
            text = fresh_text(lambda: make_text(rng, label, extra=carrier))
            ts = EPOCH_2024 + rng.randrange(90 * 86400)
            source = "reddit" if rng.random() < 0.3 else "twitter"
            post = emit(rng.choice(authors), text, ts, region=region, source=source)
            seen_texts.add(("_", _mini_normalize(text)))
            labels[post["post_id"]] = label
            is_seed = carrier in DEMO_SEEDS
            baseline += is_seed
            expanded += 1
        region_matched[region] = total
        region_nm[region] = nm_count

    # --- noise: unrelated chatter, duplicates, seed-baited reposts
    noise_authors = [f"chatter_{k}" for k in range(60)]
    noise_texts: list[tuple[str, str]] = []
    for _ in range(400):
        author = rng.choice(noise_authors)
        text = fresh_text(lambda: make_text(rng, LabelClass.UNRELATED))
        ts = EPOCH_2024 + rng.randrange(90 * 86400)
        emit(author, text, ts, region=rng.choice(list(region_metric)))
        seen_texts.add(("_", _mini_normalize(text)))
        noise_texts.append((author, text))
    for _ in range(80):  # same-author duplicates; dedup keeps the first
        author, text = rng.choice(noise_texts)
        emit(author, text, EPOCH_2024 + rng.randrange(90 * 86400))
    for k in range(50):  # reposts are dropped before matching
        author = rng.choice(noise_authors)
        if k < 20:
            text = make_text(rng, LabelClass.NONMEDICAL_USE,
                             extra=rng.choice(DEMO_SEEDS))
        else:
            text = make_text(rng, LabelClass.UNRELATED)
        emit(author, text, EPOCH_2024 + rng.randrange(90 * 86400), repost=True)

    # --- scripted bots (admitted via one unique nonmedical-use post each).
    # Admission posts sit 60 s before each burst so the burst timing, not the
    # admission post, sets the active span and the gap series.
    burst = EPOCH_2024 + 45 * 86400
    bot_specs = {
        "bot_metronome": (0.5, burst - 60),
        "bot_copy": (0.5, EPOCH_2024 + 10 * 86400),
        "bot_max": (1.0, burst + 86400 - 60),
    }
    for bot, (_, admit_ts) in bot_specs.items():
        text = fresh_text(
            lambda: make_text(rng, LabelClass.NONMEDICAL_USE,
                              extra=rng.choice(DEMO_SEEDS)))
        post = emit(bot, text, admit_ts)
        seen_texts.add(("_", _mini_normalize(text)))
        labels[post["post_id"]] = LabelClass.NONMEDICAL_USE
        baseline += 1
        expanded += 1

    for k in range(60):  # >50/day and metronomic: flags 1 and 4
        emit("bot_metronome", f"status update number {k} of the hour", burst + 60 * k)
    copy_ts = sorted(rng.sample(range(40 * 86400), 40))
    for k, offset in enumerate(copy_ts):  # duplicate texts and URLs: flags 2 and 3
        if k < 31:
            text = "amazing deal on pills visit http://spam.example/buy right now"
        else:
            text = f"totally organic post {k} see http://spam.example/{k}"
        emit("bot_copy", text, EPOCH_2024 + offset)
    for k in range(60):  # all four flags
        if k < 56:
            text = "click here http://spam.example/win to claim your prize"
        else:
            text = f"filler interlude {k}"
        emit("bot_max", text, burst + 86400 + 60 * k)

    rng.shuffle(posts)

    rates = {r: region_nm[r] / region_matched[r] for r in region_metric}
    xs = [region_metric[r] for r in sorted(region_metric)]
    ys = [rates[r] for r in sorted(region_metric)]
    truth = CorpusTruth(
        n_lines=len(posts),
        unique_posts=_count_unique(posts),
        baseline_matched=baseline,
        expanded_matched=expanded,
        retrieval_gain_pct=100.0 * (expanded - baseline) / baseline,
        seeds=DEMO_SEEDS,
        variants=DEMO_VARIANTS,
        region_metric=region_metric,
        region_matched=region_matched,
        region_nm=region_nm,
        planted_rates=rates,
        sample_r=_pearson_direct(xs, ys),
        sample_rho=_pearson_direct(_avg_ranks(xs), _avg_ranks(ys)),
        bot_authors=tuple(bot_specs),
        bot_expected_scores={b: s for b, (s, _) in bot_specs.items()},
        labels=labels,
        author_ids=tuple(sorted({p["author_id"] for p in posts})),
    )
    assert truth.retrieval_gain_pct > 30.0, "generator must plant a >30% gain"
    return posts, truth


def _count_unique(posts) -> int:
    seen = set()
    for p in posts:
        if p.get("is_repost"):
            continue
        seen.add((p["author_id"], _mini_normalize(p["text"])))
    return len(seen)


def write_corpus_jsonl(posts, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(json.dumps(post, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Demo workspace

EMOTION_ROWS = (
    ("blasted", "anger"),
    ("railed", "anger"),
    ("snorted", "anger,disgust"),
    ("boofed", "disgust"),
    ("faded", "sadness"),
    ("bender", "sadness,fear"),
    ("shortage", "fear,anticipation"),
    ("recall", "fear"),
    ("refill", "anticipation"),
    ("tapering", "anticipation,trust"),
    ("doctor", "trust"),
    ("prescribed", "trust"),
    ("headline", "surprise"),
    ("lawsuit", "surprise,anger"),
    ("concert", "joy"),
    ("sunset", "joy"),
)

GUIDELINE_TEXT = """\
# Labeling guideline

Assign exactly one label per post.

1. nonmedical_use - the author describes taking a prescription medication
   without a prescription, beyond the prescribed amount, or for the feeling.
2. consumption - the author reports taking the medication as directed.
3. mention - the medication is discussed without any report of intake
   (news, questions, other people).
4. unrelated - the matched term does not refer to the medication.

When torn between nonmedical_use and consumption, prefer nonmedical_use only
on explicit evidence. Use keyboard keys 1-4 in the labeling tool.
"""


def write_demo_workspace(root: str | Path, *, corpus_seed: int = 20240601,
                         data_seed: int = 20240501) -> dict:
    """Materialize every file the demo pipeline config points at.

    Returns the config dict that was written to ``config.json``.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    posts, truth = generate_corpus(corpus_seed)
    write_corpus_jsonl(posts, root / "corpus.jsonl")

    dataset = generate_labeled_dataset(data_seed)
    write_labeled_jsonl(dataset.train, root / "train.jsonl")
    write_labeled_jsonl(dataset.test, root / "test.jsonl")

    (root / "seeds.txt").write_text("\n".join(DEMO_SEEDS) + "\n", encoding="utf-8")
    shutil.copy(Path(__file__).parent / "fixtures" / "toy_embeddings.txt",
                root / "embeddings.txt")

    with open(root / "overdose_rates.csv", "w", encoding="utf-8") as fh:
        fh.write("region,overdose_deaths_per_100k\n")
        for region in sorted(truth.region_metric):
            fh.write(f"{region},{truth.region_metric[region]}\n")

    with open(root / "emotion_lexicon.tsv", "w", encoding="utf-8") as fh:
        for token, cats in EMOTION_ROWS:
            fh.write(f"{token}\t{cats}\n")

    (root / "guideline.md").write_text(GUIDELINE_TEXT, encoding="utf-8")

    config = {
        "schema_version": 1,
        "paths": {
            # relative to the config file, so the workspace can be moved
            "embeddings": "embeddings.txt",
            "seeds": "seeds.txt",
            "corpus": "corpus.jsonl",
            "train_data": "train.jsonl",
            "test_data": "test.jsonl",
            "metric_table": "overdose_rates.csv",
            "emotion_lexicon": "emotion_lexicon.tsv",
            "guideline": "guideline.md",
            "out_dir": "out",
        },
        "lexvar": {"theta_sem": 0.70, "theta_lex": 0.65, "max_depth": 3,
                   "max_neighbors": 50},
        "classifier": {
            "seeds": [11, 12, 13],
            "epochs": 8,
            "learning_rate": 0.5,
            "l2": 1e-6,
            "class_weights": {"nonmedical_use": 3.0},
            "fusion": "mean",
            "hash_bits": 18,
        },
        "cohort": {"admission_mode": "argmax", "salt": "demo-salt-2024",
                   "recollect_days": 14, "bot_threshold": 0.5, "min_posts": 10},
        "signals": {"permutations": 999, "seed": 4242, "min_support": 30},
        "server": {"host": "127.0.0.1", "port": 8765, "open_enrollment": True,
                   "target_annotations": 2, "lease_seconds": 600},
    }
    (root / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return config
