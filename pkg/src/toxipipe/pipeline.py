"""End-to-end pipeline driver.

Stages run in a fixed order, each persisting its output under the configured
``out_dir`` so it can be re-run individually from the previous stage's files:

    expand  -> lexicon.csv
    ingest  -> posts.jsonl, matched.jsonl, retrieval.json
    train   -> models/model_<seed>.json, eval.json
    classify-> predictions.jsonl
    cohort  -> cohort_snapshot.json, cohort_events.jsonl, bot_report.json
    signals -> signals.json
    export  -> export/stats.json, export/stats.csv

Everything under ``export/`` is aggregate-only and timestamp-free: two runs
over identical inputs produce byte-identical files. The run manifest is the
one artifact that is allowed to differ between runs (it records wall-clock
per stage).
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .annotation import LabelClass
from .classify import (
    FeatureConfig,
    LinearModel,
    Prediction,
    TrainConfig,
    evaluate,
    featurize,
    fuse,
    predict,
    read_labeled_jsonl,
    train,
)
from .cohort import (
    AdmissionPolicy,
    BotConfig,
    CohortStore,
    MemberStatus,
    member_hash,
)
from .config import PipelineConfig
from .corpus import (
    IngestStats,
    LexiconMatcher,
    dedup,
    match_posts,
    read_jsonl,
    read_matched_jsonl,
    write_matched_jsonl,
    write_posts_jsonl,
)
from .errors import ConfigError, StageError, ToxipipeError
from .lexvar import (
    expand_lexicon,
    load_embeddings,
    read_lexicon_csv,
    retrieval_gain,
    write_lexicon_csv,
)
from .signals import (
    correlate_report,
    emotion_profile,
    load_emotion_lexicon,
    read_metric_csv,
    region_rates,
)

STAGE_ORDER = ("expand", "ingest", "train", "classify", "cohort", "signals", "export")


@dataclass
class StageResult:
    name: str
    counts: dict
    seconds: float

    def to_json(self) -> dict:
        return {"name": self.name, "counts": self.counts,
                "seconds": round(self.seconds, 3)}


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    input_hashes: dict[str, str]
    tool_version: str = __version__
    stages: list[StageResult] = field(default_factory=list)
    failed_stage: str | None = None

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "input_hashes": dict(sorted(self.input_hashes.items())),
            "tool_version": self.tool_version,
            "stages": [s.to_json() for s in self.stages],
            "failed_stage": self.failed_stage,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def counts(self, stage: str) -> dict:
        for s in self.stages:
            if s.name == stage:
                return s.counts
        raise KeyError(stage)


# ---------------------------------------------------------------------------
# artifact paths


def _out(config: PipelineConfig, *parts: str) -> Path:
    p = config.out_dir.joinpath(*parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _read_json(path: Path, stage: str) -> dict:
    if not path.is_file():
        raise StageError(stage, f"missing intermediate {path.name}; run the earlier stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def read_seed_file(path: str | Path) -> list[str]:
    """One seed term per line; blank lines and # comments ignored."""
    seeds = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        term = raw.strip()
        if term and not term.startswith("#"):
            seeds.append(term.casefold())
    if not seeds:
        raise ConfigError(f"seed file {path} contains no terms")
    return seeds


# ---------------------------------------------------------------------------
# stages


def stage_expand(config: PipelineConfig) -> dict:
    model = load_embeddings(config.path("embeddings"))
    seeds = read_seed_file(config.path("seeds"))
    lexicon = expand_lexicon(seeds, model, config.lexvar)
    write_lexicon_csv(_out(config, "lexicon.csv"), lexicon)
    n_variants = sum(len(vs.variants) for vs in lexicon.values())
    in_vocab = sum(1 for vs in lexicon.values() if vs.in_vocabulary)
    return {"seeds": len(seeds), "seeds_in_vocabulary": in_vocab,
            "variants": n_variants}


def stage_ingest(config: PipelineConfig) -> dict:
    lexicon = read_lexicon_csv(_out(config, "lexicon.csv"))
    seeds = read_seed_file(config.path("seeds"))
    stats = IngestStats()
    posts = list(dedup(read_jsonl(config.path("corpus"), stats)))
    write_posts_jsonl(_out(config, "posts.jsonl"), posts)

    baseline = sum(1 for _ in match_posts(posts, LexiconMatcher.seeds_only(seeds)))
    matched = list(match_posts(posts, LexiconMatcher.from_lexicon(lexicon)))
    write_matched_jsonl(_out(config, "matched.jsonl"), matched)
    gain = retrieval_gain(baseline, len(matched))

    counts = {
        "lines": stats.lines,
        "parsed": stats.parsed,
        "skipped": stats.skipped,
        "unique_posts": len(posts),
        "dropped_as_duplicate": stats.parsed - len(posts),
        "baseline_matched": baseline,
        "expanded_matched": len(matched),
        "retrieval_gain_pct": gain,
    }
    _write_json(_out(config, "retrieval.json"), counts)
    return counts


def _feature_config(config: PipelineConfig) -> FeatureConfig:
    return FeatureConfig(hash_bits=config.classifier.hash_bits)


def stage_train(config: PipelineConfig) -> dict:
    cc = config.classifier
    fc = _feature_config(config)
    train_rows = read_labeled_jsonl(config.path("train_data"))
    examples = [(featurize(text, fc), label) for _, text, label in train_rows]

    models = []
    for seed in cc.seeds:
        tc = TrainConfig(epochs=cc.epochs, learning_rate=cc.learning_rate,
                         l2=cc.l2, class_weights=dict(cc.class_weights) or None,
                         seed=seed)
        model = train(examples, tc, fc)
        model.save(_out(config, "models", f"model_{seed}.json"))
        models.append(model)

    test_rows = read_labeled_jsonl(config.path("test_data"))
    gold = {pid: label for pid, _, label in test_rows}
    test_feats = [(pid, featurize(text, fc)) for pid, text, _ in test_rows]
    per_model = {}
    all_preds = []
    for seed, model in zip(cc.seeds, models):
        preds = [predict(model, fv, post_id=pid) for pid, fv in test_feats]
        all_preds.append(preds)
        per_model[str(seed)] = evaluate(preds, gold).to_json()
    fused = [
        fuse([preds[i] for preds in all_preds], strategy=cc.fusion)
        for i in range(len(test_feats))
    ]
    report = {
        "per_model": per_model,
        "fused": evaluate(fused, gold).to_json(),
        "fusion": cc.fusion,
    }
    _write_json(_out(config, "eval.json"), report)
    return {"train_examples": len(examples), "test_examples": len(test_rows),
            "models": len(models)}


def stage_classify(config: PipelineConfig) -> dict:
    cc = config.classifier
    fc = _feature_config(config)
    models = [
        LinearModel.load(_out(config, "models", f"model_{seed}.json"))
        for seed in cc.seeds
    ]
    n = 0
    with open(_out(config, "predictions.jsonl"), "w", encoding="utf-8") as fh:
        for mp in read_matched_jsonl(_out(config, "matched.jsonl")):
            fv = featurize(mp.normalized_text, fc)
            preds = [predict(m, fv, post_id=mp.post.post_id) for m in models]
            fused = fuse(preds, strategy=cc.fusion)
            fh.write(json.dumps(fused.to_json(), sort_keys=True) + "\n")
            n += 1
    return {"predictions": n, "models": len(models)}


def _read_predictions(config: PipelineConfig, stage: str) -> dict[str, Prediction]:
    path = _out(config, "predictions.jsonl")
    if not path.is_file():
        raise StageError(stage, "missing predictions.jsonl; run the classify stage first")
    out: dict[str, Prediction] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                pred = Prediction.from_json(json.loads(line))
                out[pred.post_id] = pred
    return out


def stage_cohort(config: PipelineConfig) -> dict:
    ch = config.cohort
    policy = AdmissionPolicy(mode=ch.admission_mode, threshold=ch.threshold)
    predictions = _read_predictions(config, "cohort")
    matched = list(read_matched_jsonl(_out(config, "matched.jsonl")))

    event_log = _out(config, "cohort_events.jsonl")
    event_log.unlink(missing_ok=True)  # append-mode log; start fresh per run
    admitted = 0
    with CohortStore(ch.salt, event_log=event_log) as store:
        for mp in matched:
            pred = predictions.get(mp.post.post_id)
            if pred is None:
                continue
            if store.admit(pred, mp.post, policy) is not None:
                admitted += 1

        # Timelines come from the raw stream: duplicate spam and repost
        # behavior is exactly what the bot heuristics need to see.
        by_author: dict[str, list] = {}
        member_of: dict[str, str] = {}
        for post in read_jsonl(config.path("corpus")):
            mid = member_of.get(post.author_id)
            if mid is None:
                mid = member_hash(post.author_id, ch.salt)
                member_of[post.author_id] = mid
            if mid in store.members:
                by_author.setdefault(post.author_id, []).append(post)
        logical_now = max(
            (p.created_at for posts in by_author.values() for p in posts),
            default=None,
        )
        timeline_posts = 0
        for author, posts in sorted(by_author.items()):
            tl = store.merge(member_of[author], posts, now=logical_now)
            timeline_posts += len(tl.posts)

        report = store.filter_bots(
            ch.bot_threshold, BotConfig(min_posts=ch.min_posts)
        )
        _write_json(_out(config, "bot_report.json"), report.to_json())
        store.save_snapshot(_out(config, "cohort_snapshot.json"))
        summary = store.summary()

    return {
        "admitted": admitted,
        "members": summary["members"],
        "timeline_posts": timeline_posts,
        "bots_excluded": len(report.excluded),
        "bot_scored": report.scored,
        "bot_skipped_short": report.skipped,
    }


def _excluded_member_ids(config: PipelineConfig) -> set[str]:
    snapshot = _read_json(_out(config, "cohort_snapshot.json"), "signals")
    return {
        m["member_id"]
        for m in snapshot.get("members", [])
        if m.get("status") == MemberStatus.EXCLUDED_BOT.value
    }


def _cohort_growth(config: PipelineConfig) -> list[dict]:
    """Cumulative member count by admission date; aggregate only."""
    snapshot = _read_json(_out(config, "cohort_snapshot.json"), "signals")
    by_day: dict[str, int] = {}
    for m in snapshot.get("members", []):
        day = str(m["admitted_at"])[:10]
        by_day[day] = by_day.get(day, 0) + 1
    total = 0
    rows = []
    for day in sorted(by_day):
        total += by_day[day]
        rows.append({"date": day, "admitted": by_day[day], "cumulative": total})
    return rows


def stage_signals(config: PipelineConfig) -> dict:
    sg = config.signals
    predictions = _read_predictions(config, "signals")
    excluded = _excluded_member_ids(config)
    salt = config.cohort.salt

    labeled = []
    texts = []
    by_label_texts: dict[str, list[str]] = {}
    hash_cache: dict[str, str] = {}
    for mp in read_matched_jsonl(_out(config, "matched.jsonl")):
        pred = predictions.get(mp.post.post_id)
        if pred is None:
            continue
        author = mp.post.author_id
        mid = hash_cache.get(author)
        if mid is None:
            mid = member_hash(author, salt)
            hash_cache[author] = mid
        if mid in excluded:
            continue
        label = LabelClass(pred.argmax)
        labeled.append((mp.post, label))
        texts.append(mp.post.text)
        by_label_texts.setdefault(label.value, []).append(mp.post.text)

    rates = region_rates(labeled, min_support=sg.min_support)
    table = read_metric_csv(config.path("metric_table"))
    correlation = correlate_report(rates, table, permutations=sg.permutations,
                                   seed=sg.seed)

    lexicon = load_emotion_lexicon(config.path("emotion_lexicon"))
    overall = emotion_profile(texts, lexicon)
    emotions = {
        "overall": overall.to_json(),
        "by_label": {
            label: emotion_profile(batch, lexicon).to_json()
            for label, batch in sorted(by_label_texts.items())
        },
    }

    doc = {
        "region_rates": rates.to_json(),
        "correlation": correlation.to_json(),
        "emotions": emotions,
        "cohort_growth": _cohort_growth(config),
        "excluded_bot_posts": len(predictions) - len(labeled),
    }
    _write_json(_out(config, "signals.json"), doc)
    return {
        "labeled_posts": len(labeled),
        "excluded_bot_posts": doc["excluded_bot_posts"],
        "regions": len(rates.rows),
        "usable_regions": correlation.n,
        "emotion_hits": overall.total_hits,
    }


def stats_csv_rows(stats: dict, region: str | None = None) -> list[dict]:
    """Flatten the per-region rate rows for CSV export."""
    rows = []
    for name, row in sorted(stats["region_rates"]["rows"].items()):
        if region is not None and name != region:
            continue
        rows.append({
            "region": name,
            "total_matched": row["total_matched"],
            "nm_posts": row["nm_posts"],
            "rate": repr(row["rate"]),
            "low_support": str(bool(row["low_support"])).lower(),
        })
    return rows


def render_stats_csv(stats: dict, region: str | None = None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf,
        fieldnames=["region", "total_matched", "nm_posts", "rate", "low_support"],
        lineterminator="\n",
    )
    writer.writeheader()
    for row in stats_csv_rows(stats, region):
        writer.writerow(row)
    return buf.getvalue()


def stage_export(config: PipelineConfig) -> dict:
    signals_doc = _read_json(_out(config, "signals.json"), "export")
    retrieval = _read_json(_out(config, "retrieval.json"), "export")
    eval_doc = _read_json(_out(config, "eval.json"), "export")
    snapshot = _read_json(_out(config, "cohort_snapshot.json"), "export")

    by_status: dict[str, int] = {}
    for m in snapshot.get("members", []):
        by_status[m["status"]] = by_status.get(m["status"], 0) + 1

    def _f1_rows(report: dict) -> dict:
        return {
            "accuracy": report["accuracy"],
            "macro_f1": report["macro_f1"],
            "minority_f1": report["per_class"]["nonmedical_use"]["f1"],
        }

    stats = {
        "schema_version": 1,
        "config_hash": config.config_hash(),
        "input_hashes": config.input_hashes(),
        "retrieval": {
            "baseline_matched": retrieval["baseline_matched"],
            "expanded_matched": retrieval["expanded_matched"],
            "retrieval_gain_pct": retrieval["retrieval_gain_pct"],
        },
        "classifier": {
            "fusion": eval_doc["fusion"],
            "per_model": {k: _f1_rows(v) for k, v in eval_doc["per_model"].items()},
            "fused": _f1_rows(eval_doc["fused"]),
        },
        "region_rates": signals_doc["region_rates"],
        "correlation": signals_doc["correlation"],
        "emotions": signals_doc["emotions"],
        "cohort": {
            "members": len(snapshot.get("members", [])),
            "by_status": dict(sorted(by_status.items())),
            "growth": signals_doc["cohort_growth"],
            "excluded_bot_posts": signals_doc["excluded_bot_posts"],
        },
    }
    json_path = _out(config, "export", "stats.json")
    _write_json(json_path, stats)
    csv_path = _out(config, "export", "stats.csv")
    csv_path.write_text(render_stats_csv(stats), encoding="utf-8")
    return {"export_files": 2, "csv_rows": len(stats_csv_rows(stats))}


_STAGE_FNS = {
    "expand": stage_expand,
    "ingest": stage_ingest,
    "train": stage_train,
    "classify": stage_classify,
    "cohort": stage_cohort,
    "signals": stage_signals,
    "export": stage_export,
}


def run_stage(config: PipelineConfig, name: str) -> dict:
    """Run a single stage against the persisted intermediates."""
    fn = _STAGE_FNS.get(name)
    if fn is None:
        raise ConfigError(f"unknown stage {name!r}; stages are {', '.join(STAGE_ORDER)}")
    try:
        return fn(config)
    except StageError:
        raise
    except (ToxipipeError, OSError) as exc:
        raise StageError(name, str(exc)) from exc


def run_pipeline(config: PipelineConfig) -> RunManifest:
    """Run every stage in order; emit a manifest even when a stage fails."""
    manifest = RunManifest(
        run_id=config.config_hash()[:12],
        config_hash=config.config_hash(),
        input_hashes=config.input_hashes(),
    )
    manifest_path = _out(config, "run_manifest.json")
    for name in STAGE_ORDER:
        started = time.perf_counter()
        try:
            counts = run_stage(config, name)
        except StageError:
            manifest.failed_stage = name
            manifest.save(manifest_path)
            raise
        manifest.stages.append(
            StageResult(name=name, counts=counts,
                        seconds=time.perf_counter() - started)
        )
    manifest.save(manifest_path)
    return manifest
