"""Command-line entry point.

Every pipeline stage is reachable on its own (resuming from persisted
intermediates under the configured out_dir), and the classifier / statistics
tools also work standalone on plain files without a config.

Exit codes: 0 success, 2 configuration error, 3 stage or data failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
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
from .cohort import BotConfig, CohortStore
from .config import PipelineConfig, load_config
from .corpus import read_jsonl
from .errors import ConfigError, StageError, ToxipipeError
from .pipeline import (
    STAGE_ORDER,
    render_stats_csv,
    run_pipeline,
    run_stage,
)
from .server import make_server, serve_forever
from .signals import (
    RegionMetricTable,
    RegionRate,
    RegionRateReport,
    correlate_report,
    emotion_profile,
    load_emotion_lexicon,
    read_metric_csv,
)
from .synthdata import write_demo_workspace


def _print_json(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _load(args) -> PipelineConfig:
    if not args.config:
        raise ConfigError("this command requires --config")
    return load_config(args.config)


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    config = _load(args)
    manifest = run_pipeline(config)
    for stage in manifest.stages:
        counts = ", ".join(f"{k}={v}" for k, v in stage.counts.items())
        print(f"{stage.name:<9} {stage.seconds:7.2f}s  {counts}")
    print(f"run {manifest.run_id} complete; artifacts in {config.out_dir}")
    return 0


def cmd_stage(stage_name: str):
    def run(args) -> int:
        config = _load(args)
        counts = run_stage(config, stage_name)
        _print_json(counts)
        return 0

    return run


def cmd_serve(args) -> int:
    config = _load(args)
    server = make_server(config, static_dir=args.static, port=args.port)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}/ (Ctrl-C to stop)")
    serve_forever(server)
    return 0


def cmd_train(args) -> int:
    if args.data is None or args.out is None:
        # config-driven: run the pipeline's train stage
        config = _load(args)
        _print_json(run_stage(config, "train"))
        return 0
    fc = FeatureConfig(hash_bits=args.hash_bits)
    weights = {}
    for spec in args.class_weight or []:
        name, _, value = spec.partition("=")
        try:
            weights[LabelClass(name)] = float(value)
        except ValueError:
            raise ConfigError(f"bad --class-weight {spec!r}; use class=weight")
    tc = TrainConfig(epochs=args.epochs, learning_rate=args.learning_rate,
                     l2=args.l2, class_weights=weights or None, seed=args.seed)
    rows = read_labeled_jsonl(args.data)
    examples = [(featurize(text, fc), label) for _, text, label in rows]
    model = train(examples, tc, fc)
    model.save(args.out)
    print(f"trained on {len(examples)} examples -> {args.out}")
    return 0


def cmd_classify(args) -> int:
    if args.infile is None:
        config = _load(args)
        _print_json(run_stage(config, "classify"))
        return 0
    if not args.model or args.out is None:
        raise ConfigError("standalone classify requires --model and --out")
    models = [LinearModel.load(p) for p in args.model.split(",")]
    fc = models[0].feature_config
    n = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for post in read_jsonl(args.infile):
            fv = featurize(post.text, fc)
            preds = [predict(m, fv, post_id=post.post_id) for m in models]
            fused = fuse(preds, strategy=args.fuse)
            fh.write(json.dumps(fused.to_json(), sort_keys=True) + "\n")
            n += 1
    print(f"classified {n} posts -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    gold = {pid: label for pid, _, label in read_labeled_jsonl(args.gold)}
    preds = []
    with open(args.pred, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                preds.append(Prediction.from_json(json.loads(line)))
    report = evaluate(preds, gold)
    print(report.summary())
    return 0


def _snapshot_path(config: PipelineConfig) -> Path:
    return config.out_dir / "cohort_snapshot.json"


def cmd_cohort(args) -> int:
    config = _load(args)
    action = args.action
    if action in ("admit", "merge"):
        # both live inside the cohort stage; it is idempotent over a snapshot
        _print_json(run_stage(config, "cohort"))
        return 0
    store = CohortStore.load_snapshot(_snapshot_path(config), config.cohort.salt)
    if action == "due":
        now = (datetime.fromisoformat(args.now.replace("Z", "+00:00"))
               if args.now else datetime.now(timezone.utc))
        interval = config.cohort.recollect_days * 86400
        due = store.due(now, interval_seconds=interval)
        for member in due:
            timeline = store.timelines.get(member.member_id)
            collected = (timeline.last_collected_at.isoformat()
                         if timeline and timeline.last_collected_at else "never")
            print(f"{member.member_id}  last_collected={collected}")
        print(f"{len(due)} member(s) due at {now.isoformat()}")
        return 0
    if action == "bots":
        report = store.filter_bots(
            args.threshold if args.threshold is not None else config.cohort.bot_threshold,
            BotConfig(min_posts=config.cohort.min_posts),
        )
        store.save_snapshot(_snapshot_path(config))
        _print_json(report.to_json())
        return 0
    raise ConfigError(f"unknown cohort action {action!r}")


def _rates_from_json(doc: dict) -> RegionRateReport:
    if "region_rates" in doc:
        doc = doc["region_rates"]
    rows = {
        region: RegionRate(
            nm_posts=row["nm_posts"],
            total_matched=row["total_matched"],
            rate=row["rate"],
            low_support=row["low_support"],
        )
        for region, row in doc["rows"].items()
    }
    return RegionRateReport(
        rows=rows,
        regionless=doc.get("regionless", 0),
        empty_regions=list(doc.get("empty_regions", [])),
        min_support=doc.get("min_support", 30),
    )


def cmd_correlate(args) -> int:
    rates = _rates_from_json(json.loads(Path(args.rates).read_text(encoding="utf-8")))
    table = read_metric_csv(args.table)
    report = correlate_report(rates, table, permutations=args.permutations,
                              seed=args.seed)
    _print_json(report.to_json())
    return 0


def cmd_emotions(args) -> int:
    lexicon = load_emotion_lexicon(args.lexicon)
    groups: dict[str, list[str]] = {}
    for post in read_jsonl(args.infile):
        if args.group_by == "none":
            key = "all"
        elif args.group_by == "region":
            key = post.region or "(none)"
        elif args.group_by == "source":
            key = post.source.value
        else:
            raise ConfigError(f"unknown group-by field {args.group_by!r}")
        groups.setdefault(key, []).append(post.text)
    doc = {
        key: emotion_profile(texts, lexicon).to_json()
        for key, texts in sorted(groups.items())
    }
    _print_json(doc)
    return 0


def cmd_export(args) -> int:
    config = _load(args)
    counts = run_stage(config, "export")
    stats_path = config.out_dir / "export" / "stats.json"
    stats = json.loads(stats_path.read_text(encoding="utf-8"))
    if args.format == "csv":
        body = render_stats_csv(stats, args.region)
    else:
        if args.region is not None:
            rows = stats["region_rates"]["rows"]
            stats["region_rates"]["rows"] = {
                k: v for k, v in rows.items() if k == args.region
            }
        body = json.dumps(stats, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
        print(f"wrote {args.out} ({counts['csv_rows']} region rows available)")
    else:
        sys.stdout.write(body)
    return 0


def cmd_demo_init(args) -> int:
    root = Path(args.dir)
    root.mkdir(parents=True, exist_ok=True)
    write_demo_workspace(root)
    print(f"demo workspace ready: {root / 'config.json'}")
    print(f"next: toxipipe run --config {root / 'config.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxipipe",
        description="Social-media toxicovigilance pipeline: lexicon expansion, "
                    "ingestion, classification, cohort tracking, and signals.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="path to the pipeline config JSON")
        return p

    add("run", cmd_run, "run every stage in order")

    p = add("serve", cmd_serve, "start the annotation + stats HTTP service")
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.add_argument("--port", type=int, help="override the configured port")

    add("expand-lexicon", cmd_stage("expand"), "expand seed terms into variants")
    add("ingest", cmd_stage("ingest"), "ingest, dedup, and match the corpus")

    p = add("train", cmd_train, "train classifier model(s)")
    p.add_argument("--data", help="labeled JSONL (standalone mode)")
    p.add_argument("--out", help="model output path (standalone mode)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hash-bits", type=int, default=18)
    p.add_argument("--class-weight", action="append", metavar="CLASS=W",
                   help="per-class loss weight; repeatable")

    p = add("classify", cmd_classify, "score posts with trained model(s)")
    p.add_argument("--model", help="comma-separated model paths (standalone)")
    p.add_argument("--fuse", choices=("mean", "majority"), default="mean")
    p.add_argument("--in", dest="infile", help="posts JSONL (standalone)")
    p.add_argument("--out", help="predictions JSONL output (standalone)")

    p = add("eval", cmd_eval, "score predictions against gold labels")
    p.add_argument("--pred", required=True, help="predictions JSONL")
    p.add_argument("--gold", required=True, help="gold labeled JSONL")

    p = add("cohort", cmd_cohort, "cohort admission, recollection, bot filter")
    p.add_argument("action", choices=("admit", "due", "merge", "bots"))
    p.add_argument("--now", help="ISO timestamp for 'due' (default: now)")
    p.add_argument("--threshold", type=float, help="bot score cutoff for 'bots'")

    p = add("correlate", cmd_correlate, "correlate region rates with a metric table")
    p.add_argument("--rates", required=True, help="region-rate report JSON")
    p.add_argument("--table", required=True, help="region,metric CSV")
    p.add_argument("--permutations", type=int, default=9999)
    p.add_argument("--seed", type=int, default=0)

    p = add("emotions", cmd_emotions, "emotion-category profile of a posts file")
    p.add_argument("--in", dest="infile", required=True, help="posts JSONL")
    p.add_argument("--lexicon", required=True, help="token<TAB>categories TSV")
    p.add_argument("--group-by", choices=("none", "region", "source"),
                   default="none")

    p = add("export", cmd_export, "rebuild and print/write the stats export")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--region", help="restrict rows to one region")
    p.add_argument("--out", help="write to this path instead of stdout")

    p = add("demo-init", cmd_demo_init, "write a self-contained demo workspace")
    p.add_argument("--dir", required=True, help="directory to create")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ToxipipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
