"""Run configuration: loading, validation, and hashing of the pipeline config file.

The config is a single JSON document with a ``schema_version`` field and one
section per pipeline concern. Relative paths are resolved against the config
file's own directory so a demo workspace can be moved around freely. Every
input path named in the file must exist at load time; failures surface as
:class:`ConfigError` before any stage runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .annotation import LabelClass
from .errors import ConfigError, ContractError
from .lexvar import ExpansionConfig

SCHEMA_VERSION = 1

# paths that point at input files (must exist); out_dir is created on demand
_INPUT_PATH_KEYS = (
    "embeddings",
    "seeds",
    "corpus",
    "train_data",
    "test_data",
    "metric_table",
    "emotion_lexicon",
    "guideline",
)
_REQUIRED_PATH_KEYS = ("embeddings", "seeds", "corpus", "out_dir")


@dataclass(frozen=True)
class ClassifierConfig:
    seeds: tuple[int, ...] = (11, 12, 13)
    epochs: int = 8
    learning_rate: float = 0.5
    l2: float = 1e-6
    class_weights: dict[LabelClass, float] = field(default_factory=dict)
    fusion: str = "mean"
    hash_bits: int = 18

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("classifier.seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("classifier.seeds must be distinct")
        if self.epochs < 1:
            raise ConfigError("classifier.epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("classifier.learning_rate must be positive")
        if self.l2 < 0:
            raise ConfigError("classifier.l2 must be >= 0")
        if self.fusion not in ("mean", "majority"):
            raise ConfigError(f"unknown fusion strategy {self.fusion!r}")
        if not 4 <= self.hash_bits <= 30:
            raise ConfigError("classifier.hash_bits must be in [4, 30]")


@dataclass(frozen=True)
class CohortConfig:
    admission_mode: str = "argmax"
    threshold: float | None = None
    salt: str = "toxipipe"
    recollect_days: int = 14
    bot_threshold: float = 0.5
    min_posts: int = 10

    def __post_init__(self):
        if self.admission_mode not in ("argmax", "threshold"):
            raise ConfigError(f"unknown admission mode {self.admission_mode!r}")
        if self.admission_mode == "threshold":
            if self.threshold is None or not 0.0 <= self.threshold <= 1.0:
                raise ConfigError("cohort.threshold must be in [0, 1]")
        if not self.salt:
            raise ConfigError("cohort.salt must not be empty")
        if self.recollect_days < 1:
            raise ConfigError("cohort.recollect_days must be >= 1")
        if self.bot_threshold < 0:
            raise ConfigError("cohort.bot_threshold must be >= 0")
        if self.min_posts < 1:
            raise ConfigError("cohort.min_posts must be >= 1")


@dataclass(frozen=True)
class SignalsConfig:
    permutations: int = 999
    seed: int = 0
    min_support: int = 30

    def __post_init__(self):
        if self.permutations < 100:
            raise ConfigError("signals.permutations must be >= 100")
        if self.min_support < 1:
            raise ConfigError("signals.min_support must be >= 1")


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    open_enrollment: bool = True
    target_annotations: int = 2
    lease_seconds: int = 600

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ConfigError("server.port must be in [1, 65535]")
        if self.target_annotations < 1:
            raise ConfigError("server.target_annotations must be >= 1")
        if self.lease_seconds < 1:
            raise ConfigError("server.lease_seconds must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    paths: dict[str, Path]
    lexvar: ExpansionConfig
    classifier: ClassifierConfig
    cohort: CohortConfig
    signals: SignalsConfig
    server: ServerConfig
    raw: dict
    source_path: Path | None = None

    @property
    def out_dir(self) -> Path:
        return self.paths["out_dir"]

    def path(self, key: str) -> Path:
        """A configured path, or ConfigError if the config omits it."""
        got = self.paths.get(key)
        if got is None:
            raise ConfigError(f"config does not define paths.{key}")
        return got

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def input_hashes(self) -> dict[str, str]:
        out = {}
        for key in _INPUT_PATH_KEYS:
            p = self.paths.get(key)
            if p is not None and p.is_file():
                out[key] = hashlib.sha256(p.read_bytes()).hexdigest()
        return out


def _section(doc: Mapping, name: str) -> dict:
    got = doc.get(name, {})
    if not isinstance(got, dict):
        raise ConfigError(f"section {name!r} must be an object")
    return dict(got)


def _take(section: dict, name: str, key: str, kind, default):
    if key not in section:
        return default
    value = section.pop(key)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{name}.{key} must be of type {kind.__name__}")
    return value


def _reject_unknown(section: dict, name: str) -> None:
    if section:
        extra = ", ".join(sorted(section))
        raise ConfigError(f"unknown key(s) in {name!r}: {extra}")


def _parse_class_weights(raw: Any) -> dict[LabelClass, float]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("classifier.class_weights must be an object")
    out: dict[LabelClass, float] = {}
    for key, value in raw.items():
        try:
            label = LabelClass(key)
        except ValueError:
            raise ConfigError(f"unknown class in class_weights: {key!r}") from None
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
            raise ConfigError(f"class weight for {key!r} must be a positive number")
        out[label] = float(value)
    return out


def parse_config(doc: Mapping, *, base_dir: Path | None = None,
                 source_path: Path | None = None,
                 check_paths: bool = True) -> PipelineConfig:
    """Validate an already-parsed config document."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r}; this tool reads version {SCHEMA_VERSION}"
        )
    known = {"schema_version", "paths", "lexvar", "classifier", "cohort",
             "signals", "server"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")

    raw_paths = _section(doc, "paths")
    base = base_dir or Path.cwd()
    paths: dict[str, Path] = {}
    for key, value in raw_paths.items():
        if key not in _INPUT_PATH_KEYS and key != "out_dir":
            raise ConfigError(f"unknown key(s) in 'paths': {key}")
        if not isinstance(value, str) or not value:
            raise ConfigError(f"paths.{key} must be a non-empty string")
        p = Path(value)
        paths[key] = p if p.is_absolute() else (base / p).resolve()
    for key in _REQUIRED_PATH_KEYS:
        if key not in paths:
            raise ConfigError(f"config does not define paths.{key}")
    if check_paths:
        for key in _INPUT_PATH_KEYS:
            p = paths.get(key)
            if p is not None and not p.is_file():
                raise ConfigError(f"paths.{key} does not exist: {p}")

    sec = _section(doc, "lexvar")
    try:
        lexvar = ExpansionConfig(
            theta_sem=_take(sec, "lexvar", "theta_sem", float, 0.7),
            theta_lex=_take(sec, "lexvar", "theta_lex", float, 0.65),
            max_depth=_take(sec, "lexvar", "max_depth", int, 3),
            max_neighbors=_take(sec, "lexvar", "max_neighbors", int, 50),
        )
    except ContractError as exc:
        raise ConfigError(f"invalid lexvar settings: {exc}") from None
    _reject_unknown(sec, "lexvar")

    sec = _section(doc, "classifier")
    seeds_raw = sec.pop("seeds", [11, 12, 13])
    if (not isinstance(seeds_raw, list)
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds_raw)):
        raise ConfigError("classifier.seeds must be a list of integers")
    classifier = ClassifierConfig(
        seeds=tuple(seeds_raw),
        epochs=_take(sec, "classifier", "epochs", int, 8),
        learning_rate=_take(sec, "classifier", "learning_rate", float, 0.5),
        l2=_take(sec, "classifier", "l2", float, 1e-6),
        class_weights=_parse_class_weights(sec.pop("class_weights", None)),
        fusion=_take(sec, "classifier", "fusion", str, "mean"),
        hash_bits=_take(sec, "classifier", "hash_bits", int, 18),
    )
    _reject_unknown(sec, "classifier")

    sec = _section(doc, "cohort")
    cohort = CohortConfig(
        admission_mode=_take(sec, "cohort", "admission_mode", str, "argmax"),
        threshold=_take(sec, "cohort", "threshold", float, None),
        salt=_take(sec, "cohort", "salt", str, "toxipipe"),
        recollect_days=_take(sec, "cohort", "recollect_days", int, 14),
        bot_threshold=_take(sec, "cohort", "bot_threshold", float, 0.5),
        min_posts=_take(sec, "cohort", "min_posts", int, 10),
    )
    _reject_unknown(sec, "cohort")

    sec = _section(doc, "signals")
    signals = SignalsConfig(
        permutations=_take(sec, "signals", "permutations", int, 999),
        seed=_take(sec, "signals", "seed", int, 0),
        min_support=_take(sec, "signals", "min_support", int, 30),
    )
    _reject_unknown(sec, "signals")

    sec = _section(doc, "server")
    server = ServerConfig(
        host=_take(sec, "server", "host", str, "127.0.0.1"),
        port=_take(sec, "server", "port", int, 8765),
        open_enrollment=_take(sec, "server", "open_enrollment", bool, True),
        target_annotations=_take(sec, "server", "target_annotations", int, 2),
        lease_seconds=_take(sec, "server", "lease_seconds", int, 600),
    )
    _reject_unknown(sec, "server")

    return PipelineConfig(
        paths=paths,
        lexvar=lexvar,
        classifier=classifier,
        cohort=cohort,
        signals=signals,
        server=server,
        raw=json.loads(json.dumps(doc)),
        source_path=source_path,
    )


def load_config(path: str | Path, *, check_paths: bool = True) -> PipelineConfig:
    """Read and validate a config file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc, base_dir=p.parent, source_path=p,
                        check_paths=check_paths)
