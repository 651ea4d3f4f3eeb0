"""Four-class post filtering: hashed linear baseline, fusion, evaluation.

The in-process baseline is multinomial logistic regression over hashed
word/character n-grams, trained by deterministic SGD on a class-weighted
cross-entropy. Heavyweight models stay external and plug in through the
newline-delimited scorer protocol in ExternalScorer.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import queue
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .annotation import LABEL_ORDER, LabelClass
from .errors import ContractError, FormatError, ScorerProtocolError

MODEL_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Features


@dataclass(frozen=True)
class FeatureConfig:
    hash_bits: int = 18
    word_ngram_max: int = 3
    char_ngram_min: int = 2
    char_ngram_max: int = 5
    hash_seed: int = 0

    def __post_init__(self) -> None:
        if not 4 <= self.hash_bits <= 30:
            raise ContractError(f"hash_bits out of range: {self.hash_bits}")

    @property
    def space(self) -> int:
        return 1 << self.hash_bits

    def to_json(self) -> dict:
        return {
            "hash_bits": self.hash_bits,
            "word_ngram_max": self.word_ngram_max,
            "char_ngram_min": self.char_ngram_min,
            "char_ngram_max": self.char_ngram_max,
            "hash_seed": self.hash_seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureConfig":
        return cls(**obj)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector: sorted unique hashed indices with log(1+tf) values."""

    indices: np.ndarray  # int64, sorted
    values: np.ndarray  # float64

    def __len__(self) -> int:
        return len(self.indices)


def _hash_ngram(kind: bytes, ngram: str, seed: int, mask: int) -> int:
    h = hashlib.blake2b(
        kind + ngram.encode("utf-8"),
        digest_size=8,
        key=seed.to_bytes(8, "little", signed=False),
    )
    return int.from_bytes(h.digest(), "little") & mask


def featurize(text: str, config: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Hash word 1..N-grams and char n-grams of normalized text.

    Collisions simply sum their counts; values are log(1 + tf) of the
    per-index totals. Empty text yields an empty (valid) vector.
    """
    mask = config.space - 1
    counts: dict[int, int] = {}

    words = text.split()
    for n in range(1, config.word_ngram_max + 1):
        for i in range(len(words) - n + 1):
            idx = _hash_ngram(b"w:", " ".join(words[i : i + n]), config.hash_seed, mask)
            counts[idx] = counts.get(idx, 0) + 1
    for n in range(config.char_ngram_min, config.char_ngram_max + 1):
        for i in range(len(text) - n + 1):
            idx = _hash_ngram(b"c:", text[i : i + n], config.hash_seed, mask)
            counts[idx] = counts.get(idx, 0) + 1

    if not counts:
        return FeatureVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0, dtype=np.float64)
        )
    indices = np.array(sorted(counts), dtype=np.int64)
    values = np.log1p(np.array([counts[i] for i in indices], dtype=np.float64))
    return FeatureVector(indices=indices, values=values)


# ---------------------------------------------------------------------------
# Model


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.1
    l2: float = 0.0
    class_weights: dict[LabelClass, float] | None = None
    seed: int = 0

    def weight_array(self) -> np.ndarray:
        out = np.ones(len(LABEL_ORDER), dtype=np.float64)
        if self.class_weights:
            for label, w in self.class_weights.items():
                out[LABEL_ORDER.index(label)] = float(w)
        return out


@dataclass
class LinearModel:
    weights: np.ndarray  # (4, space)
    bias: np.ndarray  # (4,)
    feature_config: FeatureConfig
    train_meta: dict = field(default_factory=dict)

    @property
    def classes(self) -> tuple[LabelClass, ...]:
        return LABEL_ORDER

    def logits(self, fv: FeatureVector) -> np.ndarray:
        if len(fv) and int(fv.indices[-1]) >= self.weights.shape[1]:
            raise ContractError("feature index outside the model's hash space")
        if len(fv) == 0:
            return self.bias.copy()
        return self.weights[:, fv.indices] @ fv.values + self.bias

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "classes": [c.value for c in self.classes],
            "feature_config": self.feature_config.to_json(),
            "train_meta": self.train_meta,
            "bias": _encode_array(self.bias),
            "weights": _encode_array(self.weights),
            "shape": list(self.weights.shape),
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LinearModel":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad model file {path}: {exc}") from None
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise FormatError(
                f"unsupported model format {payload.get('format_version')!r} in {path}"
            )
        if payload["classes"] != [c.value for c in LABEL_ORDER]:
            raise FormatError(f"model class list mismatch in {path}")
        shape = tuple(payload["shape"])
        return cls(
            weights=_decode_array(payload["weights"]).reshape(shape),
            bias=_decode_array(payload["bias"]),
            feature_config=FeatureConfig.from_json(payload["feature_config"]),
            train_meta=payload.get("train_meta", {}),
        )


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _decode_array(data: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="<f8").copy()


# ---------------------------------------------------------------------------
# Prediction


@dataclass(frozen=True)
class Prediction:
    post_id: str
    scores: dict[LabelClass, float]
    argmax: LabelClass

    @classmethod
    def from_scores(cls, post_id: str, scores: Mapping[LabelClass, float]) -> "Prediction":
        total = sum(scores.values())
        if not math.isfinite(total) or total <= 0:
            raise ContractError(f"scores not normalizable: {scores}")
        normalized = {c: float(scores[c]) / total for c in LABEL_ORDER}
        best = max(normalized.values())
        # exact ties resolve to the earliest class in declaration order
        argmax = next(c for c in LABEL_ORDER if normalized[c] == best)
        return cls(post_id=post_id, scores=normalized, argmax=argmax)

    def to_json(self) -> dict:
        return {
            "post_id": self.post_id,
            "scores": {c.value: self.scores[c] for c in LABEL_ORDER},
            "argmax": self.argmax.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Prediction":
        scores = {LabelClass.parse(k): float(v) for k, v in obj["scores"].items()}
        return cls.from_scores(obj["post_id"], scores)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    exps = np.exp(shifted)
    return exps / exps.sum()


def predict(model: LinearModel, fv: FeatureVector, post_id: str = "") -> Prediction:
    probs = softmax(model.logits(fv))
    return Prediction.from_scores(post_id, dict(zip(LABEL_ORDER, probs)))


# ---------------------------------------------------------------------------
# Training


def example_loss_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    fv: FeatureVector,
    label: LabelClass,
    class_weights: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted cross-entropy loss and its gradient for one example.

    Returns (loss, grad over the active columns with shape (4, nnz),
    grad_bias). This is the gradient the SGD loop applies and the one the
    finite-difference check validates.
    """
    logits = weights[:, fv.indices] @ fv.values + bias if len(fv) else bias.copy()
    probs = softmax(logits)
    y = LABEL_ORDER.index(label)
    cw = class_weights[y]
    loss = -cw * math.log(max(probs[y], 1e-300))
    delta = probs.copy()
    delta[y] -= 1.0
    delta *= cw
    grad_w = np.outer(delta, fv.values) if len(fv) else np.zeros((len(LABEL_ORDER), 0))
    return loss, grad_w, delta


def batch_loss_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    examples: Sequence[tuple[FeatureVector, LabelClass]],
    class_weights: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean weighted cross-entropy over a batch, with dense gradients."""
    total = 0.0
    grad_w = np.zeros_like(weights)
    grad_b = np.zeros_like(bias)
    for fv, label in examples:
        loss, gw, gb = example_loss_grad(weights, bias, fv, label, class_weights)
        total += loss
        if len(fv):
            np.add.at(grad_w, (slice(None), fv.indices), gw)
        grad_b += gb
    n = len(examples)
    return total / n, grad_w / n, grad_b / n


def train(
    examples: Sequence[tuple[FeatureVector, LabelClass]],
    config: TrainConfig = TrainConfig(),
    feature_config: FeatureConfig = FeatureConfig(),
) -> LinearModel:
    """Fit the 4-class model by SGD; deterministic for a fixed seed.

    L2 decay is applied to the features present in each example (the usual
    sparse-update shortcut). Per-epoch mean losses are recorded in
    ``train_meta["epoch_losses"]``.
    """
    if not examples:
        raise ContractError("empty training set")
    seen = {label for _, label in examples}
    if len(seen) < 2:
        raise ContractError("training set must contain >= 2 classes")

    cw = config.weight_array()
    rng = np.random.default_rng(config.seed)
    weights = np.zeros((len(LABEL_ORDER), feature_config.space), dtype=np.float64)
    bias = np.zeros(len(LABEL_ORDER), dtype=np.float64)
    decay = 1.0 - config.learning_rate * config.l2

    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for i in order:
            fv, label = examples[i]
            loss, grad_w, grad_b = example_loss_grad(weights, bias, fv, label, cw)
            epoch_loss += loss
            if len(fv):
                if config.l2 > 0.0:
                    weights[:, fv.indices] *= decay
                weights[:, fv.indices] -= config.learning_rate * grad_w
            bias -= config.learning_rate * grad_b
        epoch_losses.append(epoch_loss / len(examples))

    meta = {
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "l2": config.l2,
        "class_weights": {c.value: float(w) for c, w in zip(LABEL_ORDER, cw)},
        "seed": config.seed,
        "epoch_losses": epoch_losses,
        "n_examples": len(examples),
    }
    return LinearModel(weights=weights, bias=bias, feature_config=feature_config,
                       train_meta=meta)


# ---------------------------------------------------------------------------
# Fusion


def fuse(predictions: Sequence[Prediction], strategy: str = "mean") -> Prediction:
    """Combine k models' predictions for one post."""
    if not predictions:
        raise ContractError("fuse requires >= 1 prediction")
    post_ids = {p.post_id for p in predictions}
    if len(post_ids) != 1:
        raise ContractError(f"fuse saw mixed post_ids: {sorted(post_ids)}")
    if len(predictions) == 1:
        return predictions[0]

    if strategy == "mean":
        mean_scores = {
            c: sum(p.scores[c] for p in predictions) / len(predictions)
            for c in LABEL_ORDER
        }
        return Prediction.from_scores(predictions[0].post_id, mean_scores)
    if strategy == "majority":
        votes: dict[LabelClass, int] = {}
        for p in predictions:
            votes[p.argmax] = votes.get(p.argmax, 0) + 1
        best = max(votes.values())
        winners = [c for c in LABEL_ORDER if votes.get(c, 0) == best]
        if len(winners) == 1:
            winner = winners[0]
        else:
            mean_scores = {
                c: sum(p.scores[c] for p in predictions) / len(predictions)
                for c in winners
            }
            top = max(mean_scores.values())
            winner = next(c for c in winners if mean_scores[c] == top)
        # keep score mass informative: report the mean scores, but force the
        # vote winner to be the argmax by construction
        scores = {
            c: sum(p.scores[c] for p in predictions) / len(predictions)
            for c in LABEL_ORDER
        }
        fused = Prediction.from_scores(predictions[0].post_id, scores)
        if fused.argmax is winner:
            return fused
        return Prediction(post_id=fused.post_id, scores=fused.scores, argmax=winner)
    raise ContractError(f"unknown fusion strategy: {strategy!r}")


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_class: dict[LabelClass, ClassMetrics]
    macro_f1: float
    accuracy: float
    confusion: np.ndarray  # rows = gold, cols = predicted
    n: int

    @property
    def minority(self) -> ClassMetrics:
        return self.per_class[LabelClass.NONMEDICAL_USE]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {
                c.value: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for c, m in self.per_class.items()
            },
            "confusion": self.confusion.tolist(),
            "minority_class": LabelClass.NONMEDICAL_USE.value,
        }

    def summary(self) -> str:
        lines = [f"n={self.n} accuracy={self.accuracy:.4f} macro_f1={self.macro_f1:.4f}"]
        for c, m in self.per_class.items():
            marker = "  <-- minority class" if c is LabelClass.NONMEDICAL_USE else ""
            lines.append(
                f"{c.value:<16} P={m.precision:.4f} R={m.recall:.4f} "
                f"F1={m.f1:.4f} support={m.support}{marker}"
            )
        return "\n".join(lines)


def evaluate(
    predictions: Iterable[Prediction], gold: Mapping[str, LabelClass]
) -> EvalReport:
    """Per-class precision/recall/F1 against gold labels (0/0 counts as 0)."""
    preds = list(predictions)
    if not preds:
        raise ContractError("evaluate requires >= 1 prediction")
    k = len(LABEL_ORDER)
    confusion = np.zeros((k, k), dtype=np.int64)
    for p in preds:
        if p.post_id not in gold:
            raise ContractError(f"no gold label for post {p.post_id!r}")
        g = LABEL_ORDER.index(gold[p.post_id])
        confusion[g, LABEL_ORDER.index(p.argmax)] += 1

    per_class: dict[LabelClass, ClassMetrics] = {}
    for i, c in enumerate(LABEL_ORDER):
        tp = int(confusion[i, i])
        fp = int(confusion[:, i].sum()) - tp
        fn = int(confusion[i, :].sum()) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = ClassMetrics(precision, recall, f1, support=tp + fn)

    n = len(preds)
    accuracy = float(np.trace(confusion)) / n
    macro_f1 = sum(m.f1 for m in per_class.values()) / k
    return EvalReport(per_class=per_class, macro_f1=macro_f1, accuracy=accuracy,
                      confusion=confusion, n=n)


# ---------------------------------------------------------------------------
# External scorer adapter

SCORE_KEYS = tuple(c.value for c in LABEL_ORDER)
SCORE_SUM_TOLERANCE = 1e-3


class ExternalScorer:
    """Adapter for out-of-process models speaking the line protocol.

    Requests are newline-delimited JSON objects ``{"id", "text"}``; replies
    are ``{"id", "scores": {class: float, ...}}`` in any order. Replies
    whose scores deviate from sum 1 by <= 1e-3 are renormalized; larger
    deviations are protocol errors.
    """

    def __init__(self, write_line, reader_queue: "queue.Queue[str | None]",
                 close, timeout: float = 30.0):
        self._write_line = write_line
        self._queue = reader_queue
        self._close = close
        self.timeout = timeout

    # -- constructors

    @classmethod
    def subprocess(cls, argv: Sequence[str], timeout: float = 30.0) -> "ExternalScorer":
        proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )
        q: queue.Queue[str | None] = queue.Queue()

        def pump() -> None:
            assert proc.stdout is not None
            for line in proc.stdout:
                q.put(line.rstrip("\n"))
            q.put(None)

        threading.Thread(target=pump, daemon=True).start()

        def write_line(line: str) -> None:
            assert proc.stdin is not None
            proc.stdin.write(line + "\n")
            proc.stdin.flush()

        def close() -> None:
            if proc.stdin:
                proc.stdin.close()
            proc.terminate()
            proc.wait(timeout=5)

        return cls(write_line, q, close, timeout)

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 30.0) -> "ExternalScorer":
        sock = socket.create_connection((host, port), timeout=10.0)
        rfile = sock.makefile("r", encoding="utf-8")
        wfile = sock.makefile("w", encoding="utf-8")
        q: queue.Queue[str | None] = queue.Queue()

        def pump() -> None:
            try:
                for line in rfile:
                    q.put(line.rstrip("\n"))
            except (OSError, ValueError):
                pass  # socket timed out or was closed under us
            q.put(None)

        threading.Thread(target=pump, daemon=True).start()

        def write_line(line: str) -> None:
            wfile.write(line + "\n")
            wfile.flush()

        def close() -> None:
            sock.close()

        return cls(write_line, q, close, timeout)

    # -- protocol

    def score(self, batch: Sequence[tuple[str, str]]) -> list[Prediction]:
        """Score [(post_id, text), ...]; returns predictions in input order."""
        if not batch:
            return []
        ids = [pid for pid, _ in batch]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate post ids in scorer batch")
        for pid, text in batch:
            self._write_line(json.dumps({"id": pid, "text": text}))

        import time

        deadline = time.monotonic() + self.timeout
        replies: dict[str, dict[LabelClass, float]] = {}
        while len(replies) < len(batch):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ScorerProtocolError(
                    f"scorer timed out; missing ids: {sorted(set(ids) - set(replies))}"
                )
            try:
                line = self._queue.get(timeout=remaining)
            except queue.Empty:
                raise ScorerProtocolError(
                    f"scorer timed out; missing ids: {sorted(set(ids) - set(replies))}"
                ) from None
            if line is None:
                missing = sorted(set(ids) - set(replies))
                raise ScorerProtocolError(
                    f"scorer stream ended; missing ids: {missing}"
                )
            replies.update([self._parse_reply(line, set(ids))])

        return [Prediction.from_scores(pid, replies[pid]) for pid in ids]

    @staticmethod
    def _parse_reply(line: str, expected_ids: set[str]) -> tuple[str, dict[LabelClass, float]]:
        try:
            obj = json.loads(line)
            pid = obj["id"]
            raw = obj["scores"]
            scores = {LabelClass(k): float(raw[k]) for k in SCORE_KEYS}
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ScorerProtocolError(f"malformed scorer reply: {line!r}") from None
        if pid not in expected_ids:
            raise ScorerProtocolError(f"unexpected id in scorer reply: {pid!r}")
        total = sum(scores.values())
        if any(v < 0 or not math.isfinite(v) for v in scores.values()):
            raise ScorerProtocolError(f"invalid score values in reply for {pid!r}")
        if abs(total - 1.0) > SCORE_SUM_TOLERANCE:
            raise ScorerProtocolError(
                f"scores for {pid!r} sum to {total:.6f}, outside tolerance"
            )
        return pid, {c: v / total for c, v in scores.items()}

    def close(self) -> None:
        self._close()

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def external_score(
    batch: Sequence[tuple[str, str]], scorer: ExternalScorer
) -> list[Prediction]:
    return scorer.score(batch)


# ---------------------------------------------------------------------------
# Labeled data files (train/eval input format)


def read_labeled_jsonl(path: str | Path) -> list[tuple[str, str, LabelClass]]:
    """Read (id, text, label) rows from a JSONL file of labeled posts."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["id"]), str(obj["text"]),
                            LabelClass.parse(obj["label"])))
            except (json.JSONDecodeError, KeyError, ContractError) as exc:
                raise FormatError(f"bad labeled row: {exc}", line=lineno) from None
    return out
