"""Confusion matrix, the four headline metrics, audit files and keyword mining.

The positive class defaults to REAL news (label 0): a true positive is a
real item predicted real, a false positive is a fake item predicted real.
The convention is carried on the ConfusionMatrix and can be flipped.
Undefined metrics (zero denominators) surface as None, never as a silent 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .corpus import Dataset
from .errors import ValidationError
from .preprocess import default_stopwords

POSITIVE_CLASSES = ("real", "fake")
BUCKETS = ("tp", "tn", "fp", "fn")
UNDEFINED_CELL = "—"  # em dash rendered for undefined metric cells


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int
    positive_class: str = "real"

    def __post_init__(self) -> None:
        if self.positive_class not in POSITIVE_CLASSES:
            raise ValidationError(f"positive_class must be one of {POSITIVE_CLASSES}")
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self) -> "ConfusionMatrix":
        other = "fake" if self.positive_class == "real" else "real"
        return ConfusionMatrix(self.tn, self.tp, self.fn, self.fp, other)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    confusion: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {
                "tp": self.confusion.tp,
                "tn": self.confusion.tn,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "positive_class": self.confusion.positive_class,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricsReport":
        cm = ConfusionMatrix(**raw["confusion"])
        return cls(
            accuracy=raw["accuracy"],
            precision=raw.get("precision"),
            recall=raw.get("recall"),
            f1=raw.get("f1"),
            confusion=cm,
        )


def _positive_label(positive_class: str) -> int:
    if positive_class not in POSITIVE_CLASSES:
        raise ValidationError(f"positive_class must be one of {POSITIVE_CLASSES}")
    return 0 if positive_class == "real" else 1


def bucket_of(truth: int, pred: int, positive_class: str = "real") -> str:
    pos = _positive_label(positive_class)
    if truth == pos:
        return "tp" if pred == pos else "fn"
    return "fp" if pred == pos else "tn"


def confusion(
    pred: Sequence[int], truth: Sequence[int], positive_class: str = "real"
) -> ConfusionMatrix:
    if len(pred) != len(truth):
        raise ValidationError(f"length mismatch: {len(pred)} predictions vs {len(truth)} labels")
    if not pred:
        raise ValidationError("cannot build a confusion matrix from zero examples")
    counts = Counter()
    for p, y in zip(pred, truth):
        if p not in (0, 1) or y not in (0, 1):
            raise ValidationError(f"labels must be 0 or 1, got pred={p!r}, truth={y!r}")
        counts[bucket_of(y, p, positive_class)] += 1
    return ConfusionMatrix(
        tp=counts["tp"], tn=counts["tn"], fp=counts["fp"], fn=counts["fn"],
        positive_class=positive_class,
    )


def f1_score(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    """Harmonic mean, or None when either input is undefined or both are zero."""
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise ValidationError("metrics are undefined for an empty confusion matrix")
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None
    return MetricsReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        confusion=cm,
    )


@dataclass(frozen=True)
class AuditRecord:
    id: str
    text: str
    true_label: int
    predicted_label: int
    confidence: float
    bucket: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "true_label": self.true_label,
            "predicted_label": self.predicted_label,
            "confidence": self.confidence,
            "bucket": self.bucket.upper(),
        }


def export_audit(
    dataset: Dataset,
    predictions: Sequence[int],
    confidences: Sequence[float],
    out_dir: str | Path,
    positive_class: str = "real",
) -> ConfusionMatrix:
    """Write every document to exactly one of tp/tn/fp/fn.jsonl.

    The four files partition the evaluation set; returns the matching
    confusion matrix so callers can cross-check counts.
    """
    n = len(dataset.documents)
    if len(predictions) != n or len(confidences) != n:
        raise ValidationError(
            f"misaligned audit inputs: {n} documents, {len(predictions)} predictions, "
            f"{len(confidences)} confidences"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    files = {}
    try:
        for bucket in BUCKETS:
            files[bucket] = open(out_dir / f"{bucket}.jsonl", "w", encoding="utf-8")
        for doc, pred, conf in zip(dataset.documents, predictions, confidences):
            bucket = bucket_of(doc.label, pred, positive_class)
            record = AuditRecord(doc.id, doc.text, doc.label, pred, float(conf), bucket)
            files[bucket].write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
    finally:
        for f in files.values():
            f.close()
    return confusion(list(predictions), dataset.labels(), positive_class)


@dataclass(frozen=True)
class KeywordReport:
    tp_keywords: tuple[tuple[str, float], ...]
    tn_keywords: tuple[tuple[str, float], ...]
    alpha: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "tp": [[t, s] for t, s in self.tp_keywords],
            "tn": [[t, s] for t, s in self.tn_keywords],
        }


def _token_counts(texts: Iterable[str], stopset: frozenset[str]) -> tuple[Counter, int]:
    counts: Counter = Counter()
    total = 0
    for text in texts:
        for tok in text.split():
            if tok in stopset:
                continue
            counts[tok] += 1
            total += 1
    return counts, total


def extract_keywords(
    tp_texts: Sequence[str],
    tn_texts: Sequence[str],
    top_k: int = 10,
    alpha: float = 0.5,
    stopwords: Optional[Iterable[str]] = None,
) -> KeywordReport:
    """Contrastive keywords via smoothed log-odds between the two text sets.

    score(token) = log((c1 + a) / (N1 - c1 + a)) - log((c2 + a) / (N2 - c2 + a))
    with c = occurrences on one side and N = side total.  The TP list ranks
    by descending score, the TN list by descending negated score; both are
    therefore monotonically non-increasing.
    """
    if alpha <= 0:
        raise ValidationError(f"smoothing alpha must be positive, got {alpha}")
    if not tp_texts or not tn_texts:
        raise ValidationError("keyword extraction needs non-empty text sets on both sides")
    stopset = frozenset(default_stopwords() if stopwords is None else stopwords)
    c1, n1 = _token_counts(tp_texts, stopset)
    c2, n2 = _token_counts(tn_texts, stopset)

    scores: dict[str, float] = {}
    for tok in set(c1) | set(c2):
        a = math.log((c1[tok] + alpha) / (n1 - c1[tok] + alpha))
        b = math.log((c2[tok] + alpha) / (n2 - c2[tok] + alpha))
        scores[tok] = a - b

    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    tp_side = tuple(ranked[:top_k])
    tn_side = tuple((t, -s) for t, s in sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))[:top_k])
    return KeywordReport(tp_keywords=tp_side, tn_keywords=tn_side, alpha=alpha)


def _format_cell(value: Optional[float]) -> str:
    return UNDEFINED_CELL if value is None else f"{100.0 * value:.1f}%"


def comparison_report(
    runs: Sequence[tuple[str, MetricsReport]], fmt: str = "markdown"
) -> str:
    """Tabulate runs (input order preserved) as markdown or CSV.

    Columns: Model, Accuracy, Precision, Recall, F-score; percentages to
    one decimal; undefined metrics render as an em dash.
    """
    if not runs:
        raise ValidationError("comparison_report needs at least one run")
    if fmt not in ("markdown", "csv"):
        raise ValidationError(f"unknown report format {fmt!r}")
    header = ["Model", "Accuracy", "Precision", "Recall", "F-score"]
    rows = [
        [name, _format_cell(r.accuracy), _format_cell(r.precision),
         _format_cell(r.recall), _format_cell(r.f1)]
        for name, r in runs
    ]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"
