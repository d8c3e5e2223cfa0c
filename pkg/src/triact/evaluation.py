"""Metrics over prediction records: Top-k, mean class accuracy, clip score
aggregation, and hierarchy-consistency reporting."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .taxonomy import LEVELS, LabelTriple, Taxonomy, validate_triple


@dataclass
class PredictionRecord:
    clip_id: str
    scores: dict[str, np.ndarray]  # level -> post-softmax score vector
    truth: LabelTriple

    def truth_id(self, level: str) -> int:
        return getattr(self.truth, f"{level}_id")


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def top_k_accuracy(
    records: Sequence[PredictionRecord], level: str, k: int
) -> float:
    """Fraction of records whose true class is among the k best scores.

    Ties rank the lower class index first, so results are deterministic.
    """
    if not records:
        raise ValueError("no records")
    n_classes = len(records[0].scores[level])
    if not 1 <= k <= n_classes:
        raise ValueError(f"k must be in [1, {n_classes}], got {k}")
    hits = 0
    for rec in records:
        s = np.asarray(rec.scores[level])
        # stable sort of negated scores ranks equal scores by lower index
        order = np.argsort(-s, kind="stable")
        if rec.truth_id(level) in order[:k]:
            hits += 1
    return hits / len(records)


def mean_class_accuracy(records: Sequence[PredictionRecord], level: str) -> float:
    """Unweighted mean over classes of per-class top-1 recall.

    Classes with no test samples are excluded from the mean.
    """
    if not records:
        raise ValueError("no records")
    n_classes = len(records[0].scores[level])
    total = np.zeros(n_classes, dtype=np.int64)
    correct = np.zeros(n_classes, dtype=np.int64)
    for rec in records:
        truth = rec.truth_id(level)
        total[truth] += 1
        pred = int(np.argmax(rec.scores[level]))  # argmax takes the lowest index on ties
        if pred == truth:
            correct[truth] += 1
    present = total > 0
    if not present.any():
        raise ValueError("all classes empty")
    return float(np.mean(correct[present] / total[present]))


def aggregate_clips(score_vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of per-clip score vectors; preserves the simplex."""
    if len(score_vectors) < 1:
        raise ValueError("need at least one score vector")
    arr = [np.asarray(v, dtype=np.float64) for v in score_vectors]
    lengths = {v.shape for v in arr}
    if len(lengths) != 1:
        raise ValueError(f"score vectors differ in length: {lengths}")
    return np.mean(arr, axis=0)


def hierarchy_consistency_rate(
    records: Sequence[PredictionRecord], taxonomy: Taxonomy
) -> float:
    """Fraction of records whose per-level argmax triple obeys the hierarchy."""
    if not records:
        raise ValueError("no records")
    consistent = 0
    for rec in records:
        triple = LabelTriple(
            event_id=int(np.argmax(rec.scores["event"])),
            set_id=int(np.argmax(rec.scores["set"])),
            element_id=int(np.argmax(rec.scores["element"])),
        )
        if validate_triple(triple, taxonomy):
            consistent += 1
    return consistent / len(records)


def build_report(
    records: Sequence[PredictionRecord],
    taxonomy: Taxonomy,
    per_class: bool = False,
) -> dict:
    """Per-level Top-1/Top-5/Mean plus consistency rate as a plain dict."""
    report: dict = {"num_records": len(records), "levels": {}}
    counts = taxonomy.class_counts
    for level in LEVELS:
        k5 = min(5, counts[level])
        entry = {
            "top1": top_k_accuracy(records, level, 1),
            "top5": top_k_accuracy(records, level, k5),
            "top5_k": k5,
            "mean_class": mean_class_accuracy(records, level),
        }
        if per_class:
            n = counts[level]
            total = np.zeros(n, dtype=np.int64)
            correct = np.zeros(n, dtype=np.int64)
            for rec in records:
                truth = rec.truth_id(level)
                total[truth] += 1
                if int(np.argmax(rec.scores[level])) == truth:
                    correct[truth] += 1
            entry["per_class"] = [
                {
                    "class_id": i,
                    "name": taxonomy.nodes(level)[i].name,
                    "count": int(total[i]),
                    "accuracy": float(correct[i] / total[i]) if total[i] else None,
                }
                for i in range(n)
            ]
        report["levels"][level] = entry
    report["hierarchy_consistency_rate"] = hierarchy_consistency_rate(
        records, taxonomy
    )
    return report


def format_report(report: dict) -> str:
    lines = [
        f"{'level':<10} {'top-1':>8} {'top-5':>8} {'mean':>8}",
        "-" * 38,
    ]
    for level in LEVELS:
        e = report["levels"][level]
        lines.append(
            f"{level:<10} {e['top1']:>8.4f} {e['top5']:>8.4f} {e['mean_class']:>8.4f}"
        )
    lines.append("-" * 38)
    lines.append(
        f"hierarchy consistency: {report['hierarchy_consistency_rate']:.4f} "
        f"({report['num_records']} records)"
    )
    return "\n".join(lines)


def save_report(report: dict, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def save_per_class_data(report: dict, out_dir: str | Path) -> list[Path]:
    """Emit per-class accuracy bar data as one TSV per level."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for level in LEVELS:
        entry = report["levels"][level]
        if "per_class" not in entry:
            continue
        path = out_dir / f"per_class_{level}.tsv"
        lines = ["class_id\tname\tcount\taccuracy"]
        for item in entry["per_class"]:
            acc = "" if item["accuracy"] is None else f"{item['accuracy']:.6f}"
            lines.append(f"{item['class_id']}\t{item['name']}\t{item['count']}\t{acc}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written
