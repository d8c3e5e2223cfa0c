"""Shared test utilities: independent oracles and small builders.

The oracles deliberately avoid the library's own code paths: the loss
oracle evaluates the formula in arbitrary precision, the ranking oracle
sorts exhaustively, and the histogram classifier sees one frame at a
time.
"""

from __future__ import annotations

import numpy as np
from mpmath import mp

from triact.evaluation import PredictionRecord
from triact.taxonomy import LabelTriple, Taxonomy, build_taxonomy


def balanced_taxonomy(num_events: int, num_sets: int, num_elements: int) -> Taxonomy:
    """Contiguous-block parent assignment, like the synthetic generator."""
    records = [("event", i, f"e{i}", None) for i in range(num_events)]
    records += [
        ("set", i, f"s{i}", i * num_events // num_sets) for i in range(num_sets)
    ]
    records += [
        ("element", i, f"x{i}", i * num_sets // num_elements)
        for i in range(num_elements)
    ]
    return build_taxonomy(records)


def cross_entropy_oracle(logits, target: int, dps: int = 30) -> float:
    """-s_p + log(sum_j exp(s_j)) evaluated in arbitrary precision."""
    with mp.workdps(dps):
        total = mp.fsum(mp.exp(mp.mpf(float(s))) for s in logits)
        return float(mp.log(total) - mp.mpf(float(logits[target])))


def top_k_oracle(records, level: str, k: int) -> float:
    """Exhaustive sort-based ranking with ties broken by lower index."""
    hits = 0
    for rec in records:
        s = rec.scores[level]
        order = sorted(range(len(s)), key=lambda j: (-s[j], j))
        if rec.truth_id(level) in order[:k]:
            hits += 1
    return hits / len(records)


def mean_class_oracle(records, level: str) -> float:
    """Per-class tallies; classes without samples are left out."""
    totals: dict[int, int] = {}
    correct: dict[int, int] = {}
    for rec in records:
        truth = rec.truth_id(level)
        totals[truth] = totals.get(truth, 0) + 1
        s = rec.scores[level]
        pred = min(range(len(s)), key=lambda j: (-s[j], j))
        if pred == truth:
            correct[truth] = correct.get(truth, 0) + 1
    accs = [correct.get(c, 0) / n for c, n in totals.items()]
    return sum(accs) / len(accs)


def random_records(
    rng: np.random.Generator,
    taxonomy: Taxonomy,
    n: int,
    quantize: int | None = None,
) -> list[PredictionRecord]:
    """Random softmax-score records; quantizing scores forces ties."""
    counts = taxonomy.class_counts
    records = []
    for i in range(n):
        element = int(rng.integers(counts["element"]))
        set_id = taxonomy.element_parent[element]
        truth = LabelTriple(
            event_id=taxonomy.set_parent[set_id],
            set_id=set_id,
            element_id=element,
        )
        scores = {}
        for level in ("event", "set", "element"):
            raw = rng.random(counts[level])
            if quantize:
                raw = np.round(raw * quantize) / quantize
            total = raw.sum()
            scores[level] = raw / total if total > 0 else np.full_like(raw, 1 / len(raw))
        records.append(PredictionRecord(clip_id=f"clip{i}", scores=scores, truth=truth))
    return records


def frame_histogram(frame: np.ndarray, bins: int = 8) -> np.ndarray:
    """Normalized per-channel color histogram of one uint8 frame."""
    feats = [
        np.histogram(frame[..., c], bins=bins, range=(0, 256))[0]
        for c in range(frame.shape[-1])
    ]
    hist = np.concatenate(feats).astype(np.float64)
    return hist / hist.sum()


class HistogramCentroidClassifier:
    """Nearest-centroid over single-frame color histograms."""

    def __init__(self, bins: int = 8):
        self.bins = bins
        self.centroids: np.ndarray | None = None
        self.classes: list[int] = []

    def fit(self, frames: list[np.ndarray], labels: list[int]) -> None:
        by_class: dict[int, list[np.ndarray]] = {}
        for frame, label in zip(frames, labels):
            by_class.setdefault(label, []).append(frame_histogram(frame, self.bins))
        self.classes = sorted(by_class)
        self.centroids = np.stack(
            [np.mean(by_class[c], axis=0) for c in self.classes]
        )

    def predict(self, frame: np.ndarray) -> int:
        hist = frame_histogram(frame, self.bins)
        distances = np.linalg.norm(self.centroids - hist, axis=1)
        return self.classes[int(np.argmin(distances))]

    def accuracy(self, frames: list[np.ndarray], labels: list[int]) -> float:
        hits = sum(self.predict(f) == y for f, y in zip(frames, labels))
        return hits / len(labels)
