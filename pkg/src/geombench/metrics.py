"""Embedding-space decision rules and per-condition aggregation.

Covers the three tasks: target/distractor distances for the memory task,
the greatest-mean-distance outlier rule for oddball displays, and
prototype-distance category judgments for construction concepts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .embeddings import EmbeddingTable
from .errors import GeombenchError


class MetricError(GeombenchError):
    pass


@dataclass(frozen=True)
class DmtsMetrics:
    target_id: str
    target_distractor_dist: float
    target_centroid_dist: float


@dataclass(frozen=True)
class OddballPrediction:
    trial_id: str
    predicted_slot: int
    correct: bool


@dataclass(frozen=True)
class ClassErrorRate:
    class_label: str
    error_rate: float
    n_trials: int
    regularity_score: float


@dataclass(frozen=True)
class ErrorCurve:
    """Per-class error rates sorted by descending regularity score."""

    entries: tuple

    def rates(self) -> np.ndarray:
        return np.array([e.error_rate for e in self.entries])

    def scores(self) -> np.ndarray:
        return np.array([e.regularity_score for e in self.entries])


@dataclass(frozen=True)
class GeoAccuracy:
    overall: float
    close: float
    far: float
    n_pairs: int


def _as_matrix(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise MetricError("expected a 2-D stack of vectors")
    return arr


def dmts_metrics(target, distractors, global_centroid, target_id: str = "") -> DmtsMetrics:
    """Distances from the target to its distractor centroid and to the
    stimulus-set centroid."""
    t = np.asarray(target, dtype=np.float64)
    d = _as_matrix(distractors)
    g = np.asarray(global_centroid, dtype=np.float64)
    if d.shape[1] != t.shape[0] or g.shape[0] != t.shape[0]:
        raise MetricError("dimension mismatch between target, distractors, centroid")
    dist_d = float(np.linalg.norm(t - d.mean(axis=0)))
    dist_g = float(np.linalg.norm(t - g))
    return DmtsMetrics(target_id, dist_d, dist_g)


def oddball_predict(vectors, rule: str = "mean") -> int:
    """Outlier slot of six vectors.

    rule 'mean': argmax of mean Euclidean distance to the other five
    (the default); rule 'centroid': argmax of distance to the centroid of
    the other five.  Ties break to the lowest slot index.
    """
    v = _as_matrix(vectors)
    if v.shape[0] != 6:
        raise MetricError(f"oddball displays have 6 slots, got {v.shape[0]}")
    if rule == "mean":
        diff = v[:, None, :] - v[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        score = dist.sum(axis=1) / 5.0
    elif rule == "centroid":
        total = v.sum(axis=0)
        score = np.empty(6)
        for i in range(6):
            others = (total - v[i]) / 5.0
            score[i] = np.linalg.norm(v[i] - others)
    else:
        raise ValueError(f"unknown outlier rule {rule!r}")
    return int(np.argmax(score))


def error_curve(trials, predictions, class_scores: dict) -> ErrorCurve:
    """Per-class error rates ordered by descending regularity score.

    ``trials`` need trial_id, class_label, oddball_slot; ``predictions``
    maps trial_id -> predicted slot.  Every trial must have a prediction.
    """
    tally: dict = {}
    for t in trials:
        if t.trial_id not in predictions:
            raise MetricError(f"missing prediction for trial {t.trial_id!r}")
        wrong = int(predictions[t.trial_id] != t.oddball_slot)
        n, w = tally.get(t.class_label, (0, 0))
        tally[t.class_label] = (n + 1, w + wrong)
    entries = []
    for label, (n, w) in tally.items():
        if label not in class_scores:
            raise MetricError(f"no regularity score for class {label!r}")
        entries.append(
            ClassErrorRate(label, w / n, n, float(class_scores[label]))
        )
    entries.sort(key=lambda e: (-e.regularity_score, e.class_label))
    return ErrorCurve(tuple(entries))


def geo_accuracy(trials, table: EmbeddingTable) -> GeoAccuracy:
    """Prototype-distance category judgments, overall and per condition.

    Per concept the prototype is the centroid of its reference embeddings.
    Matched pairs follow the builder's convention: positives sorted by id
    pair with (close, far) negatives in that order; a pair is correct iff
    the positive sits strictly closer to the prototype than the negative.
    """
    by_concept: dict = {}
    for t in trials:
        d = by_concept.setdefault(
            t.concept_id, {"refs": t.reference_ids, "pos": [], "neg": {}}
        )
        if t.label == "positive":
            d["pos"].append(t.test_id)
        else:
            d["neg"].setdefault(t.condition, []).append(t.test_id)
    results = {"close": [], "far": []}
    for cid in sorted(by_concept):
        d = by_concept[cid]
        try:
            proto = table.matrix(d["refs"]).astype(np.float64).mean(axis=0)
        except KeyError as err:
            raise MetricError(f"concept {cid}: {err}") from None
        positives = sorted(d["pos"])
        pairs = []
        k = 0
        for cond in ("close", "far"):
            for neg_id in sorted(d["neg"].get(cond, [])):
                if k >= len(positives):
                    raise MetricError(f"concept {cid}: more negatives than positives")
                pairs.append((positives[k], neg_id, cond))
                k += 1
        for pos_id, neg_id, cond in pairs:
            try:
                dp = float(np.linalg.norm(table.entries[pos_id].astype(np.float64) - proto))
                dn = float(np.linalg.norm(table.entries[neg_id].astype(np.float64) - proto))
            except KeyError as missing:
                raise MetricError(f"missing embedding {missing}") from None
            results[cond].append(dp < dn)
    n_pairs = len(results["close"]) + len(results["far"])
    if n_pairs == 0:
        raise MetricError("no matched pairs found")

    def rate(xs):
        return float(np.mean(xs)) if xs else float("nan")

    overall = float(np.mean(results["close"] + results["far"]))
    return GeoAccuracy(overall, rate(results["close"]), rate(results["far"]), n_pairs)
