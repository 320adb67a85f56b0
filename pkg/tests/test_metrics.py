import math

import numpy as np
import pytest

from geombench import quads
from geombench.embeddings import EmbeddingTable
from geombench.geoclidean import GeoTrial
from geombench.metrics import (
    ErrorCurve,
    MetricError,
    dmts_metrics,
    error_curve,
    geo_accuracy,
    oddball_predict,
)


class TestDmtsMetrics:
    def test_distractor_centroid_zero(self):
        target = np.array([1.0, 0.0])
        distractors = np.array([[0, 0], [2, 0], [0, 0], [2, 0], [1, 0]], dtype=float)
        m = dmts_metrics(target, distractors, np.array([5.0, 5.0]))
        assert m.target_distractor_dist == 0.0

    def test_global_centroid_zero(self):
        t = np.array([2.0, 3.0])
        d = np.eye(2)[[0, 0, 1, 1, 0]].astype(float)
        m = dmts_metrics(t, d, t)
        assert m.target_centroid_dist == 0.0

    def test_matches_direct_recompute(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            t = rng.normal(size=8)
            d = rng.normal(size=(5, 8))
            g = rng.normal(size=8)
            m = dmts_metrics(t, d, g)
            assert m.target_distractor_dist == pytest.approx(
                math.sqrt(np.sum((t - d.mean(axis=0)) ** 2)), abs=1e-12
            )
            assert m.target_centroid_dist == pytest.approx(
                math.sqrt(np.sum((t - g) ** 2)), abs=1e-12
            )

    def test_scale_equivariance(self):
        rng = np.random.default_rng(7)
        t = rng.normal(size=4)
        d = rng.normal(size=(5, 4))
        g = rng.normal(size=4)
        base = dmts_metrics(t, d, g)
        scaled = dmts_metrics(3.0 * t, 3.0 * d, 3.0 * g)
        assert scaled.target_distractor_dist == pytest.approx(
            3.0 * base.target_distractor_dist, rel=1e-12
        )
        assert scaled.target_centroid_dist == pytest.approx(
            3.0 * base.target_centroid_dist, rel=1e-12
        )

    def test_dim_mismatch(self):
        with pytest.raises(MetricError):
            dmts_metrics(np.zeros(3), np.zeros((5, 4)), np.zeros(3))


class TestOddballPredict:
    def test_planted_outlier(self):
        v = np.zeros((6, 4))
        v[3, 0] = 10.0
        assert oddball_predict(v) == 3

    def test_all_identical_tie_break(self):
        assert oddball_predict(np.ones((6, 5))) == 0

    def test_brute_force_oracle_planted(self):
        rng = np.random.default_rng(8)
        hits = 0
        for _ in range(1000):
            cluster = rng.normal(0, 1.0, size=(6, 16))
            slot = rng.integers(0, 6)
            direction = rng.normal(size=16)
            direction /= np.linalg.norm(direction)
            cluster[slot] += 5.0 * 4.0 * direction  # 5x the cluster radius scale
            pred = oddball_predict(cluster)
            # oracle: brute-force argmax over candidate slots of summed distance
            sums = [
                sum(np.linalg.norm(cluster[i] - cluster[j]) for j in range(6) if j != i)
                for i in range(6)
            ]
            assert pred == int(np.argmax(sums))
            hits += pred == slot
        assert hits == 1000

    def test_invariances(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            v = rng.normal(size=(6, 8))
            base = oddball_predict(v)
            shift = rng.normal(size=8)
            assert oddball_predict(v + shift) == base
            q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
            assert oddball_predict(v @ q) == base
            assert oddball_predict(v * 2.7) == base

    def test_centroid_rule(self):
        v = np.zeros((6, 3))
        v[2, 1] = 4.0
        assert oddball_predict(v, rule="centroid") == 2
        with pytest.raises(ValueError):
            oddball_predict(v, rule="median")

    def test_six_slots_required(self):
        with pytest.raises(MetricError):
            oddball_predict(np.zeros((5, 3)))


class _Trial:
    def __init__(self, trial_id, class_label, oddball_slot):
        self.trial_id = trial_id
        self.class_label = class_label
        self.oddball_slot = oddball_slot


class TestErrorCurve:
    def test_all_correct(self):
        trials = [_Trial(f"t{i}", "square", i % 6) for i in range(12)]
        preds = {t.trial_id: t.oddball_slot for t in trials}
        curve = error_curve(trials, preds, {"square": 22})
        assert curve.entries[0].error_rate == 0.0

    def test_counting_fixture(self):
        trials = [_Trial(f"t{i}", "kite", 2) for i in range(10)]
        preds = {f"t{i}": (2 if i >= 3 else 0) for i in range(10)}
        curve = error_curve(trials, preds, {"kite": 4})
        assert curve.entries[0].error_rate == pytest.approx(0.3)
        assert curve.entries[0].n_trials == 10

    def test_sorted_by_descending_score(self):
        trials = [
            _Trial("a", "random", 0),
            _Trial("b", "square", 1),
            _Trial("c", "kite", 2),
        ]
        preds = {"a": 0, "b": 1, "c": 0}
        curve = error_curve(trials, preds, quads.CLASS_SCORES)
        labels = [e.class_label for e in curve.entries]
        assert labels == ["square", "kite", "random"]

    def test_uniform_random_binomial(self):
        rng = np.random.default_rng(10)
        trials = [_Trial(f"t{i}", "rhombus", int(rng.integers(0, 6))) for i in range(5455)]
        preds = {t.trial_id: int(rng.integers(0, 6)) for t in trials}
        curve = error_curve(trials, preds, {"rhombus": 12})
        rate = curve.entries[0].error_rate
        p = 5.0 / 6.0
        ci = 4.0 * math.sqrt(p * (1 - p) / 5455)
        assert abs(rate - p) < ci

    def test_missing_prediction(self):
        with pytest.raises(MetricError):
            error_curve([_Trial("t0", "square", 0)], {}, {"square": 22})


def _geo_trials_fixture():
    refs = ("c/ref-0", "c/ref-1")
    trials = [
        GeoTrial("c", refs, "c/pos-close-0", "positive", None),
        GeoTrial("c", refs, "c/pos-far-0", "positive", None),
        GeoTrial("c", refs, "c/neg-close-0", "negative", "close"),
        GeoTrial("c", refs, "c/neg-far-0", "negative", "far"),
    ]
    return refs, trials


class TestGeoAccuracy:
    def test_synthetic_negatives_at_double_distance(self):
        refs, trials = _geo_trials_fixture()
        proto = np.array([1.0, 1.0], dtype=np.float32)
        entries = {
            refs[0]: proto,
            refs[1]: proto,
            "c/pos-close-0": proto + np.array([0.5, 0.0], dtype=np.float32),
            "c/pos-far-0": proto + np.array([0.5, 0.0], dtype=np.float32),
            "c/neg-close-0": proto + np.array([1.0, 0.0], dtype=np.float32),
            "c/neg-far-0": proto + np.array([1.0, 0.0], dtype=np.float32),
        }
        table = EmbeddingTable("t", 2, entries)
        acc = geo_accuracy(trials, table)
        assert acc.overall == 1.0
        assert acc.close == 1.0 and acc.far == 1.0

    def test_equidistant_scored_incorrect(self):
        refs, trials = _geo_trials_fixture()
        proto = np.zeros(2, dtype=np.float32)
        off = np.array([1.0, 0.0], dtype=np.float32)
        entries = {
            refs[0]: proto,
            refs[1]: proto,
            "c/pos-close-0": off,
            "c/pos-far-0": off,
            "c/neg-close-0": off,
            "c/neg-far-0": -off,
        }
        acc = geo_accuracy(trials, EmbeddingTable("t", 2, entries))
        assert acc.close == 0.0  # tie: strict inequality required
        assert acc.far == 0.0

    def test_translation_invariance(self):
        refs, trials = _geo_trials_fixture()
        rng = np.random.default_rng(11)
        entries = {
            sid: rng.normal(size=4).astype(np.float32)
            for sid in [refs[0], refs[1], "c/pos-close-0", "c/pos-far-0",
                        "c/neg-close-0", "c/neg-far-0"]
        }
        base = geo_accuracy(trials, EmbeddingTable("t", 4, entries))
        shift = rng.normal(size=4).astype(np.float32)
        moved = {k: v + shift for k, v in entries.items()}
        out = geo_accuracy(trials, EmbeddingTable("t", 4, moved))
        assert (base.close, base.far) == (out.close, out.far)

    def test_missing_embedding(self):
        refs, trials = _geo_trials_fixture()
        table = EmbeddingTable("t", 2, {refs[0]: np.zeros(2, dtype=np.float32)})
        with pytest.raises(MetricError):
            geo_accuracy(trials, table)
