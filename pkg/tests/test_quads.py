import math
import random

import numpy as np
import pytest

from geombench import quads
from geombench.quads import (
    CLASS_ORDER,
    CLASS_PROFILES,
    CLASS_SCORES,
    DegeneratePolygonError,
    PerturbationError,
    RegularityProfile,
    Tolerances,
    build_trials,
    make_quadrilateral,
    make_reference,
    perturb_oddball,
    regularity_profile,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class TestProfile:
    def test_unit_square(self):
        p = regularity_profile(UNIT_SQUARE)
        assert p == RegularityProfile(4, 2, 6, 6, 4)
        assert p.score == 22

    def test_isosceles_trapezoid_hand_coordinates(self):
        # parallel sides 2 and 1, equal legs; brute-force property check by hand:
        # no right angles, one parallel pair, one equal side pair (the legs),
        # two equal angle pairs (base pairs), one vertical mirror axis
        trap = np.array([[-1.0, 0.0], [1.0, 0.0], [0.5, 0.9], [-0.5, 0.9]])
        p = regularity_profile(trap)
        assert p == RegularityProfile(0, 1, 1, 2, 1)
        assert p.score == 5

    def test_rectangle(self):
        rect = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]])
        assert regularity_profile(rect) == RegularityProfile(4, 2, 2, 6, 2)

    def test_similarity_invariance_rotated_scaled_square(self):
        th = math.radians(31.0)
        rot = np.array(
            [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
        )
        transformed = (UNIT_SQUARE @ rot.T) * 1.7 + np.array([3.0, -2.0])
        assert regularity_profile(transformed) == regularity_profile(UNIT_SQUARE)

    def test_similarity_invariance_all_classes(self):
        rng = random.Random(99)
        for name in CLASS_ORDER:
            q = make_reference(name, seed=4)
            base = regularity_profile(q)
            for _ in range(20):
                th = rng.uniform(0, 2 * math.pi)
                s = rng.uniform(0.5, 2.0)
                rot = np.array(
                    [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
                )
                moved = (q.vertices @ rot.T) * s + np.array(
                    [rng.uniform(-3, 3), rng.uniform(-3, 3)]
                )
                assert regularity_profile(moved) == base, name

    def test_degenerate_rejected(self):
        flat = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 1e-12]])
        with pytest.raises(DegeneratePolygonError):
            regularity_profile(flat)

    def test_clockwise_input_reordered(self):
        cw = UNIT_SQUARE[::-1]
        assert regularity_profile(cw).score == 22


class TestReferences:
    @pytest.mark.parametrize("name", CLASS_ORDER)
    def test_profile_matches_class(self, name):
        for seed in range(8):
            q = make_reference(name, seed)
            assert regularity_profile(q) == CLASS_PROFILES[name]

    def test_square_any_seed(self):
        for seed in (0, 1, 17, 993):
            q = make_reference("square", seed)
            lengths = np.hypot(*np.diff(np.vstack([q.vertices, q.vertices[:1]]), axis=0).T)
            assert np.allclose(lengths, lengths[0])

    def test_random_class_score_zero(self):
        q = make_reference("random", seed=3)
        assert regularity_profile(q).score == 0

    def test_registry_order_matches_scores(self):
        scores = [CLASS_SCORES[c] for c in CLASS_ORDER]
        assert scores == sorted(scores, reverse=True)

    def test_canonical_pose(self):
        for name in CLASS_ORDER:
            v = make_reference(name, 0).vertices
            assert np.allclose(v.mean(axis=0), 0.0, atol=1e-12)
            span = v.max(axis=0) - v.min(axis=0)
            assert math.hypot(*span) == pytest.approx(1.0, abs=1e-12)

    def test_unknown_class(self):
        with pytest.raises(KeyError):
            make_reference("pentagon", 0)


class TestPerturb:
    def test_square_loses_right_angles(self):
        q = make_reference("square", 0)
        out, disp = perturb_oddball(q, 0.2, seed=5)
        p = regularity_profile(out)
        assert p.right_angles < 4
        assert p.score < 22
        assert np.linalg.norm(disp) == pytest.approx(0.2)

    def test_moves_lower_right_vertex(self):
        q = make_reference("square", 0)
        idx = quads._lower_right_index(q.vertices)
        key = q.vertices[:, 0] - q.vertices[:, 1]
        assert key[idx] == key.max()

    def test_sub_tolerance_delta_fails_for_regular(self):
        q = make_reference("square", 0)
        with pytest.raises(PerturbationError):
            perturb_oddball(q, 1e-9, seed=1)

    def test_sub_tolerance_delta_ok_for_random(self):
        q = make_reference("random", 7)
        out, _ = perturb_oddball(q, 1e-9, seed=1)
        assert regularity_profile(out).score == 0

    def test_monotonicity_seeded(self):
        # delta >= 0.05 must lower the score for every positive-score class
        for seed in range(40):
            for name in CLASS_ORDER:
                q = make_reference(name, seed)
                base = regularity_profile(q).score
                out, _ = perturb_oddball(q, 0.05, seed=seed)
                if base > 0:
                    assert regularity_profile(out).score < base


class TestTrials:
    def test_counts_and_structure(self):
        trials = build_trials(["square", "random"], 3, seed=1)
        assert len(trials) == 6
        for tr in trials:
            assert len(tr.slots) == 6
            assert 0 <= tr.oddball_slot <= 5

    def test_exactly_one_deviant_slot(self):
        for tr in build_trials(CLASS_ORDER, 1, seed=11):
            scores = [regularity_profile(s.vertices).score for s in tr.slots]
            ref_scores = [s for i, s in enumerate(scores) if i != tr.oddball_slot]
            assert len(set(ref_scores)) == 1
            if CLASS_SCORES[tr.class_label] > 0:
                assert scores[tr.oddball_slot] < ref_scores[0]

    def test_determinism(self):
        a = build_trials(CLASS_ORDER, 2, seed=77)
        b = build_trials(CLASS_ORDER, 2, seed=77)
        for ta, tb in zip(a, b):
            assert ta.trial_id == tb.trial_id
            assert ta.oddball_slot == tb.oddball_slot
            for sa, sb in zip(ta.slots, tb.slots):
                assert sa.rotation == sb.rotation
                assert np.array_equal(sa.vertices, sb.vertices)

    def test_slot_uniformity(self):
        trials = build_trials(["rhombus"], 600, seed=5)
        counts = np.bincount([t.oddball_slot for t in trials], minlength=6)
        # chi-square against uniform: 5 dof, 0.999 quantile ~= 20.5
        expected = len(trials) / 6
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        assert chi2 < 20.5

    def test_scale_and_rotation_ranges(self):
        for tr in build_trials(["kite"], 20, seed=9):
            for s in tr.slots:
                assert 0.0 <= s.rotation < 2 * math.pi
                assert 0.7 <= s.scale <= 1.3

    def test_all_emitted_polygons_simple_ccw(self):
        for tr in build_trials(CLASS_ORDER, 2, seed=13):
            for s in tr.slots:
                assert quads.is_simple(s.vertices)
                assert quads._signed_area(s.vertices) > 0

    def test_full_scale_trial_count(self):
        # the full run is 11 classes x 5455 trials; ids scale to that count
        assert len(CLASS_ORDER) * 5455 == 60_005
        trials = build_trials(CLASS_ORDER, 3, seed=1)
        assert len(trials) == len(CLASS_ORDER) * 3
        assert trials[-1].trial_id == f"odd-{len(trials) - 1:06d}"
