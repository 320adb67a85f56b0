"""Regularity-graded quadrilaterals, their property profiles, and oddball trials.

Eleven shape classes run from perfect squares down to property-free random
quadrilaterals.  A regularity profile counts right angles, parallel side
pairs, equal side/angle pairs, and reflection axes; the per-class counts are
similarity invariants, so every member of a class shares one profile.
Oddball trials show five rotated/scaled copies of a reference plus one copy
whose most lower-right vertex has been displaced enough to break at least
one property.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from ._util import derive_seed
from .errors import GeombenchError


class DegeneratePolygonError(GeombenchError):
    pass


class PerturbationError(GeombenchError):
    pass


@dataclass(frozen=True)
class Tolerances:
    """Detection tolerances for the regularity predicates."""

    angle_deg: float = 0.5
    rel_len: float = 1e-3


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class RegularityProfile:
    right_angles: int
    parallel_pairs: int
    equal_side_pairs: int
    equal_angle_pairs: int
    symmetry_axes: int

    @property
    def score(self) -> int:
        return (
            self.right_angles
            + self.parallel_pairs
            + self.equal_side_pairs
            + self.equal_angle_pairs
            + self.symmetry_axes
        )


@dataclass
class Quadrilateral:
    """Four CCW vertices in canonical pose (centroid at origin, unit bbox diagonal)."""

    vertices: np.ndarray  # (4, 2) float64
    class_label: str = ""

    def render_strokes(self):
        closed = np.vstack([self.vertices, self.vertices[:1]])
        return [closed]


# ---------------------------------------------------------------------------
# Geometry helpers


def _signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _bbox_diag(verts: np.ndarray) -> float:
    span = verts.max(axis=0) - verts.min(axis=0)
    return float(math.hypot(span[0], span[1]))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def is_simple(verts: np.ndarray) -> bool:
    """Non-adjacent edges of the quadrilateral must not cross."""
    v = verts
    return not (
        _segments_cross(v[0], v[1], v[2], v[3])
        or _segments_cross(v[1], v[2], v[3], v[0])
    )


def _no_collinear(verts: np.ndarray, rel_tol: float = 1e-6) -> bool:
    diag = _bbox_diag(verts)
    for i in range(4):
        a, b, c = verts[i - 1], verts[i], verts[(i + 1) % 4]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) < rel_tol * diag * diag:
            return False
    return True


def canonical_pose(verts: np.ndarray) -> np.ndarray:
    """CCW order, vertex centroid at the origin, unit bounding-box diagonal."""
    v = np.asarray(verts, dtype=np.float64).copy()
    if v.shape != (4, 2):
        raise ValueError("expected 4 vertices")
    if _signed_area(v) < 0:
        v = v[::-1].copy()
    v -= v.mean(axis=0)
    diag = _bbox_diag(v)
    if diag <= 0:
        raise DegeneratePolygonError("zero-extent vertex set")
    v /= diag
    return v


def make_quadrilateral(verts, class_label: str = "") -> Quadrilateral:
    v = canonical_pose(np.asarray(verts, dtype=np.float64))
    if not is_simple(v):
        raise DegeneratePolygonError("self-intersecting polygon")
    if not _no_collinear(v):
        raise DegeneratePolygonError("three collinear vertices")
    if abs(_signed_area(v)) < 1e-9:
        raise DegeneratePolygonError("area below 1e-9")
    return Quadrilateral(vertices=v, class_label=class_label)


# ---------------------------------------------------------------------------
# Regularity profile


def _interior_angles(v: np.ndarray) -> np.ndarray:
    """Interior angles in degrees at each vertex of a CCW simple polygon."""
    angles = np.empty(4)
    for i in range(4):
        u = v[(i + 1) % 4] - v[i]
        w = v[i - 1] - v[i]
        ang = math.atan2(u[0] * w[1] - u[1] * w[0], u[0] * w[0] + u[1] * w[1])
        if ang < 0:
            ang += 2 * math.pi
        angles[i] = math.degrees(ang)
    return angles


def _line_angle_deg(d: np.ndarray) -> float:
    return math.degrees(math.atan2(d[1], d[0])) % 180.0


def _is_parallel(d1, d2, tol_deg: float) -> bool:
    diff = abs(_line_angle_deg(d1) - _line_angle_deg(d2))
    return min(diff, 180.0 - diff) <= tol_deg


def _reflect(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    norm2 = float(d @ d)
    rel = points - a
    t = (rel @ d) / norm2
    foot = a + np.outer(t, d)
    return 2 * foot - points


def _is_axis(v: np.ndarray, a: np.ndarray, b: np.ndarray, atol: float) -> bool:
    if float(np.hypot(*(b - a))) < 1e-12:
        return False
    refl = _reflect(v, a, b)
    # exact bijection over the 4 vertices (24 permutations is cheap)
    for perm in permutations(range(4)):
        if all(np.hypot(*(refl[i] - v[perm[i]])) <= atol for i in range(4)):
            return True
    return False


def regularity_profile(
    q: Quadrilateral | np.ndarray, tol: Tolerances = DEFAULT_TOL
) -> RegularityProfile:
    """Count the regularity properties of a quadrilateral.

    Similarity-invariant: the input is re-posed before measuring, and length
    comparisons are relative.  Degenerate polygons are rejected.
    """
    verts = q.vertices if isinstance(q, Quadrilateral) else np.asarray(q, float)
    v = canonical_pose(verts)
    if abs(_signed_area(v)) < 1e-9:
        raise DegeneratePolygonError("area below 1e-9")

    sides = np.array([v[(i + 1) % 4] - v[i] for i in range(4)])
    lengths = np.hypot(sides[:, 0], sides[:, 1])
    angles = _interior_angles(v)

    right = int(np.sum(np.abs(angles - 90.0) <= tol.angle_deg))
    parallel = sum(
        1 for i in (0, 1) if _is_parallel(sides[i], sides[i + 2], tol.angle_deg)
    )
    eq_sides = sum(
        1
        for i, j in combinations(range(4), 2)
        if abs(lengths[i] - lengths[j]) <= tol.rel_len * max(lengths[i], lengths[j])
    )
    eq_angles = sum(
        1
        for i, j in combinations(range(4), 2)
        if abs(angles[i] - angles[j]) <= tol.angle_deg
    )
    mids = np.array([(v[i] + v[(i + 1) % 4]) / 2 for i in range(4)])
    candidates = [(v[0], v[2]), (v[1], v[3]), (mids[0], mids[2]), (mids[1], mids[3])]
    # axis tolerance scales with the shape (canonical pose has unit diagonal)
    atol = tol.rel_len * _bbox_diag(v)
    axes = sum(1 for a, b in candidates if _is_axis(v, a, b, atol))

    return RegularityProfile(right, parallel, eq_sides, eq_angles, axes)


# ---------------------------------------------------------------------------
# Class registry

# declared order == descending profile score; ties share a score and are
# ordered by decreasing structural constraint
CLASS_ORDER = (
    "square",
    "rectangle",
    "rhombus",
    "parallelogram",
    "right-kite",
    "isosceles-trapezoid",
    "kite",
    "right-hinge",
    "trapezoid",
    "irregular",
    "random",
)

CLASS_PROFILES = {
    "square": RegularityProfile(4, 2, 6, 6, 4),
    "rectangle": RegularityProfile(4, 2, 2, 6, 2),
    "rhombus": RegularityProfile(0, 2, 6, 2, 2),
    "parallelogram": RegularityProfile(0, 2, 2, 2, 0),
    "right-kite": RegularityProfile(2, 0, 2, 1, 1),
    "isosceles-trapezoid": RegularityProfile(0, 1, 1, 2, 1),
    "kite": RegularityProfile(0, 0, 2, 1, 1),
    "right-hinge": RegularityProfile(1, 0, 0, 0, 0),
    "trapezoid": RegularityProfile(0, 1, 0, 0, 0),
    "irregular": RegularityProfile(0, 0, 0, 0, 0),
    "random": RegularityProfile(0, 0, 0, 0, 0),
}

CLASS_SCORES = {name: p.score for name, p in CLASS_PROFILES.items()}

# verified asymmetric template: every property margin sits far outside the
# detection tolerances
_IRREGULAR_TEMPLATE = np.array(
    [[0.0, 0.0], [1.9, 0.25], [1.4, 1.55], [0.25, 1.0]]
)

_MAX_REF_TRIES = 256


def _build_candidate(class_label: str, rng: random.Random) -> np.ndarray:
    if class_label == "square":
        return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    if class_label == "rectangle":
        r = rng.uniform(1.3, 2.2)
        return np.array([[0.0, 0.0], [r, 0.0], [r, 1.0], [0.0, 1.0]])
    if class_label == "rhombus":
        th = math.radians(rng.uniform(50.0, 75.0))
        c, s = math.cos(th), math.sin(th)
        return np.array([[0.0, 0.0], [1.0, 0.0], [1.0 + c, s], [c, s]])
    if class_label == "parallelogram":
        r = rng.uniform(1.4, 2.0)
        th = math.radians(rng.uniform(55.0, 75.0))
        c, s = math.cos(th), math.sin(th)
        return np.array([[0.0, 0.0], [r, 0.0], [r + c, s], [c, s]])
    if class_label == "isosceles-trapezoid":
        b2 = rng.uniform(0.8, 1.4)
        h = rng.uniform(0.7, 1.1)
        return np.array([[-1.0, 0.0], [1.0, 0.0], [b2 / 2, h], [-b2 / 2, h]])
    if class_label == "right-kite":
        # inscribed on a diameter: the two off-axis vertices get exact right angles
        phi = rng.uniform(0.56, 0.76) * math.pi / 2 + math.pi / 4
        c, s = math.cos(phi), math.sin(phi)
        return np.array([[-1.0, 0.0], [c, -s], [1.0, 0.0], [c, s]])
    if class_label == "kite":
        t = rng.uniform(0.15, 0.35) * rng.choice([-1.0, 1.0])
        h = rng.uniform(0.8, 1.2)
        return np.array([[-1.0, 0.0], [t, -h], [1.0, 0.0], [t, h]])
    if class_label == "right-hinge":
        a = rng.uniform(1.2, 1.8)
        b = rng.uniform(0.8, 1.1)
        x3 = rng.uniform(0.05, 0.35) * a
        y3 = rng.uniform(1.15, 1.6) * b
        return np.array([[0.0, 0.0], [a, 0.0], [a, b], [x3, y3]])
    if class_label == "trapezoid":
        b1 = rng.uniform(1.6, 2.0)
        b2 = rng.uniform(0.6, 1.0)
        x2 = rng.uniform(0.2, 0.8) * (b1 - b2)
        h = rng.uniform(0.7, 1.1)
        return np.array([[0.0, 0.0], [b1, 0.0], [x2 + b2, h], [x2, h]])
    if class_label == "irregular":
        return _IRREGULAR_TEMPLATE.copy()
    if class_label == "random":
        pts = np.array([[rng.random(), rng.random()] for _ in range(4)])
        center = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
        return pts[order]
    raise KeyError(f"unknown quadrilateral class {class_label!r}")


def make_reference(class_label: str, seed: int, tol: Tolerances = DEFAULT_TOL) -> Quadrilateral:
    """Construct a reference shape whose profile exactly matches its class."""
    if class_label not in CLASS_PROFILES:
        raise KeyError(f"unknown quadrilateral class {class_label!r}")
    expected = CLASS_PROFILES[class_label]
    rng = random.Random(derive_seed(seed, "ref", class_label))
    for _ in range(_MAX_REF_TRIES):
        try:
            q = make_quadrilateral(_build_candidate(class_label, rng), class_label)
        except DegeneratePolygonError:
            continue
        if abs(_signed_area(q.vertices)) < 0.04:  # reject slivers
            continue
        if regularity_profile(q, tol) == expected:
            return q
    raise GeombenchError(
        f"could not build a {class_label} matching its profile in {_MAX_REF_TRIES} tries"
    )


# ---------------------------------------------------------------------------
# Oddball perturbation and trials


def _lower_right_index(verts: np.ndarray) -> int:
    key = verts[:, 0] - verts[:, 1]
    best = np.flatnonzero(key == key.max())
    if len(best) > 1:  # tie: larger x wins
        best = best[np.argsort(verts[best, 0])][-1:]
    return int(best[0])


def perturb_oddball(
    q: Quadrilateral, delta: float, seed: int, tol: Tolerances = DEFAULT_TOL
):
    """Displace the most lower-right vertex to break regularity.

    Returns (perturbed quadrilateral, displacement vector applied in the
    reference's canonical frame).  The displacement magnitude is
    ``delta x bounding-box diagonal``; the direction is resampled (at most
    64 tries) until the result is simple and, for references with a positive
    profile score, strictly less regular.
    """
    if not (0.0 < delta <= 0.5):
        raise ValueError("delta must be in (0, 0.5]")
    rng = random.Random(derive_seed(seed, "perturb"))
    ref_score = regularity_profile(q, tol).score
    idx = _lower_right_index(q.vertices)
    magnitude = delta * _bbox_diag(q.vertices)
    for _ in range(64):
        phi = rng.uniform(0.0, 2 * math.pi)
        disp = magnitude * np.array([math.cos(phi), math.sin(phi)])
        cand = q.vertices.copy()
        cand[idx] += disp
        try:
            out = make_quadrilateral(cand, q.class_label)
        except DegeneratePolygonError:
            continue
        if ref_score > 0 and regularity_profile(out, tol).score >= ref_score:
            continue
        return out, disp
    raise PerturbationError(
        f"no perturbation of class {q.class_label!r} lowered the profile "
        f"score within 64 direction draws (delta={delta})"
    )


@dataclass(frozen=True)
class TrialConfig:
    rotation_range: tuple = (0.0, 2 * math.pi)
    scale_range: tuple = (0.7, 1.3)
    delta: float = 0.15
    max_trial_resamples: int = 16

    def as_dict(self) -> dict:
        return {
            "rotation_range": list(self.rotation_range),
            "scale_range": list(self.scale_range),
            "delta": self.delta,
        }


@dataclass
class TrialSlot:
    stim_id: str
    rotation: float
    scale: float
    vertices: np.ndarray  # transformed, ready to rasterize


@dataclass
class OddballTrial:
    trial_id: str
    class_label: str
    slots: list  # 6 TrialSlot, 2x3 grid order
    oddball_slot: int
    displacement: np.ndarray


def _transform(verts: np.ndarray, rotation: float, scale: float) -> np.ndarray:
    c, s = math.cos(rotation), math.sin(rotation)
    rot = np.array([[c, -s], [s, c]])
    return (verts @ rot.T) * scale


def build_trials(
    classes,
    trials_per_class: int,
    seed: int,
    cfg: TrialConfig = TrialConfig(),
    on_resample=None,
) -> list:
    """Construct oddball trials, deterministic in (classes, counts, seed, cfg).

    Each trial holds five independently rotated/scaled copies of one fresh
    reference and one equally transformed oddball in a uniformly random slot.
    Perturbation failures resample the whole trial (reported via
    ``on_resample`` when given).
    """
    trials = []
    index = 0
    for class_label in classes:
        for t in range(trials_per_class):
            trial_seed = derive_seed(seed, class_label, t)
            for attempt in range(cfg.max_trial_resamples):
                attempt_seed = derive_seed(trial_seed, attempt)
                try:
                    ref = make_reference(class_label, derive_seed(attempt_seed, "ref"))
                    odd, disp = perturb_oddball(
                        ref, cfg.delta, derive_seed(attempt_seed, "odd")
                    )
                except (PerturbationError, GeombenchError):
                    if on_resample is not None:
                        on_resample(class_label, t, attempt)
                    continue
                break
            else:
                raise PerturbationError(
                    f"trial construction failed for class {class_label!r} "
                    f"after {cfg.max_trial_resamples} resamples"
                )
            rng = random.Random(derive_seed(attempt_seed, "layout"))
            oddball_slot = rng.randrange(6)
            trial_id = f"odd-{index:06d}"
            slots = []
            for slot in range(6):
                rot = rng.uniform(*cfg.rotation_range)
                scale = rng.uniform(*cfg.scale_range)
                base = odd if slot == oddball_slot else ref
                slots.append(
                    TrialSlot(
                        stim_id=f"{trial_id}-{slot}",
                        rotation=rot,
                        scale=scale,
                        vertices=_transform(base.vertices, rot, scale),
                    )
                )
            trials.append(
                OddballTrial(
                    trial_id=trial_id,
                    class_label=class_label,
                    slots=slots,
                    oddball_slot=oddball_slot,
                    displacement=disp,
                )
            )
            index += 1
    return trials
