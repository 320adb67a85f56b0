"""Euclidean construction concepts: parse, realize, verify, and negate.

A concept is an ordered list of statements ``name [*] = constructor(args)``
over five constructors::

    point()                   free point
    point(on: obj)            point constrained to a line or circle
    point(isect: a, b, k)     k-th intersection of two objects
    line(p, q)                segment from p to q
    circle(c, t)              circle centered at c through t

``*`` marks invisible helpers.  Realizing a concept samples free parameters
on the unit canvas and solves intersections analytically; every constrained
point satisfies its parents to well under 1e-9.  Negatives either nudge one
constrained point off its locus by a bounded margin (close) or rewire one
relation entirely (far).
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._util import derive_seed
from .errors import GeombenchError


class GeoSyntaxError(GeombenchError):
    pass


class RealizationError(GeombenchError):
    pass


class NoEligibleEditError(GeombenchError):
    pass


# ---------------------------------------------------------------------------
# Concept AST


@dataclass(frozen=True)
class Statement:
    name: str
    starred: bool
    kind: str  # free | on | isect | line | circle
    args: tuple  # names; isect carries (a, b, index)

    def serialize(self) -> str:
        star = "*" if self.starred else ""
        if self.kind == "free":
            rhs = "point()"
        elif self.kind == "on":
            rhs = f"point(on: {self.args[0]})"
        elif self.kind == "isect":
            rhs = f"point(isect: {self.args[0]}, {self.args[1]}, {self.args[2]})"
        elif self.kind == "line":
            rhs = f"line({self.args[0]}, {self.args[1]})"
        elif self.kind == "circle":
            rhs = f"circle({self.args[0]}, {self.args[1]})"
        else:
            raise ValueError(self.kind)
        return f"{self.name}{star} = {rhs}"

    @property
    def is_point(self) -> bool:
        return self.kind in ("free", "on", "isect")


@dataclass(frozen=True)
class GeoConcept:
    statements: tuple

    def serialize(self) -> str:
        return "\n".join(s.serialize() for s in self.statements)

    @property
    def visible_names(self) -> tuple:
        return tuple(
            s.name for s in self.statements if not s.is_point and not s.starred
        )

    @property
    def constrained_points(self) -> tuple:
        return tuple(s.name for s in self.statements if s.kind in ("on", "isect"))

    def relation_multiset(self) -> tuple:
        """Sorted structural fingerprint of the concept's relations."""
        rels = []
        for s in self.statements:
            if s.kind in ("on", "isect", "line", "circle"):
                rels.append((s.kind,) + tuple(str(a) for a in s.args))
        return tuple(sorted(rels))


_STMT_RE = re.compile(
    r"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*(\*?)\s*=\s*"
    r"(point|line|circle)\s*\(\s*(.*?)\s*\)\s*$"
)


def _parse_statement(line: str, lineno: int) -> Statement:
    m = _STMT_RE.match(line)
    if m is None:
        raise GeoSyntaxError(f"line {lineno}: cannot parse statement {line!r}")
    name, star, ctor, body = m.group(1), m.group(2) == "*", m.group(3), m.group(4)
    if ctor == "point":
        if body == "":
            return Statement(name, star, "free", ())
        on = re.match(r"^on\s*:\s*([A-Za-z_][A-Za-z_0-9]*)$", body)
        if on:
            return Statement(name, star, "on", (on.group(1),))
        isect = re.match(
            r"^isect\s*:\s*([A-Za-z_][A-Za-z_0-9]*)\s*,\s*"
            r"([A-Za-z_][A-Za-z_0-9]*)\s*,\s*(\d+)$",
            body,
        )
        if isect:
            index = int(isect.group(3))
            if index not in (0, 1):
                raise GeoSyntaxError(f"line {lineno}: intersection index must be 0 or 1")
            return Statement(name, star, "isect", (isect.group(1), isect.group(2), index))
        raise GeoSyntaxError(f"line {lineno}: bad point arguments {body!r}")
    two = re.match(r"^([A-Za-z_][A-Za-z_0-9]*)\s*,\s*([A-Za-z_][A-Za-z_0-9]*)$", body)
    if not two:
        raise GeoSyntaxError(f"line {lineno}: {ctor} needs two point arguments")
    return Statement(name, star, ctor, (two.group(1), two.group(2)))


def parse_concept(text: str) -> GeoConcept:
    """Parse and validate a concept script ('#' comments, one statement per line)."""
    statements = []
    names = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        stmt = _parse_statement(line, lineno)
        if stmt.name in names:
            raise GeoSyntaxError(f"line {lineno}: duplicate name {stmt.name!r}")
        arg_names = stmt.args[:2] if stmt.kind == "isect" else stmt.args
        for arg in arg_names:
            if arg not in names:
                raise GeoSyntaxError(
                    f"line {lineno}: unknown reference {arg!r} (forward references "
                    f"are not allowed)"
                )
            ref = names[arg]
            if stmt.kind in ("line", "circle") and not ref.is_point:
                raise GeoSyntaxError(
                    f"line {lineno}: {stmt.kind} argument {arg!r} is not a point"
                )
            if stmt.kind in ("on", "isect") and ref.is_point:
                raise GeoSyntaxError(
                    f"line {lineno}: constraint parent {arg!r} must be a line or circle"
                )
        if stmt.kind in ("line", "circle") and stmt.args[0] == stmt.args[1]:
            raise GeoSyntaxError(f"line {lineno}: {stmt.kind} arguments must differ")
        names[stmt.name] = stmt
        statements.append(stmt)
    concept = GeoConcept(tuple(statements))
    if not concept.visible_names:
        raise GeoSyntaxError("concept has no visible objects")
    return concept


# ---------------------------------------------------------------------------
# Realized scenes


@dataclass(frozen=True)
class CanvasConfig:
    size: float = 1.0
    inset: float = 0.1
    min_radius: float = 0.02
    min_line: float = 0.02
    max_tries: int = 200
    # realizations jitter around anchored configurations so a concept's
    # instances form a coherent visual family; spread widens when tight
    # draws keep failing (see realize)
    base_spread: float = 0.3


# deterministic anchor positions for successive free points (canvas fractions)
_ANCHORS = (
    (0.34, 0.40),
    (0.68, 0.58),
    (0.48, 0.74),
    (0.30, 0.66),
    (0.70, 0.32),
    (0.52, 0.28),
    (0.26, 0.52),
    (0.74, 0.72),
)

_GOLDEN = 0.618033988749895


def _base_u(index: int) -> float:
    return (0.13 + _GOLDEN * index) % 1.0


@dataclass
class LineSeg:
    a: np.ndarray
    b: np.ndarray


@dataclass
class CircleObj:
    center: np.ndarray
    radius: float


@dataclass
class GeoScene:
    concept: GeoConcept
    points: dict  # name -> (2,) array
    objects: dict  # name -> LineSeg | CircleObj
    visible: dict  # name -> bool (lines/circles only)
    draws: dict  # name -> tuple of uniforms consumed by free/on points
    canvas: CanvasConfig
    spread: float = 1.0
    chord_tol: float = 1e-3

    def render_strokes(self):
        strokes = []
        for stmt in self.concept.statements:
            if stmt.is_point or not self.visible[stmt.name]:
                continue
            obj = self.objects[stmt.name]
            if isinstance(obj, LineSeg):
                strokes.append(np.vstack([obj.a, obj.b]))
            else:
                strokes.append(_circle_polyline(obj, self.chord_tol))
        return strokes


def _circle_polyline(c: CircleObj, chord_tol: float) -> np.ndarray:
    # sagitta r(1 - cos(step/2)) <= tol
    step = 2.0 * math.acos(max(0.0, 1.0 - chord_tol / max(c.radius, 1e-9)))
    n = max(12, int(math.ceil(2 * math.pi / max(step, 1e-6))))
    ang = np.linspace(0.0, 2 * math.pi, n + 1)
    return np.stack(
        [c.center[0] + c.radius * np.cos(ang), c.center[1] + c.radius * np.sin(ang)],
        axis=1,
    )


# ---------------------------------------------------------------------------
# Intersections (analytic; index ordering by parameter/angle)


def _line_dir(l: LineSeg) -> np.ndarray:
    return l.b - l.a


def intersections(obj1, obj2) -> list:
    """All intersection points, deterministically ordered.

    line-line: the single crossing (lines treated as infinite).
    line-circle: ordered by the line parameter t.
    circle-circle: ordered by angle around the first circle's center.
    """
    if isinstance(obj1, LineSeg) and isinstance(obj2, LineSeg):
        d1, d2 = _line_dir(obj1), _line_dir(obj2)
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        scale = max(np.hypot(*d1) * np.hypot(*d2), 1e-300)
        if abs(denom) < 1e-12 * scale:
            return []
        rel = obj2.a - obj1.a
        t = (rel[0] * d2[1] - rel[1] * d2[0]) / denom
        return [obj1.a + t * d1]
    if isinstance(obj1, LineSeg) and isinstance(obj2, CircleObj):
        return _line_circle(obj1, obj2)
    if isinstance(obj1, CircleObj) and isinstance(obj2, LineSeg):
        return _line_circle(obj2, obj1)
    c1, c2 = obj1, obj2
    d = c2.center - c1.center
    dist = float(np.hypot(*d))
    if dist < 1e-12:
        return []
    a = (dist * dist + c1.radius**2 - c2.radius**2) / (2 * dist)
    h2 = c1.radius**2 - a * a
    if h2 < 0:
        return []
    u = d / dist
    base = c1.center + a * u
    if h2 == 0.0:
        return [base]
    h = math.sqrt(h2)
    perp = np.array([-u[1], u[0]])
    p1, p2 = base + h * perp, base - h * perp

    def ang(p):
        return math.atan2(p[1] - c1.center[1], p[0] - c1.center[0]) % (2 * math.pi)

    return sorted([p1, p2], key=ang)


def _line_circle(l: LineSeg, c: CircleObj) -> list:
    d = _line_dir(l)
    f = l.a - c.center
    A = float(d @ d)
    B = 2.0 * float(f @ d)
    C = float(f @ f) - c.radius**2
    if A == 0.0:
        return []
    disc = B * B - 4 * A * C
    if disc < 0:
        return []
    if disc == 0.0:
        return [l.a + (-B / (2 * A)) * d]
    root = math.sqrt(disc)
    t1 = (-B - root) / (2 * A)
    t2 = (-B + root) / (2 * A)
    return [l.a + t1 * d, l.a + t2 * d]


def _residual_to(obj, p: np.ndarray) -> float:
    if isinstance(obj, LineSeg):
        d = _line_dir(obj)
        norm = float(np.hypot(*d))
        return abs((p[0] - obj.a[0]) * d[1] - (p[1] - obj.a[1]) * d[0]) / norm
    return abs(float(np.hypot(*(p - obj.center))) - obj.radius)


def _object_touches_canvas(obj, canvas: CanvasConfig) -> bool:
    lo, hi = 0.0, canvas.size
    if isinstance(obj, LineSeg):
        samples = obj.a + np.linspace(0, 1, 17)[:, None] * (obj.b - obj.a)
    else:
        ang = np.linspace(0, 2 * math.pi, 64, endpoint=False)
        samples = obj.center + obj.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    inside = (samples >= lo) & (samples <= hi)
    return bool(np.all(inside, axis=1).any())


# ---------------------------------------------------------------------------
# Realization


def _construct(
    concept: GeoConcept,
    canvas: CanvasConfig,
    draws: dict,
    overrides: Optional[dict] = None,
    spread: float = 1.0,
) -> GeoScene:
    """Deterministic construction pass from per-point uniform draws.

    ``draws`` maps free points to (u1, u2) and on-points to (u,); statements
    named in ``overrides`` take those coordinates verbatim and consume no
    draw.  ``spread`` in (0, 1] interpolates between anchored configurations
    (small) and fully uniform draws (1.0).  Raises RealizationError on any
    constraint/degeneracy violation.
    """
    points: dict = {}
    objects: dict = {}
    visible: dict = {}
    lo = canvas.inset * canvas.size
    hi = canvas.size - lo
    free_index = 0
    for stmt_index, stmt in enumerate(concept.statements):
        if overrides and stmt.name in overrides:
            if stmt.kind == "free":
                free_index += 1
            points[stmt.name] = np.asarray(overrides[stmt.name], dtype=np.float64)
            continue
        if stmt.kind == "free":
            u1, u2 = draws[stmt.name]
            ax, ay = _ANCHORS[free_index % len(_ANCHORS)]
            free_index += 1
            ux = (1.0 - spread) * ax + spread * u1
            uy = (1.0 - spread) * ay + spread * u2
            points[stmt.name] = np.array([lo + ux * (hi - lo), lo + uy * (hi - lo)])
        elif stmt.kind == "on":
            (u,) = draws[stmt.name]
            ue = ((1.0 - spread) * _base_u(stmt_index) + spread * u) % 1.0
            parent = objects[stmt.args[0]]
            if isinstance(parent, LineSeg):
                points[stmt.name] = parent.a + ue * (parent.b - parent.a)
            else:
                phi = 2 * math.pi * ue
                points[stmt.name] = parent.center + parent.radius * np.array(
                    [math.cos(phi), math.sin(phi)]
                )
        elif stmt.kind == "isect":
            sols = intersections(objects[stmt.args[0]], objects[stmt.args[1]])
            if len(sols) <= stmt.args[2]:
                raise RealizationError(
                    f"intersection {stmt.name!r} does not exist "
                    f"({stmt.args[0]}, {stmt.args[1]}, index {stmt.args[2]})"
                )
            points[stmt.name] = sols[stmt.args[2]]
        elif stmt.kind == "line":
            a, b = points[stmt.args[0]], points[stmt.args[1]]
            if float(np.hypot(*(b - a))) < canvas.min_line * canvas.size:
                raise RealizationError(f"degenerate line {stmt.name!r}")
            objects[stmt.name] = LineSeg(a.copy(), b.copy())
            visible[stmt.name] = not stmt.starred
        elif stmt.kind == "circle":
            c, t = points[stmt.args[0]], points[stmt.args[1]]
            r = float(np.hypot(*(t - c)))
            if r < canvas.min_radius * canvas.size:
                raise RealizationError(f"degenerate radius for {stmt.name!r}")
            objects[stmt.name] = CircleObj(c.copy(), r)
            visible[stmt.name] = not stmt.starred
    for name in (n for n, vis in visible.items() if vis):
        if not _object_touches_canvas(objects[name], canvas):
            raise RealizationError(f"visible object {name!r} misses the canvas")
    return GeoScene(concept, points, objects, visible, dict(draws), canvas, spread)


def _draw_uniforms(concept: GeoConcept, rng: random.Random) -> dict:
    draws = {}
    for stmt in concept.statements:
        if stmt.kind == "free":
            draws[stmt.name] = (rng.random(), rng.random())
        elif stmt.kind == "on":
            draws[stmt.name] = (rng.random(),)
    return draws


def _spread_for_attempt(canvas: CanvasConfig, attempt: int) -> float:
    # widen toward fully uniform draws if anchored ones keep failing
    if attempt < canvas.max_tries // 4:
        return canvas.base_spread
    if attempt < canvas.max_tries // 2:
        return min(1.0, 2 * canvas.base_spread)
    return 1.0


def realize(
    concept: GeoConcept,
    seed: int,
    canvas: CanvasConfig = CanvasConfig(),
    spread: Optional[float] = None,
) -> GeoScene:
    """Sample one concrete scene; rejection-resamples whole scenes (<= max_tries).

    ``spread`` pins the draw spread; by default anchored draws widen toward
    uniform as attempts fail.
    """
    last = None
    for attempt in range(canvas.max_tries):
        rng = random.Random(derive_seed(seed, "scene", attempt))
        s = _spread_for_attempt(canvas, attempt) if spread is None else spread
        try:
            return _construct(concept, canvas, _draw_uniforms(concept, rng), spread=s)
        except RealizationError as err:
            last = err
    raise RealizationError(f"realization failed after {canvas.max_tries} tries: {last}")


def verify_scene(concept: GeoConcept, scene: GeoScene, tol: float = 1e-9) -> list:
    """Independent constraint check by substitution.

    Returns (point name, residual) for every constrained point whose
    worst-parent residual exceeds ``tol``; an empty list means all
    constraints hold.
    """
    violations = []
    for stmt in concept.statements:
        if stmt.kind == "on":
            res = _residual_to(scene.objects[stmt.args[0]], scene.points[stmt.name])
        elif stmt.kind == "isect":
            res = max(
                _residual_to(scene.objects[stmt.args[0]], scene.points[stmt.name]),
                _residual_to(scene.objects[stmt.args[1]], scene.points[stmt.name]),
            )
        else:
            continue
        if res > tol:
            violations.append((stmt.name, res))
    return violations


# ---------------------------------------------------------------------------
# Negative synthesis


RHO_MIN_DEFAULT = 0.04
RHO_MAX_DEFAULT = 0.10


def make_negative(
    concept: GeoConcept,
    condition: str,
    seed: int,
    canvas: CanvasConfig = CanvasConfig(),
    rho_min: float = RHO_MIN_DEFAULT,
    rho_max: float = RHO_MAX_DEFAULT,
):
    """Synthesize a negative scene.

    close: one seeded constrained point is moved off its locus so that its
    own constraint is the only one violated and every parent residual lands
    in [rho_min, rho_max] (canvas fractions); downstream objects re-derive.
    far: one relation is rewired (intersection freed, or a line/circle
    argument retargeted), changing the relation multiset while preserving
    visible component counts.

    Returns (scene, edit description dict).
    """
    if condition == "close":
        return _make_close(concept, seed, canvas, rho_min, rho_max)
    if condition == "far":
        return _make_far(concept, seed, canvas, rho_max)
    raise ValueError(f"condition must be close or far, got {condition!r}")


def _make_close(concept, seed, canvas, rho_min, rho_max):
    eligible = concept.constrained_points
    if not eligible:
        raise NoEligibleEditError("close negatives need a constrained point")
    rng = random.Random(derive_seed(seed, "close"))
    target = eligible[rng.randrange(len(eligible))]
    base = realize(concept, derive_seed(seed, "base"))
    x0 = base.points[target]
    stmt = next(s for s in concept.statements if s.name == target)
    parents = stmt.args[:1] if stmt.kind == "on" else stmt.args[:2]
    lo_m = rho_min * canvas.size
    hi_m = rho_max * canvas.size
    for _ in range(64):
        m = rng.uniform(lo_m, hi_m)
        phi = rng.uniform(0.0, 2 * math.pi)
        newpos = x0 + m * np.array([math.cos(phi), math.sin(phi)])
        try:
            scene = _construct(
                concept, canvas, base.draws,
                overrides={target: newpos}, spread=base.spread,
            )
        except RealizationError:
            continue
        viols = verify_scene(concept, scene)
        if [v[0] for v in viols] != [target]:
            continue
        residuals = [_residual_to(scene.objects[p], newpos) for p in parents]
        if all(lo_m <= r <= hi_m + 1e-12 for r in residuals):
            return scene, {
                "condition": "close",
                "point": target,
                "offset": float(m),
                "residuals": [float(r) for r in residuals],
            }
    raise RealizationError(
        f"could not place a close negative for point {target!r} in 64 tries"
    )


def _scene_stats(scene: GeoScene):
    """Crude visible-geometry summary.

    Returns (stats, sizes): stats = [total length, ink centroid x/y, bbox
    span x/y] and sizes maps each visible object to its characteristic
    scale (segment length or circle radius).
    """
    total = 0.0
    cx = cy = 0.0
    los, his = [], []
    sizes = {}
    for stmt in scene.concept.statements:
        if stmt.is_point or not scene.visible[stmt.name]:
            continue
        obj = scene.objects[stmt.name]
        if isinstance(obj, LineSeg):
            length = float(np.hypot(*(obj.b - obj.a)))
            sizes[stmt.name] = length
            mid = (obj.a + obj.b) / 2
            los.append(np.minimum(obj.a, obj.b))
            his.append(np.maximum(obj.a, obj.b))
        else:
            length = 2 * math.pi * obj.radius
            sizes[stmt.name] = obj.radius
            mid = obj.center
            los.append(obj.center - obj.radius)
            his.append(obj.center + obj.radius)
        total += length
        cx += length * mid[0]
        cy += length * mid[1]
    lo = np.min(los, axis=0)
    hi = np.max(his, axis=0)
    stats = np.array([total, cx / total, cy / total, hi[0] - lo[0], hi[1] - lo[1]])
    return stats, sizes


def _make_far(concept, seed, canvas, rho_max):
    candidates = []
    names = [s.name for s in concept.statements]
    point_names = [s.name for s in concept.statements if s.is_point]
    for i, stmt in enumerate(concept.statements):
        if stmt.kind == "isect":
            candidates.append(("free", stmt.name, None, None))
        if stmt.kind in ("line", "circle"):
            earlier = set(point_names) & set(names[:i])
            for slot in (0, 1):
                for alt in sorted(earlier):
                    if alt != stmt.args[slot] and alt != stmt.args[1 - slot]:
                        candidates.append(("retarget", stmt.name, slot, alt))
    if not candidates:
        raise NoEligibleEditError("far negatives need at least one relation")
    # positive-family stat distribution, for judging structural displacement
    fam_stats, fam_sizes = [], []
    for i in range(8):
        try:
            st, sz = _scene_stats(realize(concept, derive_seed(seed, "family", i), canvas))
        except RealizationError:
            continue
        fam_stats.append(st)
        fam_sizes.append(sz)
    fam = np.array(fam_stats)
    mean = fam.mean(axis=0)
    std = fam.std(axis=0) + 0.02
    original_rels = concept.relation_multiset()
    best = None
    best_any = None
    for pick in range(len(candidates)):
        action, name, slot, alt = candidates[pick]
        rewired = _apply_rewire(concept, action, name, slot, alt)
        if rewired.relation_multiset() == original_rels:
            continue
        try:
            # far edits relocate parts anywhere, so realize at full spread
            scene = realize(rewired, derive_seed(seed, "farscene", pick), canvas, spread=1.0)
        except RealizationError:
            continue
        # a freed intersection must genuinely sit off its old loci
        if action == "free":
            viols = verify_scene(
                concept, _restate(scene, concept), tol=rho_max * canvas.size
            )
            if not viols:
                continue
        stats, sizes = _scene_stats(scene)
        # components must stay recognizable: each visible object's scale
        # within the positive family's range (the arrangement, not the
        # parts, is what a far negative changes)
        scale_ok = True
        for obj_name, size in sizes.items():
            fam_vals = [f[obj_name] for f in fam_sizes]
            if not (0.7 * min(fam_vals) <= size <= 1.4 * max(fam_vals)):
                scale_ok = False
                break
        arrangement = float(np.max(np.abs((stats[1:] - mean[1:]) / std[1:])))
        length_z = float((stats[0] - mean[0]) / std[0])
        edit = {
            "condition": "far",
            "edit": action,
            "object": name,
            "slot": slot,
            "new_arg": alt,
            "arrangement_deviation": arrangement,
        }
        key = (arrangement, -pick)
        if best_any is None or key > best_any[0]:
            best_any = (key, scene, edit)
        if scale_ok and length_z >= -1.0 and (best is None or key > best[0]):
            best = (key, scene, edit)
    chosen = best if best is not None else best_any
    if chosen is None:
        raise RealizationError("no far rewiring produced a realizable scene")
    return chosen[1], chosen[2]


def _apply_rewire(concept, action, name, slot, alt):
    statements = []
    for stmt in concept.statements:
        if stmt.name != name:
            statements.append(stmt)
        elif action == "free":
            statements.append(Statement(stmt.name, stmt.starred, "free", ()))
        else:
            args = list(stmt.args)
            args[slot] = alt
            statements.append(Statement(stmt.name, stmt.starred, stmt.kind, tuple(args)))
    return GeoConcept(tuple(statements))


def _restate(scene: GeoScene, concept: GeoConcept) -> GeoScene:
    """View a rewired scene through the original concept's statement list."""
    return GeoScene(
        concept,
        scene.points,
        scene.objects,
        scene.visible,
        scene.draws,
        scene.canvas,
        scene.chord_tol,
    )


# ---------------------------------------------------------------------------
# Bundled corpus and trials


def load_corpus() -> dict:
    """Bundled concept scripts, keyed 'elements/<name>' / 'constraints/<name>'."""
    from importlib import resources

    corpus = {}
    base = resources.files("geombench") / "concepts"
    for group in ("elements", "constraints"):
        folder = base / group
        for entry in sorted(folder.iterdir(), key=lambda e: e.name):
            if entry.name.endswith(".geo"):
                text = entry.read_text(encoding="utf-8")
                corpus[f"{group}/{entry.name[:-4]}"] = parse_concept(text)
    return corpus


@dataclass
class GeoTrial:
    concept_id: str
    reference_ids: tuple
    test_id: str
    label: str  # positive | negative
    condition: Optional[str]  # close | far; negatives only


def build_geo_trials(
    corpus: dict,
    n_ref: int = 5,
    seed: int = 0,
    canvas: CanvasConfig = CanvasConfig(),
    rho_min: float = RHO_MIN_DEFAULT,
    rho_max: float = RHO_MAX_DEFAULT,
    test_pairs: int = 1,
):
    """Realize references, positive tests, and close/far negatives per concept.

    Returns (trials, scenes, skipped) where scenes maps stimulus id to
    GeoScene and skipped lists (concept_id, reason) for concepts whose
    realization or negative synthesis failed.  Deterministic in all inputs.

    Pairing convention consumed by the evaluator: positive test k pairs with
    the close negative for even k and the far negative for odd k.
    """
    trials = []
    scenes = {}
    skipped = []
    for concept_id in sorted(corpus):
        concept = corpus[concept_id]
        cseed = derive_seed(seed, concept_id)
        try:
            ref_ids = []
            for i in range(n_ref):
                sid = f"{concept_id}/ref-{i}"
                scenes[sid] = realize(concept, derive_seed(cseed, "ref", i), canvas)
                ref_ids.append(sid)
            items = []
            for k in range(test_pairs):
                pos_ids = []
                for which in ("close", "far"):
                    pid = f"{concept_id}/pos-{which}-{k}"
                    scenes[pid] = realize(
                        concept, derive_seed(cseed, "pos", which, k), canvas
                    )
                    pos_ids.append((pid, which))
                for pid, which in pos_ids:
                    items.append((pid, "positive", None))
                for which in ("close", "far"):
                    nid = f"{concept_id}/neg-{which}-{k}"
                    scene = _negative_with_retries(
                        concept, which, derive_seed(cseed, "neg", which, k),
                        canvas, rho_min, rho_max,
                    )
                    scenes[nid] = scene
                    items.append((nid, "negative", which))
        except (RealizationError, NoEligibleEditError) as err:
            skipped.append((concept_id, str(err)))
            for key in [k for k in scenes if k.startswith(concept_id + "/")]:
                del scenes[key]
            continue
        ref_tuple = tuple(ref_ids)
        for sid, label, condition in items:
            trials.append(
                GeoTrial(
                    concept_id=concept_id,
                    reference_ids=ref_tuple,
                    test_id=sid,
                    label=label,
                    condition=condition,
                )
            )
    return trials, scenes, skipped


def _negative_with_retries(concept, condition, seed, canvas, rho_min, rho_max, tries=8):
    last = None
    for salt in range(tries):
        try:
            scene, _ = make_negative(
                concept, condition, derive_seed(seed, salt), canvas, rho_min, rho_max
            )
            return scene
        except (RealizationError, NoEligibleEditError) as err:
            last = err
    raise RealizationError(f"negative synthesis failed after {tries} seeds: {last}")
