"""Stroke-program DSL: parse, execute, measure, and sample drawing programs.

A program is a small AST over five node kinds::

    P := line | turn(<num>) | arc(<num>) | concat(P, P) | repeat(<int>, P)

Executing a program runs a turtle that starts at the origin heading 0
degrees; ``line`` draws a unit segment, ``turn`` rotates in place, ``arc``
draws a unit-radius arc subtending its angle, ``concat`` sequences and
``repeat`` unrolls.  Program complexity is the token count of the AST
(``mdl``); the sampler canonicalizes draws before recording them so that
token counts are not inflated by trivially compressible forms.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from .errors import GeombenchError

Node = Union["Line", "Turn", "Arc", "Concat", "Repeat"]

MAX_DEPTH_DEFAULT = 12
REPEAT_MIN, REPEAT_MAX = 2, 9


class LotSyntaxError(GeombenchError):
    """Malformed program text; carries the offending character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class LotInvariantError(GeombenchError):
    """Structurally valid parse that violates a program invariant."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} (at node {path})")
        self.path = path


class SamplerExhausted(GeombenchError):
    """Deduplication could not reach the requested count within budget."""


@dataclass(frozen=True)
class Line:
    pass


@dataclass(frozen=True)
class Turn:
    angle: float


@dataclass(frozen=True)
class Arc:
    angle: float


@dataclass(frozen=True)
class Concat:
    left: Node
    right: Node


@dataclass(frozen=True)
class Repeat:
    count: int
    body: Node


@dataclass(frozen=True)
class LotProgram:
    """A validated drawing program."""

    root: Node

    def serialize(self) -> str:
        return serialize(self.root)


@dataclass(frozen=True)
class MdlValue:
    """Program complexity as an AST token count."""

    tokens: int


@dataclass
class Trace:
    """Executed pen path: polylines in canonical units plus final turtle state."""

    strokes: list  # list of (N,2) float64 arrays, each N >= 2
    end_position: tuple
    end_heading: float

    def render_strokes(self):
        return self.strokes

    def tobytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(s).tobytes() for s in self.strokes)


# ---------------------------------------------------------------------------
# Parsing and serialization


_TOKEN_RE = re.compile(r"\s*(line|turn|arc|concat|repeat|\(|\)|,|-?\d+(?:\.\d+)?)")


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise LotSyntaxError(f"unexpected character {text[bad]!r}", bad)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list, text_len: int):
        self.tokens = tokens
        self.i = 0
        self.text_len = text_len

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, self.text_len)

    def take(self, expected: Optional[str] = None):
        tok, pos = self.peek()
        if tok is None:
            raise LotSyntaxError("unexpected end of input", pos)
        if expected is not None and tok != expected:
            raise LotSyntaxError(f"expected {expected!r}, found {tok!r}", pos)
        self.i += 1
        return tok, pos

    def number(self) -> float:
        tok, pos = self.take()
        try:
            return float(tok)
        except ValueError:
            raise LotSyntaxError(f"expected a number, found {tok!r}", pos) from None

    def expr(self) -> Node:
        tok, pos = self.take()
        if tok == "line":
            return Line()
        if tok == "turn":
            self.take("(")
            angle = self.number()
            self.take(")")
            return Turn(angle)
        if tok == "arc":
            self.take("(")
            angle = self.number()
            self.take(")")
            return Arc(angle)
        if tok == "concat":
            self.take("(")
            left = self.expr()
            self.take(",")
            right = self.expr()
            self.take(")")
            return Concat(left, right)
        if tok == "repeat":
            self.take("(")
            count_tok, count_pos = self.take()
            try:
                count = int(count_tok)
            except ValueError:
                raise LotSyntaxError(
                    f"repeat count must be an integer, found {count_tok!r}", count_pos
                ) from None
            self.take(",")
            body = self.expr()
            self.take(")")
            return Repeat(count, body)
        raise LotSyntaxError(f"expected a program, found {tok!r}", pos)


def _validate(node: Node, path: str, depth: int, max_depth: int) -> int:
    """Check invariants; returns the subtree depth."""
    if depth > max_depth:
        raise LotInvariantError(f"depth exceeds maximum {max_depth}", path)
    if isinstance(node, Line):
        return 1
    if isinstance(node, (Turn, Arc)):
        a = node.angle
        if not (-180.0 < a <= 180.0):
            raise LotInvariantError(f"angle {a} outside (-180, 180]", path)
        if a == 0.0:
            raise LotInvariantError("angle must be nonzero", path)
        return 1
    if isinstance(node, Concat):
        dl = _validate(node.left, path + ".left", depth + 1, max_depth)
        dr = _validate(node.right, path + ".right", depth + 1, max_depth)
        return 1 + max(dl, dr)
    if isinstance(node, Repeat):
        if not (REPEAT_MIN <= node.count <= REPEAT_MAX):
            raise LotInvariantError(
                f"repeat count {node.count} outside [{REPEAT_MIN}, {REPEAT_MAX}]", path
            )
        return 1 + _validate(node.body, path + ".body", depth + 1, max_depth)
    raise LotInvariantError(f"unknown node type {type(node).__name__}", path)


def validate(node: Node, max_depth: int = MAX_DEPTH_DEFAULT) -> LotProgram:
    _validate(node, "root", 1, max_depth)
    return LotProgram(node)


def parse_program(text: str, max_depth: int = MAX_DEPTH_DEFAULT) -> LotProgram:
    """Parse program text into a validated AST.

    Raises LotSyntaxError (with position) on bad syntax and
    LotInvariantError (with node path) on invariant violations.
    """
    parser = _Parser(_tokenize(text), len(text))
    root = parser.expr()
    tok, pos = parser.peek()
    if tok is not None:
        raise LotSyntaxError(f"trailing input {tok!r}", pos)
    return validate(root, max_depth)


def _fmt_num(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def serialize(node: Node) -> str:
    """Canonical text form; parse(serialize(n)) reproduces n exactly."""
    if isinstance(node, Line):
        return "line"
    if isinstance(node, Turn):
        return f"turn({_fmt_num(node.angle)})"
    if isinstance(node, Arc):
        return f"arc({_fmt_num(node.angle)})"
    if isinstance(node, Concat):
        return f"concat({serialize(node.left)}, {serialize(node.right)})"
    if isinstance(node, Repeat):
        return f"repeat({node.count}, {serialize(node.body)})"
    raise TypeError(f"not a program node: {type(node).__name__}")


# ---------------------------------------------------------------------------
# Execution (turtle semantics)

CHORD_TOL_DEFAULT = 1e-3


def _arc_points(pos, heading_deg, angle_deg, chord_tol):
    """Points along a unit-radius arc, excluding the start point.

    The arc center sits one unit to the turtle's left for positive angles
    and to its right for negative ones; heading advances by the angle.
    """
    sign = 1.0 if angle_deg > 0 else -1.0
    h = math.radians(heading_deg)
    center = (pos[0] + math.cos(h + sign * math.pi / 2.0),
              pos[1] + math.sin(h + sign * math.pi / 2.0))
    alpha0 = heading_deg - sign * 90.0
    # chord sagitta 1 - cos(step/2) <= tol bounds the flattening step
    max_step = math.degrees(2.0 * math.acos(max(0.0, 1.0 - chord_tol)))
    n = max(1, math.ceil(abs(angle_deg) / max_step))
    pts = []
    for i in range(1, n + 1):
        a = math.radians(alpha0 + angle_deg * i / n)
        pts.append((center[0] + math.cos(a), center[1] + math.sin(a)))
    return pts


def execute(program: LotProgram, chord_tol: float = CHORD_TOL_DEFAULT) -> Trace:
    """Run the turtle. Pure: identical programs yield identical trace bytes."""
    pos = (0.0, 0.0)
    heading = 0.0
    points: list = []  # current polyline, shared start appended lazily

    def emit_start():
        if not points:
            points.append(pos)

    def run(node: Node):
        nonlocal pos, heading
        if isinstance(node, Line):
            emit_start()
            h = math.radians(heading)
            pos = (pos[0] + math.cos(h), pos[1] + math.sin(h))
            points.append(pos)
        elif isinstance(node, Turn):
            heading += node.angle
        elif isinstance(node, Arc):
            emit_start()
            for p in _arc_points(pos, heading, node.angle, chord_tol):
                points.append(p)
            pos = points[-1]
            heading += node.angle
        elif isinstance(node, Concat):
            run(node.left)
            run(node.right)
        elif isinstance(node, Repeat):
            for _ in range(node.count):
                run(node.body)
        else:  # pragma: no cover - validated upstream
            raise TypeError(type(node).__name__)

    run(program.root)
    strokes = []
    if len(points) >= 2:
        strokes.append(np.asarray(points, dtype=np.float64))
    return Trace(strokes=strokes, end_position=pos, end_heading=heading)


# ---------------------------------------------------------------------------
# Complexity


def mdl(program: Union[LotProgram, Node]) -> MdlValue:
    """Token count: line=1, turn/arc=2, concat=1+children, repeat=2+body."""
    node = program.root if isinstance(program, LotProgram) else program

    def count(n: Node) -> int:
        if isinstance(n, Line):
            return 1
        if isinstance(n, (Turn, Arc)):
            return 2
        if isinstance(n, Concat):
            return 1 + count(n.left) + count(n.right)
        if isinstance(n, Repeat):
            return 2 + count(n.body)
        raise TypeError(type(n).__name__)

    return MdlValue(count(node))


# ---------------------------------------------------------------------------
# Canonicalization


def _norm_angle(a: float) -> float:
    a = math.fmod(a, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


class CanonicalizeError(GeombenchError):
    """The program reduces to nothing (e.g. turns cancelling to zero)."""


def _flatten_concat(node: Node) -> list:
    if isinstance(node, Concat):
        return _flatten_concat(node.left) + _flatten_concat(node.right)
    return [node]


def _rebuild_chain(atoms: list) -> Node:
    if not atoms:
        raise CanonicalizeError("program canonicalizes to an empty chain")
    node = atoms[-1]
    for atom in reversed(atoms[:-1]):
        node = Concat(atom, node)
    return node


def _merge_turns(atoms: list) -> list:
    out: list = []
    for atom in atoms:
        if isinstance(atom, Turn) and out and isinstance(out[-1], Turn):
            merged = _norm_angle(out[-1].angle + atom.angle)
            out.pop()
            if merged != 0.0:
                out.append(Turn(merged))
        elif isinstance(atom, Turn):
            a = _norm_angle(atom.angle)
            if a != 0.0:
                out.append(Turn(a))
        else:
            out.append(atom)
    return out


def _chain_tokens(atoms: list) -> int:
    return sum(mdl(a).tokens for a in atoms) + max(0, len(atoms) - 1)


def _best_lift(atoms: list):
    """Most token-saving (start, block_len, reps) run of identical blocks."""
    n = len(atoms)
    keys = [serialize(a) for a in atoms]
    best = None  # (savings, start, length) with deterministic tie-breaks
    for length in range(1, n // 2 + 1):
        start = 0
        while start + 2 * length <= n:
            reps = 1
            while (
                start + (reps + 1) * length <= n
                and keys[start + reps * length : start + (reps + 1) * length]
                == keys[start : start + length]
            ):
                reps += 1
            reps = min(reps, REPEAT_MAX)
            if reps >= REPEAT_MIN:
                block = atoms[start : start + length]
                before = _chain_tokens(block) * reps + (reps - 1)
                lifted = 2 + _chain_tokens(block)
                savings = before - lifted
                cand = (savings, -start, -length, reps)
                if savings > 0 and (best is None or cand > best[0]):
                    best = (cand, start, length, reps)
                start += 1
            else:
                start += 1
    return best


def canonicalize(program: Union[LotProgram, Node], max_depth: int = MAX_DEPTH_DEFAULT) -> LotProgram:
    """Normalize a program: merge adjacent turns, drop zero turns, and lift
    consecutive identical blocks into repeat nodes when that saves tokens.

    Raises CanonicalizeError if the program reduces to nothing.
    """
    root = program.root if isinstance(program, LotProgram) else program

    def canon(node: Node) -> Optional[Node]:
        if isinstance(node, Line):
            return node
        if isinstance(node, Turn):
            a = _norm_angle(node.angle)
            return Turn(a) if a != 0.0 else None
        if isinstance(node, Arc):
            return node
        if isinstance(node, Repeat):
            body = canon(node.body)
            if body is None:
                return None
            return Repeat(node.count, body)
        if isinstance(node, Concat):
            # flatten the whole chain before canonicalizing atoms, so block
            # lifting sees maximal runs rather than committing per-subtree
            atoms = []
            for raw in _flatten_concat(node):
                c = canon(raw)
                if c is None:
                    continue
                atoms.extend(_flatten_concat(c))
            atoms = _merge_turns(atoms)
            while True:
                lift = _best_lift(atoms)
                if lift is None:
                    break
                _, start, length, reps = lift
                block = atoms[start : start + length]
                body = _rebuild_chain(block)
                atoms = atoms[:start] + [Repeat(reps, body)] + atoms[start + reps * length :]
                atoms = _merge_turns(atoms)
            if not atoms:
                return None
            return _rebuild_chain(atoms)
        raise TypeError(type(node).__name__)

    out = canon(root)
    if out is None:
        raise CanonicalizeError("program canonicalizes to nothing")
    return validate(out, max_depth)


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class SamplerConfig:
    """Distribution over programs drawn by ``sample_programs``."""

    max_depth: int = MAX_DEPTH_DEFAULT
    angles: tuple = (30.0, 45.0, 60.0, 90.0, 120.0)
    p_line: float = 0.26
    p_turn: float = 0.16
    p_arc: float = 0.14
    p_concat: float = 0.28
    p_repeat: float = 0.16
    max_draw_factor: int = 100

    def as_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "angles": list(self.angles),
            "p_line": self.p_line,
            "p_turn": self.p_turn,
            "p_arc": self.p_arc,
            "p_concat": self.p_concat,
            "p_repeat": self.p_repeat,
        }


def _draws_ink(node: Node) -> bool:
    if isinstance(node, (Line, Arc)):
        return True
    if isinstance(node, Turn):
        return False
    if isinstance(node, Concat):
        return _draws_ink(node.left) or _draws_ink(node.right)
    if isinstance(node, Repeat):
        return _draws_ink(node.body)
    raise TypeError(type(node).__name__)


def _draw_node(rng: random.Random, cfg: SamplerConfig, budget: int) -> Node:
    kinds = ["line", "turn", "arc", "concat", "repeat"]
    weights = [cfg.p_line, cfg.p_turn, cfg.p_arc, cfg.p_concat, cfg.p_repeat]
    if budget <= 1:
        kinds, weights = kinds[:3], weights[:3]
    kind = rng.choices(kinds, weights=weights, k=1)[0]
    if kind == "line":
        return Line()
    if kind in ("turn", "arc"):
        angle = rng.choice(cfg.angles)
        if rng.random() < 0.5:
            angle = -angle
        return Turn(angle) if kind == "turn" else Arc(angle)
    if kind == "concat":
        return Concat(_draw_node(rng, cfg, budget - 1), _draw_node(rng, cfg, budget - 1))
    return Repeat(rng.randint(REPEAT_MIN, REPEAT_MAX), _draw_node(rng, cfg, budget - 1))


def sample_programs(
    n: int, seed: int, cfg: SamplerConfig = SamplerConfig()
) -> list:
    """Draw ``n`` unique canonical programs with their token counts.

    Deterministic for fixed (n, seed, cfg); programs are deduplicated by
    canonical serialization. Raises SamplerExhausted if the dedup target
    cannot be met within ``max_draw_factor * n`` draws.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = random.Random(seed)
    seen = set()
    out = []
    budget = cfg.max_draw_factor * n
    draws = 0
    while len(out) < n:
        if draws >= budget:
            raise SamplerExhausted(
                f"could not draw {n} unique programs in {budget} attempts "
                f"({len(out)} found)"
            )
        draws += 1
        raw = _draw_node(rng, cfg, cfg.max_depth)
        try:
            program = canonicalize(raw, cfg.max_depth)
        except (CanonicalizeError, LotInvariantError):
            continue
        if not _draws_ink(program.root):
            continue  # pure rotation, nothing to rasterize
        key = program.serialize()
        if key in seen:
            continue
        seen.add(key)
        out.append((program, mdl(program)))
    return out


def unrolled(node: Node) -> Node:
    """Expand every repeat into an explicit concat chain (for equivalence checks)."""
    if isinstance(node, (Line, Turn, Arc)):
        return node
    if isinstance(node, Concat):
        return Concat(unrolled(node.left), unrolled(node.right))
    if isinstance(node, Repeat):
        body = unrolled(node.body)
        out = body
        for _ in range(node.count - 1):
            out = Concat(out, body)
        return out
    raise TypeError(type(node).__name__)
