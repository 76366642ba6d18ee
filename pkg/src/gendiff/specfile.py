"""Reader and writer for the ``gendiff-spec v1`` text format (grammar in docs/spec-format.md)."""

from __future__ import annotations

import json
import math
import re

from .catalog import CATALOG, Expr, Tabulated
from .characteristics import (
    BoundaryBehavior,
    BoundaryKind,
    DensityScale,
    DiffusionSpec,
    InverseExplicitScale,
    Interval,
    NaturalScale,
    SampledScale,
    SpeedMeasure,
    sde_spec,
)
from .errors import GenDiffError, SpecParseError

HEADER = "gendiff-spec v1"
_INTERVAL = re.compile(r"^([\[(])\s*([^,\s]+)\s*,\s*([^\]\)\s]+)\s*([\])])$")
_KINDS = {k.value: k for k in BoundaryKind}


class _Line:
    def __init__(self, number: int, text: str):
        self.number = number
        self.text = text
        self.tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", text)]

    def fail(self, msg: str, index: int | None = None) -> SpecParseError:
        if index is None or not self.tokens:
            col = 1
        elif index >= len(self.tokens):
            col = len(self.text.rstrip()) + 1
        else:
            col = self.tokens[index][1]
        return SpecParseError(msg, self.number, col)

    def word(self, i: int) -> str:
        if i >= len(self.tokens):
            raise self.fail("missing argument", i)
        return self.tokens[i][0]

    def number_at(self, i: int) -> float:
        w = self.word(i)
        try:
            v = float(w)
        except ValueError:
            raise self.fail(f"expected a number, got {w!r}", i) from None
        if math.isnan(v):
            raise self.fail("NaN is not allowed", i)
        return v

    def expect_end(self, i: int):
        if len(self.tokens) > i:
            raise self.fail(f"unexpected token {self.tokens[i][0]!r}", i)


def _expr(line: _Line, i: int) -> tuple[Expr, int]:
    name = line.word(i)
    if name not in CATALOG:
        raise line.fail(f"unknown function {name!r}; catalog: {', '.join(CATALOG)}", i)
    params = tuple(line.number_at(i + 1 + j) for j in range(CATALOG[name]))
    return Expr(name, params), i + 1 + CATALOG[name]


def parse_spec(text: str) -> DiffusionSpec:
    """Parse a spec document; raises :class:`SpecParseError` with line and column."""
    from .gallery import cantor_q, fat_cantor_set

    raw = text.splitlines()
    lines = []
    for n, t in enumerate(raw, 1):
        body = t.split("#", 1)[0]
        if body.strip():
            lines.append(_Line(n, body))
    if not lines or lines[0].text.strip() != HEADER:
        first = lines[0] if lines else _Line(1, "")
        raise SpecParseError(f"first line must be {HEADER!r}", first.number, 1)

    label = ""
    interval = None
    scale_line = None
    scale_points: list[tuple[float, float]] = []
    sde = None
    speed_kind = None
    speed_expr = None
    speed_points: list[tuple[float, float]] = []
    atoms: list[tuple[float, float]] = []
    behaviors: dict[str, tuple[BoundaryBehavior, _Line]] = {}
    meta: dict = {}
    seen: set[str] = set()

    def once(line, key):
        if key in seen:
            raise line.fail(f"duplicate {key!r} line", 0)
        seen.add(key)

    for line in lines[1:]:
        key = line.word(0)
        if key == "label":
            once(line, key)
            label = line.text.strip()[len("label"):].strip()
        elif key == "interval":
            once(line, key)
            rest = line.text.strip()[len("interval"):].strip()
            m = _INTERVAL.match(rest)
            if not m:
                raise line.fail("interval must look like [a, b], (a, b], ...", 1)
            try:
                lo, hi = float(m.group(2)), float(m.group(3))
            except ValueError:
                raise line.fail("interval endpoints must be numbers or +-inf", 1) from None
            interval = Interval(lo, hi, m.group(1) == "[", m.group(4) == "]")
            bad = interval.violations()
            if bad:
                raise line.fail(bad[0], 1)
        elif key == "scale":
            once(line, key)
            scale_line = line
        elif key == "scale-point":
            scale_points.append((line.number_at(1), line.number_at(2)))
            line.expect_end(3)
        elif key == "sde":
            once(line, key)
            if line.word(1) != "drift":
                raise line.fail("expected 'drift'", 1)
            mu, i = _expr(line, 2)
            if line.word(i) != "diffusion":
                raise line.fail("expected 'diffusion'", i)
            sigma, i = _expr(line, i + 1)
            anchor = 0.0
            if i < len(line.tokens):
                if line.word(i) != "anchor":
                    raise line.fail("expected 'anchor'", i)
                anchor = line.number_at(i + 1)
                i += 2
            line.expect_end(i)
            sde = (mu, sigma, anchor, line)
        elif key == "speed":
            once(line, key)
            speed_kind = line.word(1)
            if speed_kind not in ("density", "natural-density"):
                raise line.fail("speed must be 'density' or 'natural-density'", 1)
            if line.word(2) == "table":
                line.expect_end(3)
                speed_expr = "table"
            else:
                speed_expr, i = _expr(line, 2)
                line.expect_end(i)
        elif key == "speed-point":
            speed_points.append((line.number_at(1), line.number_at(2)))
            line.expect_end(3)
        elif key == "atom":
            x, mass = line.number_at(1), line.number_at(2)
            line.expect_end(3)
            atoms.append((x, mass))
        elif key in ("left", "right"):
            once(line, key)
            kname = line.word(1)
            if kname not in _KINDS:
                raise line.fail(f"unknown boundary behavior {kname!r}", 1)
            kind = _KINDS[kname]
            if kind is BoundaryKind.SLOW_REFLECTING:
                mass = line.number_at(2)
                line.expect_end(3)
                if not mass > 0:
                    raise line.fail("slow-reflecting needs a positive mass", 2)
                behaviors[key] = (BoundaryBehavior(kind, mass), line)
            else:
                line.expect_end(2)
                behaviors[key] = (BoundaryBehavior(kind), line)
        elif key == "meta":
            k = line.word(1)
            value_text = line.text.strip().split(None, 2)
            if len(value_text) < 3:
                raise line.fail("meta needs a key and a value", 2)
            try:
                meta[k] = json.loads(value_text[2])
            except json.JSONDecodeError:
                meta[k] = value_text[2]
        else:
            raise line.fail(f"unknown keyword {key!r}", 0)

    end = _Line(len(raw) + 1, "")
    if interval is None:
        raise end.fail("missing 'interval' line")
    if sde is not None and (scale_line is not None or speed_kind is not None):
        raise sde[3].fail("'sde' replaces both 'scale' and 'speed'", 0)
    if scale_points and (scale_line is None or scale_line.word(1) != "sampled"):
        raise end.fail("'scale-point' lines need 'scale sampled'")
    if speed_points and speed_expr != "table":
        raise end.fail("'speed-point' lines need 'speed ... table'")

    if sde is not None:
        mu, sigma, anchor, line = sde
        try:
            spec = sde_spec(mu, sigma, interval, anchor, label=label, **meta)
        except GenDiffError as exc:
            raise line.fail(str(exc), 0) from None
        scale, speed = spec.scale, spec.speed
    else:
        if scale_line is None:
            raise end.fail("missing 'scale' (or 'sde') line")
        scale = _scale(scale_line, scale_points, interval, cantor_q, fat_cantor_set)
        if speed_expr == "table":
            if len(speed_points) < 2:
                raise end.fail("a speed table needs at least two 'speed-point' lines")
            xs, ys = zip(*speed_points)
            try:
                fn = Tabulated(tuple(xs), tuple(ys))
            except ValueError as exc:
                raise end.fail(str(exc)) from None
        else:
            fn = speed_expr
        speed = SpeedMeasure(density=fn) if speed_kind == "density" else (
            SpeedMeasure(natural_density=fn) if speed_kind == "natural-density" else SpeedMeasure())

    left = behaviors.get("left", (BoundaryBehavior.inaccessible(), None))[0]
    right = behaviors.get("right", (BoundaryBehavior.inaccessible(), None))[0]
    if sde is not None:
        left = behaviors.get("left", (spec.left_behavior, None))[0]
        right = behaviors.get("right", (spec.right_behavior, None))[0]
    speed = SpeedMeasure(
        density=speed.density,
        atoms=tuple(atoms),
        left_boundary_atom=left.sticky_mass,
        right_boundary_atom=right.sticky_mass,
        natural_density=speed.natural_density,
    )
    if sde is not None:
        meta = {**spec.metadata, **meta}
    return DiffusionSpec(interval, scale, speed, left, right, label, meta)


def _scale(line: _Line, points, interval: Interval, cantor_q, fat_cantor_set):
    kind = line.word(1)
    if kind == "natural":
        line.expect_end(2)
        return NaturalScale()
    if kind == "density":
        expr, i = _expr(line, 2)
        anchor = 0.0
        if i < len(line.tokens):
            if line.word(i) != "anchor":
                raise line.fail("expected 'anchor'", i)
            anchor = line.number_at(i + 1)
            i += 2
        line.expect_end(i)
        if not interval.in_interior(anchor):
            raise line.fail("anchor must lie inside the interval", max(i - 1, 2))
        return DensityScale(sprime=expr, anchor=anchor, domain=(interval.left, interval.right))
    if kind == "sampled":
        line.expect_end(2)
        if len(points) < 2:
            raise line.fail("a sampled scale needs at least two 'scale-point' lines", 1)
        xs, ys = zip(*points)
        return SampledScale(tuple(xs), tuple(ys))
    if kind == "cantor":
        levels = line.number_at(2)
        alpha = line.number_at(3)
        line.expect_end(4)
        if levels != int(levels) or levels < 1:
            raise line.fail("levels must be a positive integer", 2)
        if not 0 < alpha <= 1:
            raise line.fail("alpha must lie in (0, 1]", 3)
        if (interval.left, interval.right, interval.left_closed, interval.right_closed) != (0.0, 1.0, True, True):
            raise line.fail("the cantor scale lives on the interval [0, 1]", 1)
        return cantor_q(fat_cantor_set(int(levels), alpha))
    raise line.fail(f"unknown scale kind {kind!r}", 1)


def _fmt(v: float) -> str:
    return repr(float(v))


def _fn_text(fn) -> list[str]:
    if isinstance(fn, Expr):
        return [fn.to_text()]
    if isinstance(fn, Tabulated):
        return ["table"] + [f"speed-point {_fmt(x)} {_fmt(y)}" for x, y in zip(fn.x, fn.y)]
    raise ValueError("speed density is not a catalog function or table; it cannot be written")


def _json_safe(v) -> bool:
    try:
        json.dumps(v)
    except (TypeError, ValueError):
        return False
    return True


def dump_spec(spec: DiffusionSpec) -> str:
    """Serialise ``spec``; raises ``ValueError`` for pieces outside the format."""
    J = spec.interval
    out = [HEADER]
    if spec.label:
        out.append(f"label {spec.label}")
    lb, rb = ("[" if J.left_closed else "("), ("]" if J.right_closed else ")")
    out.append(f"interval {lb}{_fmt(J.left)}, {_fmt(J.right)}{rb}")
    source = spec.metadata.get("source")
    sc, sp = spec.scale, spec.speed
    if source and source[0] == "sde" and isinstance(source[1], Expr) and isinstance(source[2], Expr):
        out.append(f"sde drift {source[1].to_text()} diffusion {source[2].to_text()} anchor {_fmt(source[3])}")
    else:
        if isinstance(sc, NaturalScale):
            out.append("scale natural")
        elif isinstance(sc, DensityScale) and isinstance(sc.sprime, Expr) and (sc.offset, sc.factor) == (0.0, 1.0):
            out.append(f"scale density {sc.sprime.to_text()} anchor {_fmt(sc.anchor)}")
        elif isinstance(sc, SampledScale):
            out.append("scale sampled")
            out += [f"scale-point {_fmt(x)} {_fmt(y)}" for x, y in zip(sc.grid, sc.values)]
        elif isinstance(sc, InverseExplicitScale) and sc.tag and sc.tag[0] == "cantor":
            out.append(f"scale cantor {int(sc.tag[1])} {_fmt(sc.tag[2])}")
        else:
            raise ValueError("scale representation cannot be written in the spec format")
        for kind, fn in (("density", sp.density), ("natural-density", sp.natural_density)):
            if fn is not None:
                parts = _fn_text(fn)
                out.append(f"speed {kind} {parts[0]}")
                out += parts[1:]
    for loc, mass in sp.atoms:
        out.append(f"atom {_fmt(loc)} {_fmt(mass)}")
    for side, beh in (("left", spec.left_behavior), ("right", spec.right_behavior)):
        if beh.kind is BoundaryKind.SLOW_REFLECTING:
            out.append(f"{side} {beh.kind.value} {_fmt(beh.sticky_mass)}")
        else:
            out.append(f"{side} {beh.kind.value}")
    for k, v in spec.metadata.items():
        if k == "source" or not _json_safe(v):
            continue
        out.append(f"meta {k} {json.dumps(v)}")
    return "\n".join(out) + "\n"


def load_spec(path: str) -> DiffusionSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())
