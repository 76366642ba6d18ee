"""Characteristics of a one-dimensional general diffusion.

A general diffusion on an interval ``J`` is determined by a strictly increasing
continuous scale function ``s`` and a speed measure ``m``. This module holds the
data model for ``(J, s, m)`` plus boundary behaviour, and the analytic
operations on it: validation, SDE coefficients to characteristics, the
pushforward to natural scale and the Green-function exit time.

Conventions: standard Brownian motion has ``s(x) = x`` and ``m(dx) = dx``; the
Green function of ``(a, b)`` therefore carries a factor 2,
``G(x, y) = 2 (s(x^y) - s(a)) (s(b) - s(x v y)) / (s(b) - s(a))``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from . import _numerics
from .catalog import const
from .errors import (
    InversionFailure,
    NonLocallyIntegrable,
    OrderViolation,
    OutOfRange,
    ZeroSigma,
)

INF = math.inf
# beyond s' = e**120 a density scale is treated as having reached infinity
_LOG_SLOPE_CAP = 120.0


# --------------------------------------------------------------------------
# Interval
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    left: float
    right: float
    left_closed: bool = False
    right_closed: bool = False

    def violations(self) -> list[str]:
        out = []
        if not self.left < self.right:
            out.append("interval left must be < right")
        if self.left_closed and not math.isfinite(self.left):
            out.append("closed left endpoint must be finite")
        if self.right_closed and not math.isfinite(self.right):
            out.append("closed right endpoint must be finite")
        return out

    def contains(self, x) -> bool:
        lo_ok = x >= self.left if self.left_closed else x > self.left
        hi_ok = x <= self.right if self.right_closed else x < self.right
        return bool(lo_ok and hi_ok)

    def in_interior(self, x) -> bool:
        return bool(self.left < x < self.right)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.left) and math.isfinite(self.right)

    def probe_window(self, width: float = 10.0) -> tuple[float, float]:
        """Finite window inside the closure of ``J``; infinite ends are cut at
        ``width`` from the nearest finite reference point."""
        lo, hi = self.left, self.right
        if not math.isfinite(lo) and not math.isfinite(hi):
            return -width, width
        if not math.isfinite(lo):
            return hi - 2 * width, hi
        if not math.isfinite(hi):
            return lo, lo + 2 * width
        return lo, hi

    def __str__(self):
        lb = "[" if self.left_closed else "("
        rb = "]" if self.right_closed else ")"
        return f"{lb}{self.left!r}, {self.right!r}{rb}"


def real_line() -> Interval:
    return Interval(-INF, INF)


# --------------------------------------------------------------------------
# Scale functions
# --------------------------------------------------------------------------


class Derivative(NamedTuple):
    value: float
    error: float
    converged: bool
    method: str


class ScaleFunction:
    """Strictly increasing continuous ``s``; subclasses pick the representation."""

    kind = "abstract"

    def __call__(self, x):
        raise NotImplementedError

    def inverse(self, y, xtol=0.0):
        """``q = s^{-1}``."""
        raise NotImplementedError

    def derivative(self, x):
        """``s'`` where it exists; ``inf`` where ``q' = 0``."""
        raise NotImplementedError

    def q_derivative(self, y, side="right"):
        """Exact one-sided derivative of ``q`` at natural-scale points ``y``."""
        raise NotImplementedError

    def value_range(self, interval: Interval) -> tuple[float, float]:
        """``(s(left), s(right))`` with limits at infinite endpoints."""
        raise NotImplementedError

    def affine(self, a: float, b: float) -> "ScaleFunction":
        """The scale ``a * s + b`` for ``a > 0``."""
        raise NotImplementedError


def _out(arr, like):
    arr = np.asarray(arr, dtype=float)
    return float(arr.reshape(-1)[0]) if np.ndim(like) == 0 else arr.reshape(np.shape(like))


@dataclass(frozen=True)
class NaturalScale(ScaleFunction):
    kind = "natural"

    def __call__(self, x):
        return _out(x, x)

    def inverse(self, y, xtol=0.0):
        return _out(y, y)

    def derivative(self, x):
        return _out(np.ones_like(np.asarray(x, dtype=float)), x)

    def q_derivative(self, y, side="right"):
        return _out(np.ones_like(np.asarray(y, dtype=float)), y)

    def value_range(self, interval):
        return interval.left, interval.right

    def affine(self, a, b):
        if a <= 0:
            raise ValueError("affine factor must be positive")
        return DensityScale(sprime=const(1.0), anchor=0.0, offset=b, factor=a)


def _vectorized(f):
    """Make ``f`` accept arrays, falling back to ``np.vectorize``."""
    if f is None:
        return None
    try:
        probe = np.asarray(f(np.array([0.25, 0.5])), dtype=float)
        if probe.shape == (2,):
            return f
    except Exception:
        pass
    vf = np.vectorize(f, otypes=[float])
    return lambda x: vf(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class DensityScale(ScaleFunction):
    """``s(x) = offset + factor * int_anchor^x s'(z) dz``.

    ``s'`` is either given directly (``sprime``) or through its logarithmic
    derivative (``log_rate``, with ``s'(anchor) = 1``), which is the form an SDE
    supplies: ``log_rate = -2 mu / sigma^2``.
    """

    sprime: Callable | None = None
    log_rate: Callable | None = None
    anchor: float = 0.0
    offset: float = 0.0
    factor: float = 1.0
    domain: tuple[float, float] = (-INF, INF)

    kind = "density"

    def __post_init__(self):
        if (self.sprime is None) == (self.log_rate is None):
            raise ValueError("give exactly one of sprime, log_rate")

    # -- core ODE solve ----------------------------------------------------

    @cached_property
    def _solutions(self):
        """Dense ODE solutions from the anchor towards each domain end.

        Maps direction (+1/-1) to ``(interpolant, reach)``; beyond ``reach``
        the scale is taken to be infinite.
        """
        a = float(self.anchor)
        if self.log_rate is not None:
            rate = self.log_rate

            def rhs(t, u):
                return [float(rate(t)), math.exp(min(u[0], 700.0))]

            def blowup(t, u):
                return _LOG_SLOPE_CAP - u[0]

            y0 = [0.0, 0.0]
        else:
            sp = self.sprime

            def rhs(t, u):
                return [float(sp(t))]

            def blowup(t, u):
                return 1e50 - abs(u[0])

            y0 = [0.0]
        blowup.terminal = True
        out = {}
        for direction, end in ((1.0, self.domain[1]), (-1.0, self.domain[0])):
            target = end if math.isfinite(end) else a + direction * 2.0**40
            with warnings.catch_warnings(), np.errstate(all="ignore"):
                warnings.simplefilter("ignore")
                sol = integrate.solve_ivp(
                    rhs, (a, target), y0, method="DOP853", rtol=1e-12, atol=1e-14,
                    events=blowup, dense_output=True,
                )
            reach = float(sol.t[-1]) if sol.sol is not None else a
            out[direction] = (sol.sol, reach)
        return out

    def _sweep(self, x):
        """Return ``(integral, slope)`` of the unnormalised scale at ``x``."""
        flat = np.asarray(x, dtype=float).ravel()
        val = np.full(flat.shape, np.nan)
        der = np.full(flat.shape, np.nan)
        a = float(self.anchor)
        at = flat == a
        val[at] = 0.0
        der[at] = 1.0
        lo_dom, hi_dom = self.domain
        for direction in (1.0, -1.0):
            interp, reach = self._solutions[direction]
            side = (flat - a) * direction > 0
            inside = side & ((flat - reach) * direction <= 0)
            beyond = side & ~inside & (flat >= lo_dom) & (flat <= hi_dom)
            if inside.any():
                u = np.atleast_2d(interp(flat[inside]))
                val[inside] = u[-1]
                if self.log_rate is not None:
                    der[inside] = np.exp(u[0])
            val[beyond] = direction * INF
            der[beyond] = INF
        if self.log_rate is None:
            ok = ~np.isnan(val)
            der[ok] = np.asarray(self.sprime(flat[ok]), dtype=float) * np.ones(int(ok.sum()))
        return val, der

    def __call__(self, x):
        val, _ = self._sweep(x)
        return _out(self.offset + self.factor * val, x)

    def derivative(self, x):
        _, der = self._sweep(x)
        return _out(self.factor * der, x)

    # -- range and inversion -----------------------------------------------

    def _end_value(self, end):
        """Limit of ``s`` at a domain end, approached along a geometric ladder."""
        direction = 1.0 if end > self.anchor else -1.0
        if math.isfinite(end):
            pts = self.anchor + (end - self.anchor) * (1.0 - 2.0 ** -np.arange(1, 52))
        else:
            pts = self.anchor + direction * 2.0 ** np.arange(0, 41)
        vals = np.asarray(self(pts))
        if not np.all(np.isfinite(vals)):
            return direction * INF
        inc = np.abs(np.diff(vals))
        tail = inc[-4:]
        if tail[-1] <= 1e-12 * max(1.0, abs(vals[-1])) and np.all(np.diff(tail) <= 0):
            return float(vals[-1])
        return direction * INF

    @cached_property
    def _range(self):
        return self._end_value(self.domain[0]), self._end_value(self.domain[1])

    def value_range(self, interval):
        lo = self._end_value(interval.left) if interval.left != self.domain[0] else self._range[0]
        hi = self._end_value(interval.right) if interval.right != self.domain[1] else self._range[1]
        return lo, hi

    @cached_property
    def _ladder(self):
        """Monotone table of state points and scale values for bracketing."""
        a = self.anchor
        pts = [a]
        ks = np.arange(-6, 61)
        for end in self.domain:
            if math.isfinite(end):
                pts.extend(a + (end - a) * (1.0 - 2.0 ** -np.arange(1, 60)))
                pts.append(end)
            else:
                direction = 1.0 if end > 0 else -1.0
                pts.extend(a + direction * 2.0**ks)
        pts = np.unique(np.asarray(pts, dtype=float))
        vals = np.asarray(self(pts), dtype=float)
        keep = ~np.isnan(vals)
        return pts[keep], vals[keep]

    def inverse(self, y, xtol=0.0):
        yy = np.asarray(y, dtype=float)
        flat = yy.ravel()
        lo_v, hi_v = self._range
        if np.any(flat < lo_v) or np.any(flat > hi_v) or np.any(np.isnan(flat)):
            raise OutOfRange("query outside the scale's value range")
        xs, vs = self._ladder
        i = np.searchsorted(vs, flat)
        inside = (i > 0) & (i < len(vs))
        if not np.all(inside | np.isin(flat, vs)):
            raise InversionFailure("could not bracket the inverse scale")
        i = np.clip(i, 1, len(vs) - 1)
        lo, hi = xs[i - 1].copy(), xs[i].copy()
        flo, fhi = vs[i - 1], vs[i]
        with np.errstate(all="ignore"):
            x = np.where(fhi > flo, lo + (flat - flo) * (hi - lo) / (fhi - flo), 0.5 * (lo + hi))
        x = np.where(np.isfinite(x), x, 0.5 * (lo + hi))
        x = np.clip(x, lo, hi)
        # safeguarded Newton: bisect whenever the Newton step leaves the bracket
        for _ in range(200):
            val, der = self._sweep(x)
            f = self.offset + self.factor * val - flat
            lo = np.where(f < 0, x, lo)
            hi = np.where(f > 0, x, hi)
            with np.errstate(all="ignore"):
                nx = x - f / (self.factor * der)
            bad = ~np.isfinite(nx) | (nx <= lo) | (nx >= hi)
            nx = np.where(bad, 0.5 * (lo + hi), nx)
            nx = np.where(f == 0, x, nx)
            done = (np.abs(nx - x) <= max(xtol, 0.0) + 4 * np.spacing(np.abs(x) + 1e-300)) | (f == 0)
            x = nx
            if np.all(done):
                break
        out = x
        exact = np.searchsorted(vs, flat)
        hit = (exact < len(vs)) & (vs[np.minimum(exact, len(vs) - 1)] == flat)
        out[hit] = xs[exact[hit]]
        return _out(out, y)

    def q_derivative(self, y, side="right"):
        return _out(1.0 / np.asarray(self.derivative(self.inverse(y))), y)

    def affine(self, a, b):
        if a <= 0:
            raise ValueError("affine factor must be positive")
        return replace(self, offset=a * self.offset + b, factor=a * self.factor)


@dataclass(frozen=True, eq=False)
class SampledScale(ScaleFunction):
    """Monotone piecewise-linear scale through ``(grid[i], values[i])``,
    extended linearly beyond the table."""

    grid: tuple[float, ...]
    values: tuple[float, ...]

    kind = "sampled"

    def __post_init__(self):
        if len(self.grid) != len(self.values) or len(self.grid) < 2:
            raise ValueError("sampled scale needs >= 2 points of equal length")

    @cached_property
    def _arrays(self):
        return np.asarray(self.grid, dtype=float), np.asarray(self.values, dtype=float)

    def _slopes(self):
        g, v = self._arrays
        return np.diff(v) / np.diff(g)

    def __call__(self, x):
        g, v = self._arrays
        xx = np.asarray(x, dtype=float)
        sl = self._slopes()
        out = np.interp(xx, g, v)
        out = np.where(xx < g[0], v[0] + sl[0] * (xx - g[0]), out)
        out = np.where(xx > g[-1], v[-1] + sl[-1] * (xx - g[-1]), out)
        return _out(out, x)

    def inverse(self, y, xtol=0.0):
        g, v = self._arrays
        yy = np.asarray(y, dtype=float)
        sl = self._slopes()
        out = np.interp(yy, v, g)
        out = np.where(yy < v[0], g[0] + (yy - v[0]) / sl[0], out)
        out = np.where(yy > v[-1], g[-1] + (yy - v[-1]) / sl[-1], out)
        return _out(out, y)

    def _segment(self, x, side, table):
        sl = self._slopes()
        t = np.asarray(x, dtype=float)
        if side == "right":
            i = np.searchsorted(table, t, side="right") - 1
        else:
            i = np.searchsorted(table, t, side="left") - 1
        return sl[np.clip(i, 0, len(sl) - 1)]

    def derivative(self, x):
        g, _ = self._arrays
        return _out(self._segment(x, "right", g), x)

    def q_derivative(self, y, side="right"):
        _, v = self._arrays
        return _out(1.0 / self._segment(y, side, v), y)

    def value_range(self, interval):
        return float(self(interval.left)) if math.isfinite(interval.left) else -INF, (
            float(self(interval.right)) if math.isfinite(interval.right) else INF
        )

    def affine(self, a, b):
        if a <= 0:
            raise ValueError("affine factor must be positive")
        return SampledScale(self.grid, tuple(a * v + b for v in self.values))


@dataclass(frozen=True, eq=False)
class InverseExplicitScale(ScaleFunction):
    """Scale known through its inverse ``q`` on ``[value_lo, value_hi]``.

    ``q_prime`` evaluates the (right) derivative of ``q`` exactly. If
    ``zero_set_measure(lo, hi)`` is supplied it returns the exact Lebesgue
    measure of ``{q' = 0}`` inside ``[lo, hi]``.
    """

    q: Callable
    q_prime: Callable
    value_lo: float
    value_hi: float
    zero_set_measure: Callable | None = None
    q_prime_left: Callable | None = None
    tag: tuple | None = None

    kind = "inverse_explicit"

    def __call__(self, x):
        xx = np.asarray(x, dtype=float)
        flat = xx.ravel()
        q_lo, q_hi = float(self.q(self.value_lo)), float(self.q(self.value_hi))
        if np.any(flat < q_lo) or np.any(flat > q_hi):
            raise OutOfRange("state outside the range of q")
        out = _numerics.bisect_increasing(self.q, flat, self.value_lo, self.value_hi)
        out = np.where(flat == q_lo, self.value_lo, out)
        out = np.where(flat == q_hi, self.value_hi, out)
        return _out(out, x)

    def inverse(self, y, xtol=0.0):
        yy = np.asarray(y, dtype=float)
        if np.any(yy < self.value_lo) or np.any(yy > self.value_hi):
            raise OutOfRange("query outside the scale's value range")
        return _out(self.q(yy), y)

    def derivative(self, x):
        with np.errstate(divide="ignore"):
            return _out(1.0 / np.asarray(self.q_prime(self(x)), dtype=float), x)

    def q_derivative(self, y, side="right"):
        fn = self.q_prime_left if (side == "left" and self.q_prime_left) else self.q_prime
        return _out(fn(np.asarray(y, dtype=float)), y)

    def value_range(self, interval):
        lo = self.value_lo if interval.left <= float(self.q(self.value_lo)) else float(self(interval.left))
        hi = self.value_hi if interval.right >= float(self.q(self.value_hi)) else float(self(interval.right))
        return lo, hi

    def affine(self, a, b):
        if a <= 0:
            raise ValueError("affine factor must be positive")
        q, qp, qpl, zm = self.q, self.q_prime, self.q_prime_left, self.zero_set_measure
        return InverseExplicitScale(
            q=lambda y: q((np.asarray(y, dtype=float) - b) / a),
            q_prime=lambda y: np.asarray(qp((np.asarray(y, dtype=float) - b) / a)) / a,
            value_lo=a * self.value_lo + b,
            value_hi=a * self.value_hi + b,
            zero_set_measure=None if zm is None else (lambda lo, hi: a * zm((lo - b) / a, (hi - b) / a)),
            q_prime_left=None if qpl is None else (
                lambda y: np.asarray(qpl((np.asarray(y, dtype=float) - b) / a)) / a
            ),
            tag=None if self.tag is None else ("affine", a, b, self.tag),
        )


def inverse_scale(scale: ScaleFunction, tol: float | None = None):
    """Evaluator for ``q = s^{-1}``.

    Exact for natural, sampled and inverse-explicit scales; density scales are
    inverted by bisection to absolute tolerance ``tol`` (default: floating-point
    resolution).
    """
    xtol = 0.0 if tol is None else tol
    if isinstance(scale, InverseExplicitScale):
        return scale.q
    return lambda y: scale.inverse(y, xtol=xtol)


def one_sided_derivative(scale: ScaleFunction, y: float, side: str = "right", h0: float | None = None) -> Derivative:
    """Right (``q'_+``) or left (``q'_-``) derivative of ``q`` at ``y``.

    Exact for representations that carry it; density scales go through
    shrinking one-sided differences with Richardson refinement, flagged
    ``converged=False`` if the table does not settle.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    if isinstance(scale, (NaturalScale, InverseExplicitScale, SampledScale)):
        return Derivative(float(scale.q_derivative(y, side)), 0.0, True, "exact")
    q = inverse_scale(scale)
    if h0 is None:
        h0 = 1e-2 * max(1.0, abs(y))
    val, err, ok = _numerics.richardson_one_sided(lambda t: float(q(t)), float(y), side, h0)
    return Derivative(val, err, ok, "richardson")


# --------------------------------------------------------------------------
# Speed measure and boundaries
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpeedMeasure:
    """``m = density(x) dx + sum(mass * delta_loc) + boundary atoms``.

    ``natural_density`` is an alternative to ``density``: the Lebesgue density
    of the pushforward ``m o s^{-1}`` on ``s(J)``. It is needed when ``m`` is
    singular in state coordinates, as for a singular scale.
    """

    density: Callable | None = None
    atoms: tuple[tuple[float, float], ...] = ()
    left_boundary_atom: float = 0.0
    right_boundary_atom: float = 0.0
    natural_density: Callable | None = None

    def __post_init__(self):
        if self.density is not None and self.natural_density is not None:
            raise ValueError("give at most one of density, natural_density")


class BoundaryKind(str, enum.Enum):
    INACCESSIBLE = "inaccessible"
    ABSORBING = "absorbing"
    INSTANT_REFLECTING = "instant-reflecting"
    SLOW_REFLECTING = "slow-reflecting"

    @property
    def accessible(self) -> bool:
        return self is not BoundaryKind.INACCESSIBLE


@dataclass(frozen=True)
class BoundaryBehavior:
    kind: BoundaryKind = BoundaryKind.INACCESSIBLE
    sticky_mass: float = 0.0

    @classmethod
    def inaccessible(cls):
        return cls(BoundaryKind.INACCESSIBLE)

    @classmethod
    def absorbing(cls):
        return cls(BoundaryKind.ABSORBING)

    @classmethod
    def reflecting(cls, sticky_mass: float = 0.0):
        if sticky_mass > 0:
            return cls(BoundaryKind.SLOW_REFLECTING, sticky_mass)
        return cls(BoundaryKind.INSTANT_REFLECTING)


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    interval: Interval
    scale: ScaleFunction
    speed: SpeedMeasure
    left_behavior: BoundaryBehavior = field(default_factory=BoundaryBehavior.inaccessible)
    right_behavior: BoundaryBehavior = field(default_factory=BoundaryBehavior.inaccessible)
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def natural_range(self) -> tuple[float, float]:
        return self.scale.value_range(self.interval)

    def is_absorbing_point(self, x) -> bool:
        J = self.interval
        if x == J.left and J.left_closed:
            return self.left_behavior.kind is BoundaryKind.ABSORBING
        if x == J.right and J.right_closed:
            return self.right_behavior.kind is BoundaryKind.ABSORBING
        return False


# --------------------------------------------------------------------------
# Measures
# --------------------------------------------------------------------------


def natural_density(spec: DiffusionSpec) -> Callable:
    """Lebesgue density of ``m o s^{-1}`` as a function of the natural coordinate."""
    sp = spec.speed
    if sp.natural_density is not None:
        return _vectorized(sp.natural_density)
    if sp.density is None:
        return lambda y: np.zeros_like(np.asarray(y, dtype=float))
    dens = _vectorized(sp.density)
    if isinstance(spec.scale, NaturalScale):
        return dens
    scale = spec.scale

    def pushed(y):
        x = np.asarray(scale.inverse(y), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(dens(x), dtype=float) / np.asarray(scale.derivative(x), dtype=float)

    return pushed


def _ac_mass(f, lo, hi, tol):
    if hi <= lo:
        return 0.0
    if math.isfinite(lo) and math.isfinite(hi):
        val, err = _numerics.adaptive_integrate(f, lo, hi, tol=tol)
        return val
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, _ = integrate.quad(lambda t: float(f(np.array([t]))[0]), lo, hi, limit=200)
    return val


def speed_mass(spec: DiffusionSpec, lo: float, hi: float, closed: bool = True, tol: float = 1e-11) -> float:
    """``m([lo, hi])`` (or of the open interval when ``closed`` is false),
    boundary atoms included when their endpoint is in the set."""
    if hi < lo:
        raise OrderViolation("need lo <= hi")
    sp = spec.speed
    total = 0.0
    if sp.natural_density is not None:
        ylo, yhi = (float(spec.scale(v)) if math.isfinite(v) else spec.scale.value_range(spec.interval)[v > 0]
                    for v in (lo, hi))
        total += _ac_mass(_vectorized(sp.natural_density), ylo, yhi, tol)
    elif sp.density is not None:
        total += _ac_mass(_vectorized(sp.density), lo, hi, tol)
    for loc, mass in sp.atoms:
        if (lo <= loc <= hi) if closed else (lo < loc < hi):
            total += mass
    J = spec.interval
    if closed:
        if J.left_closed and lo <= J.left <= hi:
            total += sp.left_boundary_atom
        if J.right_closed and lo <= J.right <= hi:
            total += sp.right_boundary_atom
    return total


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def _cell_masses(spec: DiffusionSpec, cells: np.ndarray) -> list[float]:
    """``m`` of consecutive closed cells; one scale evaluation for all edges."""
    sp = spec.speed
    if sp.natural_density is None:
        return [speed_mass(spec, a, b) for a, b in zip(cells[:-1], cells[1:])]
    ys = np.asarray(spec.scale(cells), dtype=float)
    nd = _vectorized(sp.natural_density)
    out = []
    for a, b, ya, yb in zip(cells[:-1], cells[1:], ys[:-1], ys[1:]):
        m = _ac_mass(nd, ya, yb, 1e-11)
        m += sum(mass for loc, mass in sp.atoms if a <= loc <= b)
        out.append(m)
    return out


def _probe_points(spec: DiffusionSpec, n: int) -> np.ndarray:
    lo, hi = spec.metadata.get("probe_window", spec.interval.probe_window())
    pts = np.linspace(lo, hi, n + 2)[1:-1]
    return pts[[spec.interval.in_interior(p) for p in pts]]


def validation_report(spec: DiffusionSpec, resolution: int = 64, seed: int = 0) -> tuple[list[str], list[str]]:
    """Return ``(violations, notes)``. Violations are empty iff every check
    passes at the given resolution; notes record the caveats of the checks."""
    out: list[str] = []
    resolution = int(spec.metadata.get("validation_resolution", resolution))
    notes: list[str] = [f"checked at resolution {resolution}"]
    J = spec.interval
    out += J.violations()
    if out:
        return out, notes
    sc, sp = spec.scale, spec.speed
    rng = np.random.default_rng(seed)

    # scale
    scale_ok = True
    if isinstance(sc, SampledScale):
        g, v = np.asarray(sc.grid), np.asarray(sc.values)
        if np.any(np.diff(g) <= 0):
            out.append("scale grid not strictly increasing")
            scale_ok = False
        if np.any(np.diff(v) <= 0):
            out.append("scale not strictly increasing")
            scale_ok = False
        if (math.isfinite(J.left) and g[0] > J.left) or (math.isfinite(J.right) and g[-1] < J.right):
            out.append("scale domain does not cover the interval")
    if isinstance(sc, DensityScale) and not J.in_interior(sc.anchor):
        out.append("scale anchor must lie in the interior")
        scale_ok = False
    if isinstance(sc, InverseExplicitScale):
        qlo, qhi = float(sc.q(sc.value_lo)), float(sc.q(sc.value_hi))
        if qlo > J.left or qhi < J.right:
            out.append("scale domain does not cover the interval")
            scale_ok = False
    pts = _probe_points(spec, resolution)
    if scale_ok and pts.size >= 2:
        lo, hi = pts[0], pts[-1]
        pairs = np.sort(rng.uniform(lo, hi, size=(resolution, 2)), axis=1)
        grid = np.concatenate([pts, pairs.ravel()])
        with np.errstate(all="ignore"):
            vals = np.asarray(sc(grid), dtype=float)
        if not np.all(np.isfinite(vals)):
            out.append("scale not finite in the interior")
        else:
            pv = vals[len(pts):].reshape(-1, 2)
            distinct = pairs[:, 0] < pairs[:, 1]
            if np.any(np.diff(vals[: len(pts)]) <= 0) or np.any(pv[distinct, 0] >= pv[distinct, 1]):
                if "scale not strictly increasing" not in out:
                    out.append("scale not strictly increasing")
            else:
                back = np.asarray(sc.inverse(vals), dtype=float)
                span = hi - lo
                if np.max(np.abs(back - grid)) > 1e-9 * span:
                    out.append("scale inversion round trip exceeds tolerance")

    # speed
    for loc, mass in sp.atoms:
        if not mass > 0:
            out.append("atom mass must be positive")
            break
    for loc, mass in sp.atoms:
        if not J.in_interior(loc):
            out.append("atom location must lie in the interior")
            break
    if sp.left_boundary_atom < 0 or sp.right_boundary_atom < 0:
        out.append("boundary atom mass must be nonnegative")
    dens = sp.density if sp.density is not None else sp.natural_density
    if dens is not None and pts.size:
        probe = pts if sp.density is not None else np.asarray(sc(pts), dtype=float)
        dv = np.asarray(_vectorized(dens)(probe), dtype=float)
        if np.any(dv < 0) or np.any(np.isnan(dv)):
            out.append("speed density must be nonnegative")
    if not out and pts.size >= 2:
        win = spec.metadata.get("positivity_window")
        cells = np.linspace(*(win if win else (pts[0], pts[-1])), resolution + 1)
        masses = _cell_masses(spec, cells)
        if any(not math.isfinite(m) for m in masses):
            out.append("speed measure not locally finite")
        elif any(m <= 0 for m in masses):
            out.append("speed measure not strictly positive")
        if spec.metadata.get("truncated"):
            notes.append("positivity checked at truncation resolution")

    # boundaries
    for side, beh, end, closed, batom in (
        ("left", spec.left_behavior, J.left, J.left_closed, sp.left_boundary_atom),
        ("right", spec.right_behavior, J.right, J.right_closed, sp.right_boundary_atom),
    ):
        if beh.kind.accessible and not (closed and math.isfinite(end)):
            out.append(f"{side} boundary: accessible behaviour needs a finite closed endpoint")
        if closed and not beh.kind.accessible:
            out.append(f"{side} boundary: closed endpoint must be accessible")
        if beh.kind is BoundaryKind.SLOW_REFLECTING:
            if not beh.sticky_mass > 0:
                out.append(f"{side} boundary: slow reflection needs positive sticky mass")
            elif beh.sticky_mass != batom:
                out.append(f"{side} boundary: sticky mass must equal the boundary atom")
        elif batom != 0:
            out.append(f"{side} boundary: boundary atom requires slow reflection")
    return out, notes


def validate(spec: DiffusionSpec, resolution: int = 64) -> list[str]:
    """All violated invariants of ``spec``; empty means valid."""
    return validation_report(spec, resolution)[0]


# --------------------------------------------------------------------------
# SDE -> characteristics
# --------------------------------------------------------------------------


def _probe_compacts(interval: Interval, anchor: float):
    out = []
    for k in range(1, 7):
        if math.isfinite(interval.left):
            lo = anchor + (interval.left - anchor) * (1 - 2.0**-k)
        else:
            lo = anchor - 2.0 ** (k - 1)
        if math.isfinite(interval.right):
            hi = anchor + (interval.right - anchor) * (1 - 2.0**-k)
        else:
            hi = anchor + 2.0 ** (k - 1)
        out.append((lo, hi))
    return out


def from_sde(mu, sigma, interval: Interval, anchor: float):
    """Characteristics of ``dY = mu(Y) dt + sigma(Y) dW`` on ``interval``.

    Returns ``(scale, speed)`` with ``s'(x) = exp(-int_anchor^x 2 mu / sigma^2)``
    and speed density ``1 / (s'(x) sigma(x)^2)``. The Engelbert-Schmidt
    conditions are checked on a family of probe compacts only.
    """
    if not interval.in_interior(anchor):
        raise OutOfRange("anchor must be interior")
    mu_v, sigma_v = _vectorized(mu), _vectorized(sigma)
    compacts = _probe_compacts(interval, anchor)
    probes = np.unique(np.concatenate([np.linspace(a, b, 65) for a, b in compacts]))
    sv = np.asarray(sigma_v(probes), dtype=float)
    if np.any(sv == 0) or not np.all(np.isfinite(sv)):
        raise ZeroSigma("sigma vanishes at a probe point")

    def es(t):
        return (1.0 + abs(float(mu_v(np.array([t]))[0]))) / float(sigma_v(np.array([t]))[0]) ** 2

    for a, b in compacts:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(es, a, b, limit=200)
            except (integrate.IntegrationWarning, ZeroDivisionError) as exc:
                raise NonLocallyIntegrable(f"(1+|mu|)/sigma^2 on [{a}, {b}]: {exc}") from exc
        if not math.isfinite(val):
            raise NonLocallyIntegrable(f"(1+|mu|)/sigma^2 diverges on [{a}, {b}]")

    def log_rate(t):
        with np.errstate(all="ignore"):
            return -2.0 * np.asarray(mu_v(t), dtype=float) / np.asarray(sigma_v(t), dtype=float) ** 2

    scale = DensityScale(log_rate=log_rate, anchor=anchor, domain=(interval.left, interval.right))

    def density(x):
        x = np.asarray(x, dtype=float)
        return 1.0 / (np.asarray(scale.derivative(x)) * np.asarray(sigma_v(x)) ** 2)

    return scale, SpeedMeasure(density=density)


def sde_spec(mu, sigma, interval: Interval, anchor: float, label: str = "sde", **metadata) -> DiffusionSpec:
    """Full spec for an SDE; accessible (closed) endpoints are absorbing."""
    scale, speed = from_sde(mu, sigma, interval, anchor)
    beh = [BoundaryBehavior.absorbing() if c else BoundaryBehavior.inaccessible()
           for c in (interval.left_closed, interval.right_closed)]
    meta = {"source": ("sde", mu, sigma, anchor), **metadata}
    return DiffusionSpec(interval, scale, speed, beh[0], beh[1], label, meta)


# --------------------------------------------------------------------------
# Natural scale
# --------------------------------------------------------------------------


def natural_scale_transform(spec: DiffusionSpec) -> DiffusionSpec:
    """The diffusion ``s(X)``: natural scale on ``s(J)`` with speed ``m o s^{-1}``."""
    if isinstance(spec.scale, NaturalScale) and spec.speed.natural_density is None:
        return spec
    sc = spec.scale
    try:
        lo, hi = spec.natural_range()
        atoms = tuple((float(sc(loc)), mass) for loc, mass in spec.speed.atoms)
    except (OutOfRange, ArithmeticError) as exc:
        raise InversionFailure(str(exc)) from exc
    J = spec.interval
    interval = Interval(lo, hi, J.left_closed and math.isfinite(lo), J.right_closed and math.isfinite(hi))
    speed = SpeedMeasure(
        density=natural_density(spec),
        atoms=atoms,
        left_boundary_atom=spec.speed.left_boundary_atom,
        right_boundary_atom=spec.speed.right_boundary_atom,
    )
    meta = {k: v for k, v in spec.metadata.items() if k != "source"}
    meta["natural_transform_of"] = spec.label
    return DiffusionSpec(interval, NaturalScale(), speed, spec.left_behavior, spec.right_behavior,
                         spec.label, meta)


# --------------------------------------------------------------------------
# Green function
# --------------------------------------------------------------------------


def green_function(sx, su, sa, sb):
    """``G(x, u)`` of ``(a, b)`` in natural coordinates (arguments are scale values)."""
    su = np.asarray(su, dtype=float)
    return 2.0 * (np.minimum(sx, su) - sa) * (sb - np.maximum(sx, su)) / (sb - sa)


def _green_unbounded(spec, a, b, sx, sa, sb, tol):
    """Exit time when one side of ``(s(a), s(b))`` is unbounded: the Green kernel
    becomes ``2 (min(sx, u) - sa)`` (or its mirror) and the tail is summed over
    doubling blocks until it converges; ``inf`` if it does not."""
    if not math.isfinite(sa) and not math.isfinite(sb):
        return math.inf
    nd = natural_density(spec)
    up = math.isfinite(sa)

    def kern(u):
        return 2.0 * (np.minimum(sx, u) - sa) if up else 2.0 * (sb - np.maximum(sx, u))

    def f(u):
        with np.errstate(all="ignore"):
            return np.nan_to_num(kern(u) * np.asarray(nd(u), dtype=float), posinf=0.0)

    total = _numerics.adaptive_integrate(f, *((sa, sx) if up else (sx, sb)), tol=tol)[0]
    edge, width = sx, 1.0
    for _ in range(80):
        lo, hi = (edge, edge + width) if up else (edge - width, edge)
        piece = _numerics.adaptive_integrate(f, lo, hi, tol=tol)[0]
        total += piece
        edge = hi if up else lo
        width *= 2.0
        if width > 64 and piece <= 1e-12 * max(total, 1e-300):
            break
    else:
        return math.inf
    for loc, mass in spec.speed.atoms:
        if a < loc < b:
            total += float(kern(float(spec.scale(loc)))) * mass
    return float(total)


def green_expected_exit_time(spec: DiffusionSpec, x: float, a: float, b: float, tol: float = 1e-10) -> float:
    """``E_x[T_a ^ T_b] = int_(a,b) G(x, y) m(dy)``, atoms included as point masses."""
    if not a < b:
        raise OrderViolation("need a < b")
    if not a <= x <= b:
        raise OrderViolation("need a <= x <= b")
    J = spec.interval
    for p in (a, b):
        if not (J.left <= p <= J.right):
            raise OrderViolation("exit interval must lie in the state space")
    if x == a or x == b:
        return 0.0
    sc, sp = spec.scale, spec.speed
    sa, sx, sb = (float(v) for v in np.asarray(sc(np.array([a, x, b])), dtype=float))
    if not (math.isfinite(sa) and math.isfinite(sb)):
        return _green_unbounded(spec, a, b, sx, sa, sb, tol)
    total = 0.0
    if sp.density is not None and not isinstance(sc, NaturalScale):
        dens = _vectorized(sp.density)

        def integrand(y):
            return green_function(sx, sc(y), sa, sb) * dens(y)

        for lo, hi in ((a, x), (x, b)):
            total += _numerics.adaptive_integrate(integrand, lo, hi, tol=tol)[0]
    else:
        nd = natural_density(spec)

        def integrand(u):
            return green_function(sx, u, sa, sb) * nd(u)

        for lo, hi in ((sa, sx), (sx, sb)):
            total += _numerics.adaptive_integrate(integrand, lo, hi, tol=tol)[0]
    for loc, mass in sp.atoms:
        if a < loc < b:
            total += float(green_function(sx, float(sc(loc)), sa, sb)) * mass
    return total
