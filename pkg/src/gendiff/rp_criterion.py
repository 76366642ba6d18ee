"""Deciding the representation property from the characteristics.

A non-absorbed general diffusion semimartingale has the representation
property exactly when ``q = s^{-1}`` has ``q'_+ = 0`` only on a Lebesgue-null
subset of ``s(J°)``, equivalently when ``s`` is absolutely continuous on compacts
of ``J°``; the same condition characterises extremality of its law among
solutions of the associated semimartingale problem. From an absorbing
boundary start every local martingale is constant and the property holds
trivially.

For representations built by this package the zero-set measure is exact. For
an opaque ``q`` it is estimated by stratified sampling of the one-sided
derivative and always reported with an error bound.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .characteristics import (
    DensityScale,
    DiffusionSpec,
    InverseExplicitScale,
    Interval,
    NaturalScale,
    SampledScale,
    ScaleFunction,
    one_sided_derivative,
    validate,
)
from .errors import InvalidSpec, WindowOutOfRange


class Status(str, enum.Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    TRIVIALLY_HOLDS = "TriviallyHolds"


class Method(str, enum.Enum):
    EXACT = "Exact"
    NUMERIC = "Numeric"


@dataclass(frozen=True)
class ZeroSetEstimate:
    measure: float
    error: float
    method: Method


@dataclass(frozen=True)
class RPVerdict:
    status: Status
    zero_set_measure: float
    error_bound: float
    method: Method
    is_extremal: bool
    notes: str = ""
    windows: tuple = ()

    @property
    def conclusive(self) -> bool:
        """False when a numeric estimate is positive but inside its error bound."""
        if self.status is not Status.HOLDS or self.method is Method.EXACT:
            return True
        return self.zero_set_measure <= 0.0

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "zero_set_measure": self.zero_set_measure,
            "error_bound": self.error_bound,
            "method": self.method.value,
            "is_extremal": self.is_extremal,
            "conclusive": self.conclusive,
            "notes": self.notes,
            "windows": [list(w) for w in self.windows],
        }


def _window_bounds(window) -> tuple[float, float]:
    if isinstance(window, Interval):
        return window.left, window.right
    lo, hi = window
    return float(lo), float(hi)


def _value_domain(scale: ScaleFunction):
    if isinstance(scale, InverseExplicitScale):
        return scale.value_lo, scale.value_hi
    if isinstance(scale, DensityScale):
        return scale._range
    return -math.inf, math.inf


def _numeric_zero_set(scale, lo, hi, threshold, n, seed):
    """Stratified estimate of ``|{q'_+ < threshold} cap [lo, hi]|``.

    One uniform point per stratum. The bound combines a 3-sigma sampling term,
    one stratum of discretisation slack and the drop observed when the
    threshold is shrunk 16-fold (mass of small-but-nonzero derivatives).
    """
    rng = np.random.default_rng(seed)
    edges = np.linspace(lo, hi, n + 1)
    pts = edges[:-1] + rng.uniform(size=n) * np.diff(edges)
    if isinstance(scale, (NaturalScale, SampledScale, InverseExplicitScale)):
        d = np.asarray(scale.q_derivative(pts, "right"), dtype=float)
    else:
        d = np.array([one_sided_derivative(scale, p, "right").value for p in pts])
    length = hi - lo
    p_hi = float(np.mean(d < threshold))
    p_lo = float(np.mean(d < threshold / 16.0))
    est = p_hi * length
    err = length * (3.0 * math.sqrt(max(p_hi * (1 - p_hi), 1.0 / n) / n) + 1.0 / n + (p_hi - p_lo))
    return est, err


def zero_derivative_measure(scale: ScaleFunction, window, resolution: float = 1e-9,
                            samples: int = 20000, seed: int = 0, force_numeric: bool = False) -> ZeroSetEstimate:
    """Lebesgue measure of ``{y in window : q'_+(y) = 0}``.

    ``window`` lies in natural coordinates, inside ``s(J°)``. ``resolution`` is
    the derivative threshold used by the numeric path.
    """
    lo, hi = _window_bounds(window)
    vlo, vhi = _value_domain(scale)
    if not (vlo <= lo < hi <= vhi):
        raise WindowOutOfRange(f"window [{lo}, {hi}] not inside the value range [{vlo}, {vhi}]")
    if not (math.isfinite(lo) and math.isfinite(hi)) and (force_numeric or isinstance(scale, InverseExplicitScale)):
        raise WindowOutOfRange("numeric zero-set estimation needs a bounded window")
    if not force_numeric:
        if isinstance(scale, (NaturalScale, DensityScale)):
            return ZeroSetEstimate(0.0, 0.0, Method.EXACT)
        if isinstance(scale, SampledScale):
            slopes = np.diff(scale.values) / np.diff(scale.grid)
            if np.all(np.isfinite(slopes)) and np.all(slopes > 0):
                return ZeroSetEstimate(0.0, 0.0, Method.EXACT)
        if isinstance(scale, InverseExplicitScale) and scale.zero_set_measure is not None:
            return ZeroSetEstimate(float(scale.zero_set_measure(lo, hi)), 0.0, Method.EXACT)
    est, err = _numeric_zero_set(scale, lo, hi, resolution, samples, seed)
    return ZeroSetEstimate(est, err, Method.NUMERIC)


@dataclass(frozen=True)
class ACReport:
    singular_mass: float
    error: float
    method: Method
    per_epsilon: tuple[tuple[float, float], ...]

    @property
    def absolutely_continuous(self) -> bool:
        return self.singular_mass - self.error <= 0.0

    @property
    def flag(self) -> str:
        return "AC" if self.absolutely_continuous else "NotAC"


def absolute_continuity_test(scale: ScaleFunction, compact, epsilon_grid=(1e-3, 1e-6, 1e-9),
                             samples: int = 20000, seed: int = 0) -> ACReport:
    """Singular part of ``ds`` on a compact of ``J°``.

    The ``s``-mass of ``q({q' = 0})`` equals the Lebesgue measure of the zero
    set itself; for each threshold in ``epsilon_grid`` the proxy
    ``|{q'_+ < eps}|`` is reported. A score of 0 means absolutely continuous at
    the tested resolution.
    """
    lo, hi = _window_bounds(compact)
    if not lo < hi:
        raise WindowOutOfRange("compact must have lo < hi")
    try:
        ylo, yhi = (float(v) for v in np.asarray(scale(np.array([lo, hi])), dtype=float))
    except ValueError as exc:
        raise WindowOutOfRange(str(exc)) from exc
    exact = zero_derivative_measure(scale, (ylo, yhi), seed=seed)
    if exact.method is Method.EXACT:
        rows = tuple((float(e), exact.measure) for e in epsilon_grid)
        return ACReport(exact.measure, 0.0, Method.EXACT, rows)
    rows = []
    last = None
    for eps in sorted(epsilon_grid, reverse=True):
        last = zero_derivative_measure(scale, (ylo, yhi), resolution=eps, samples=samples,
                                       seed=seed, force_numeric=True)
        rows.append((float(eps), last.measure))
    return ACReport(last.measure, last.error, Method.NUMERIC, tuple(rows))


def _natural_windows(spec: DiffusionSpec, depth: int = 8):
    """``s(J°)`` itself if bounded, else an expanding exhaustion by compacts."""
    lo, hi = spec.natural_range()
    if math.isfinite(lo) and math.isfinite(hi):
        return [(lo, hi)]
    mid = float(spec.scale(spec.metadata.get("x0", 0.0))) if spec.interval.in_interior(
        spec.metadata.get("x0", 0.0)) else 0.0
    out = []
    for k in range(depth):
        r = 2.0**k
        out.append((max(lo, mid - r), min(hi, mid + r)))
    return out


def rp_verdict(spec: DiffusionSpec, x0: float | None = None, resolution: float = 1e-9,
               samples: int = 20000, seed: int = 0, check: bool = True) -> RPVerdict:
    """Representation property (and extremality) of the law started at ``x0``."""
    if check:
        bad = validate(spec)
        if bad:
            raise InvalidSpec(bad)
    if x0 is None:
        x0 = spec.metadata.get("x0", None)
    if x0 is None:
        raise ValueError("a start point x0 is required")
    if not spec.interval.contains(x0):
        raise ValueError(f"x0={x0} is not in the state space {spec.interval}")
    if spec.is_absorbing_point(x0):
        return RPVerdict(Status.TRIVIALLY_HOLDS, 0.0, 0.0, Method.EXACT, True,
                         "absorbing start: every local martingale is constant")
    windows = _natural_windows(spec)
    measure, error, method = 0.0, 0.0, Method.EXACT
    rows = []
    for w in windows:
        est = zero_derivative_measure(spec.scale, w, resolution=resolution, samples=samples, seed=seed)
        rows.append((w[0], w[1], est.measure, est.error))
        if est.measure - est.error > measure - error or est.measure > measure:
            measure, error = est.measure, est.error
        if est.method is Method.NUMERIC:
            method = Method.NUMERIC
    fails = measure - error > 0.0
    status = Status.FAILS if fails else Status.HOLDS
    notes = "exact zero-set measure" if method is Method.EXACT else f"numeric at derivative threshold {resolution:g}"
    if len(windows) > 1:
        notes += f"; unbounded s(J°) tested on {len(windows)} nested windows"
    return RPVerdict(status, measure, error, method, not fails, notes, tuple(rows))
