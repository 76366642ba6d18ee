"""Exact constructors for the worked examples.

The centrepiece is the singular-scale counterexample: a fat Cantor set ``G`` of
positive measure, its distance function ``d_G`` and ``q(x) = int_0^x d_G``,
which is strictly increasing with a Lipschitz derivative that vanishes on
``G``. ``Y = q(W)`` for an absorbed Brownian motion ``W`` is then a diffusion
with scale ``s = q^{-1}``.

A ``FatCantorSet`` stores the level-``L`` remnants explicitly. ``q`` and its
derivative are evaluated on the limit set by descending the self-similar
construction until remnants are shorter than floating-point resolution, so
``q`` is strictly increasing at every finite ``levels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .catalog import affine, const
from .characteristics import (
    BoundaryBehavior,
    DiffusionSpec,
    InverseExplicitScale,
    Interval,
    NaturalScale,
    SpeedMeasure,
    real_line,
    sde_spec,
)
from .errors import BudgetExceeded, NonPositiveRho, OutOfRange

# remnants shorter than this are below double resolution on [0, 1]
_RESOLUTION = 1e-17


@dataclass(frozen=True, eq=False)
class FatCantorSet:
    """Fat Cantor set: level ``k`` removes ``2**(k-1)`` centred open gaps of
    length ``alpha * 4**-k``, one from each remnant."""

    levels: int
    alpha: float
    kept_intervals: np.ndarray
    removal_fractions: tuple[float, ...]

    @property
    def analytic_measure(self) -> float:
        """Lebesgue measure of the limit set, ``1 - alpha/2``."""
        return 1.0 - self.alpha / 2.0

    @property
    def analytic_measure_exact(self) -> Fraction:
        return 1 - Fraction(self.alpha) / 2

    def kept_length_exact(self) -> Fraction:
        """Total length of the level-``levels`` remnants in exact arithmetic."""
        a = Fraction(self.alpha)
        return 1 - a * sum(Fraction(2 ** (k - 1), 4**k) for k in range(1, self.levels + 1))

    @cached_property
    def _ladder(self):
        """Per-level remnant length, gap length, and the integral of ``d_G`` and
        the ``G``-measure carried by one remnant, down to ``_RESOLUTION``."""
        ell, gaps = [1.0], [0.0]
        k = 0
        while ell[-1] > _RESOLUTION:
            k += 1
            gap = self.alpha * 4.0**-k
            ell.append((ell[-1] - gap) / 2.0)
            gaps.append(gap)
        ell, gaps = np.array(ell), np.array(gaps)
        K = len(ell) - 1
        area = np.zeros(K + 1)
        for j in range(K - 1, -1, -1):
            area[j] = 2.0 * area[j + 1] + (gaps[j + 1] / 2.0) ** 2
        g = (1.0 - self.alpha / 2.0) / 2.0 ** np.arange(K + 1)
        return ell, gaps, area, g

    def _descend(self, x):
        """Walk ``x`` down the construction. Returns the limit distance to
        ``G``, the integral of ``d_G`` over ``[0, x]`` and ``|G cap [0, x]|``."""
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > 1)):
            raise OutOfRange("Cantor functions are defined on [0, 1]")
        flat = x.ravel()
        ell, gaps, area, g = self._ladder
        lo = np.zeros_like(flat)
        dist = np.zeros_like(flat)
        qsum = np.zeros_like(flat)
        gsum = np.zeros_like(flat)
        live = np.ones(flat.shape, dtype=bool)
        for k in range(1, len(ell)):
            if not live.any():
                break
            l, gap = ell[k], gaps[k]
            w = 0.5 * gap
            rel = flat - lo
            in_gap = live & (rel > l) & (rel < l + gap)
            in_right = live & (rel >= l + gap)
            u = rel - l
            tent = np.where(u <= w, 0.5 * u * u, w * w - 0.5 * (gap - u) ** 2)
            dist = np.where(in_gap, np.minimum(u, gap - u), dist)
            qsum = qsum + np.where(in_gap, area[k] + tent, 0.0) + np.where(in_right, area[k] + w * w, 0.0)
            gsum = gsum + np.where(in_gap | in_right, g[k], 0.0)
            lo = np.where(in_right, lo + l + gap, lo)
            live &= ~in_gap
        # leftover remnants are below resolution: d_G there is zero to rounding
        gsum = gsum + np.where(live, np.clip(flat - lo, 0.0, ell[-1]), 0.0)
        shape = x.shape
        return dist.reshape(shape), qsum.reshape(shape), gsum.reshape(shape)

    def limit_distance(self, x):
        """``d_G(x)`` for the limit set ``G``."""
        d, _, _ = self._descend(x)
        return float(d) if np.ndim(x) == 0 else d

    def measure_below(self, x):
        """``|G cap [0, x]|``."""
        _, _, m = self._descend(x)
        return float(m) if np.ndim(x) == 0 else m


def fat_cantor_set(levels: int, alpha: float = 1.0) -> FatCantorSet:
    """Build the level-``levels`` remnants of the fat Cantor set with
    removal schedule ``alpha * 4**-k``."""
    if levels < 1 or int(levels) != levels:
        raise ValueError("levels must be a positive integer")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    kept = np.array([[0.0, 1.0]])
    fracs = []
    length = 1.0
    for k in range(1, levels + 1):
        gap = alpha * 4.0**-k
        if gap >= length:
            raise BudgetExceeded(f"level {k} gap {gap} does not fit a remnant of length {length}")
        length = (length - gap) / 2.0
        left = kept[:, 0]
        right_start = left + length + gap
        kept = np.stack(
            [np.stack([left, left + length], axis=1), np.stack([right_start, right_start + length], axis=1)],
            axis=1,
        ).reshape(-1, 2)
        fracs.append(gap)
    kept[-1, 1] = 1.0
    return FatCantorSet(int(levels), float(alpha), kept, tuple(fracs))


def distance_to_set(cset: FatCantorSet, x):
    """Distance from ``x`` to the union of the level-``levels`` remnants."""
    xx = np.asarray(x, dtype=float)
    if np.any((xx < 0) | (xx > 1)):
        raise OutOfRange("x must lie in [0, 1]")
    starts, ends = cset.kept_intervals[:, 0], cset.kept_intervals[:, 1]
    i = np.clip(np.searchsorted(starts, xx, side="right") - 1, 0, len(starts) - 1)
    j = np.minimum(i + 1, len(starts) - 1)
    outside = xx > ends[i]
    d = np.where(outside, np.minimum(xx - ends[i], starts[j] - xx), 0.0)
    return float(d) if np.ndim(x) == 0 else d


@dataclass(frozen=True, eq=False)
class CantorQ:
    """``q(x) = int_0^x d_G``, rescaled by ``total = q(1)`` to map onto ``[0, 1]``."""

    base_set: FatCantorSet

    @cached_property
    def total(self) -> float:
        return float(self.base_set._ladder[2][0])

    def raw(self, x):
        _, q, _ = self.base_set._descend(x)
        return float(q) if np.ndim(x) == 0 else q

    def raw_derivative(self, x):
        return self.base_set.limit_distance(x)

    def __call__(self, x):
        _, q, _ = self.base_set._descend(x)
        # pin q(1) = 1 against rounding in the level sums
        q = np.where(np.asarray(x) == 1.0, 1.0, np.clip(q / self.total, 0.0, 1.0))
        return float(q) if np.ndim(x) == 0 else q

    def derivative(self, x):
        d = self.base_set.limit_distance(x) / self.total
        return float(d) if np.ndim(x) == 0 else d

    def zero_set_measure(self, lo: float, hi: float) -> float:
        """``|{q' = 0} cap [lo, hi]|`` = ``|G cap [lo, hi]|``, exact."""
        lo, hi = max(lo, 0.0), min(hi, 1.0)
        if hi <= lo:
            return 0.0
        if lo == 0.0 and hi == 1.0:
            return self.base_set.analytic_measure
        m = self.base_set.measure_below(np.array([lo, hi]))
        return float(m[1] - m[0])

    @cached_property
    def segment_table(self) -> np.ndarray:
        """Rows ``(gap_start, gap_end, raw q at gap_start)`` for every gap
        removed up to level ``levels``; ``q`` is quadratic on each half gap."""
        kept = self.base_set.kept_intervals
        starts, ends = kept[:-1, 1], kept[1:, 0]
        return np.column_stack([starts, ends, self.raw(starts)])

    def scale(self) -> InverseExplicitScale:
        return InverseExplicitScale(
            q=self,
            q_prime=self.derivative,
            value_lo=0.0,
            value_hi=1.0,
            zero_set_measure=self.zero_set_measure,
            tag=("cantor", self.base_set.levels, self.base_set.alpha),
        )


def cantor_q(cset: FatCantorSet) -> InverseExplicitScale:
    """The counterexample scale, as its exact inverse ``q`` with ``q(1) = 1``."""
    return CantorQ(cset).scale()


def cantor_diffusion_spec(cset: FatCantorSet, x0: float = 0.5) -> DiffusionSpec:
    """``q(W)`` for Brownian motion ``W`` absorbed at 0 and 1: scale
    ``s = q^{-1}`` and ``m o s^{-1}`` equal to Lebesgue measure on (0, 1)."""
    if not 0 < x0 < 1:
        raise OutOfRange("x0 must lie in (0, 1)")
    return DiffusionSpec(
        interval=Interval(0.0, 1.0, True, True),
        scale=cantor_q(cset),
        speed=SpeedMeasure(natural_density=const(1.0)),
        left_behavior=BoundaryBehavior.absorbing(),
        right_behavior=BoundaryBehavior.absorbing(),
        label=f"cantor-diffusion levels={cset.levels} alpha={cset.alpha!r}",
        metadata={"family": "cantor", "levels": cset.levels, "alpha": cset.alpha, "x0": x0},
    )


def sticky_bm_spec(rho: float, x0: float = 0.0) -> DiffusionSpec:
    """Brownian motion sticky at zero: ``m(dx) = dx + rho delta_0``."""
    if not rho > 0:
        raise NonPositiveRho("stickiness rho must be positive")
    return DiffusionSpec(
        interval=real_line(),
        scale=NaturalScale(),
        speed=SpeedMeasure(density=const(1.0), atoms=((0.0, float(rho)),)),
        label=f"sticky-bm rho={rho!r}",
        metadata={"family": "sticky", "rho": float(rho), "x0": x0},
    )


def brownian_spec(left: float = -math.inf, right: float = math.inf, x0: float = 0.0) -> DiffusionSpec:
    """Standard Brownian motion, absorbed at any finite endpoint."""
    lc, rc = math.isfinite(left), math.isfinite(right)
    beh = [BoundaryBehavior.absorbing() if c else BoundaryBehavior.inaccessible() for c in (lc, rc)]
    return DiffusionSpec(
        interval=Interval(left, right, lc, rc),
        scale=NaturalScale(),
        speed=SpeedMeasure(density=const(1.0)),
        left_behavior=beh[0],
        right_behavior=beh[1],
        label="brownian",
        metadata={"family": "brownian", "x0": x0},
    )


def dyadic_points(n: int, seed: int = 0) -> np.ndarray:
    """First ``n`` dyadic rationals of (-1, 1), level by level (0, then
    +-1/2, then the odd multiples of 1/4, ...); order inside a level is a
    seeded permutation."""
    rng = np.random.default_rng(seed)
    out = [0.0]
    j = 1
    while len(out) < n:
        den = 2**j
        level = np.arange(-den + 1, den, 2) / den
        out.extend(rng.permutation(level).tolist())
        j += 1
    return np.array(out[:n])


def feller_mckean_spec(n_atoms: int, seed: int = 0, x0: float = 0.0) -> DiffusionSpec:
    """Purely atomic speed measure on a dense set, truncated to ``n_atoms``
    dyadic atoms with masses ``2**-k`` on ``[-1, 1]`` with reflecting ends."""
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    pts = dyadic_points(n_atoms, seed)
    masses = 2.0 ** -np.arange(1, n_atoms + 1)
    srt = np.sort(np.concatenate([[-1.0, 1.0], pts]))
    max_gap = float(np.max(np.diff(srt)))
    return DiffusionSpec(
        interval=Interval(-1.0, 1.0, True, True),
        scale=NaturalScale(),
        speed=SpeedMeasure(atoms=tuple(zip(pts.tolist(), masses.tolist()))),
        left_behavior=BoundaryBehavior.reflecting(),
        right_behavior=BoundaryBehavior.reflecting(),
        label=f"feller-mckean n_atoms={n_atoms} seed={seed}",
        metadata={
            "family": "feller-mckean",
            "n_atoms": n_atoms,
            "seed": seed,
            "x0": x0,
            "truncated": True,
            "validation_resolution": max(1, int(1.0 / max_gap)),
        },
    )


def ou_spec(theta: float = 1.0, sigma: float = 1.0, x0: float = 0.0) -> DiffusionSpec:
    """Ornstein-Uhlenbeck ``dY = -theta Y dt + sigma dW`` via its SDE coefficients."""
    return sde_spec(affine(0.0, -theta), const(sigma), real_line(), 0.0,
                    label=f"ou theta={theta!r} sigma={sigma!r}", family="ou", x0=x0)


def summary(spec: DiffusionSpec) -> dict:
    """Analytic facts about a gallery spec for display next to its text form."""
    meta = spec.metadata
    out = {"label": spec.label, "family": meta.get("family", "custom")}
    fam = out["family"]
    if fam == "cantor":
        a = meta["alpha"]
        out.update(levels=meta["levels"], alpha=a, zero_set_measure=1.0 - a / 2.0,
                   q_total_unscaled=CantorQ(fat_cantor_set(1, a)).total)
    elif fam == "sticky":
        out.update(rho=meta["rho"])
    elif fam == "feller-mckean":
        masses = [m for _, m in spec.speed.atoms]
        out.update(n_atoms=meta["n_atoms"], total_mass=float(sum(masses)),
                   truncation_defect=2.0 ** -meta["n_atoms"])
    if "x0" in meta:
        out["x0"] = meta["x0"]
    return out
