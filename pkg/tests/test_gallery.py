import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gendiff.characteristics import validate
from gendiff.errors import NonPositiveRho, OutOfRange
from gendiff.gallery import (
    CantorQ,
    cantor_diffusion_spec,
    distance_to_set,
    dyadic_points,
    fat_cantor_set,
    feller_mckean_spec,
    ou_spec,
    sticky_bm_spec,
    summary,
)


def oracle_distance(x: Fraction, alpha: Fraction, depth: int = 40) -> Fraction:
    """Distance to the limit fat Cantor set by walking down the remnants."""
    lo, length = Fraction(0), Fraction(1)
    for k in range(1, depth + 1):
        gap = alpha / 4**k
        half = (length - gap) / 2
        g0, g1 = lo + half, lo + half + gap
        if g0 < x < g1:
            return min(x - g0, g1 - x)
        if x >= g1:
            lo = g1
        length = half
    return Fraction(0)


@pytest.fixture(scope="module")
def c12():
    return fat_cantor_set(12, 1.0)


def test_level_one_remnants():
    c = fat_cantor_set(1, 1.0)
    np.testing.assert_allclose(c.kept_intervals, [[0, 3 / 8], [5 / 8, 1]])
    x = np.linspace(0, 1, 2_000_001)
    integral = np.trapezoid(distance_to_set(c, x), x)
    assert integral == pytest.approx(1 / 64, abs=1e-10)


@pytest.mark.parametrize("L", [1, 2, 5, 10, 20])
def test_kept_length_exact(L):
    c = fat_cantor_set(L, 1.0)
    exact = 1 - sum(Fraction(2 ** (k - 1), 4**k) for k in range(1, L + 1))
    assert c.kept_length_exact() == exact
    assert float(np.sum(np.diff(c.kept_intervals, axis=1))) == pytest.approx(float(exact), abs=1e-12)
    assert len(c.kept_intervals) == 2**L


@pytest.mark.parametrize("alpha", [1.0, 0.5, 0.25])
def test_limit_measure(alpha):
    c = fat_cantor_set(18, alpha)
    assert c.analytic_measure == 1 - alpha / 2
    assert float(c.kept_length_exact()) == pytest.approx(1 - alpha / 2, abs=2**-18)
    assert c.measure_below(1.0) == pytest.approx(1 - alpha / 2, abs=1e-12)


def test_limit_distance_against_recursive_oracle(c12):
    xs = np.random.default_rng(7).uniform(0, 1, 1000)
    got = c12.limit_distance(xs)
    want = np.array([float(oracle_distance(Fraction(x), Fraction(1))) for x in xs])
    np.testing.assert_allclose(got, want, atol=1e-15)


def test_distance_to_set_matches_limit_on_resolved_gaps(c12):
    # inside gaps removed at level <= L the two distances agree
    kept = c12.kept_intervals
    mids = 0.5 * (kept[:-1, 1] + kept[1:, 0])
    np.testing.assert_allclose(distance_to_set(c12, mids), c12.limit_distance(mids), atol=1e-15)


@pytest.mark.parametrize("alpha", [1.0, 0.5])
def test_q_total(alpha):
    assert CantorQ(fat_cantor_set(3, alpha)).total == pytest.approx(alpha**2 / 56, rel=1e-12)


def test_q_against_quadrature(c12):
    cq = CantorQ(c12)
    x = np.linspace(0, 1, 2**21 + 1)
    d = cq.raw_derivative(x)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(x))])
    idx = np.linspace(0, len(x) - 1, 50).astype(int)
    np.testing.assert_allclose(cq.raw(x[idx]), cum[idx], atol=1e-10)


def test_q_derivative_is_distance(c12):
    cq = CantorQ(c12)
    xs = np.random.default_rng(3).uniform(0, 1, 500)
    np.testing.assert_allclose(cq.derivative(xs) * cq.total, c12.limit_distance(xs), atol=1e-15)
    assert cq(0.0) == 0.0 and cq(1.0) == pytest.approx(1.0, abs=1e-14)


def test_q_strictly_increasing(c12):
    cq = CantorQ(c12)
    x = np.unique(np.random.default_rng(4).uniform(0, 1, 200_000))
    assert np.all(np.diff(cq(x)) >= 0)
    # pairs far enough apart to be resolved in double precision
    a = np.random.default_rng(5).uniform(0, 0.99, 5000)
    assert np.all(cq(a + 1e-3) > cq(a))
    # structurally: any interval longer than a remnant meets a gap, where d_G > 0
    longest = float(np.max(np.diff(c12.kept_intervals, axis=1)))
    starts = np.random.default_rng(6).uniform(0, 1 - longest, 2000)
    kept = c12.kept_intervals
    i = np.clip(np.searchsorted(kept[:, 0], starts, side="right") - 1, 0, None)
    assert not np.any(starts + 1.01 * longest <= kept[i, 1])


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_q_prime_lipschitz(x, y):
    cq = CantorQ(fat_cantor_set(10, 1.0))
    lhs = abs(cq.raw_derivative(x) - cq.raw_derivative(y))
    assert lhs <= abs(x - y) + 1e-15


def test_zero_set_measure_windows(c12):
    cq = CantorQ(c12)
    assert cq.zero_set_measure(0, 1) == 0.5
    assert cq.zero_set_measure(0, 3 / 8) == pytest.approx(0.25, abs=1e-15)
    assert cq.zero_set_measure(3 / 8, 5 / 8) == pytest.approx(0.0, abs=1e-15)


def test_cantor_errors():
    with pytest.raises(ValueError):
        fat_cantor_set(0)
    with pytest.raises(ValueError):
        fat_cantor_set(3, 1.5)
    with pytest.raises(OutOfRange):
        distance_to_set(fat_cantor_set(2), 1.2)
    with pytest.raises(OutOfRange):
        cantor_diffusion_spec(fat_cantor_set(2), x0=1.0)


def test_cantor_spec_is_valid():
    spec = cantor_diffusion_spec(fat_cantor_set(8))
    assert validate(spec) == []
    info = summary(spec)
    assert info["zero_set_measure"] == 0.5 and info["q_total_unscaled"] == pytest.approx(1 / 56)


def test_sticky_spec():
    spec = sticky_bm_spec(2.0)
    assert spec.speed.atoms == ((0.0, 2.0),)
    for bad in (0.0, -1.0):
        with pytest.raises(NonPositiveRho):
            sticky_bm_spec(bad)


def test_dyadic_points_levels():
    pts = dyadic_points(7, seed=1)
    assert pts[0] == 0.0
    assert sorted(pts[1:3]) == [-0.5, 0.5]
    assert sorted(pts[3:7]) == [-0.75, -0.25, 0.25, 0.75]
    np.testing.assert_array_equal(dyadic_points(7, seed=1), pts)


def test_feller_mckean_masses_and_truncation_note():
    spec = feller_mckean_spec(10)
    masses = [m for _, m in spec.speed.atoms]
    assert masses == [2.0**-k for k in range(1, 11)]
    assert spec.speed.density is None
    assert spec.metadata["truncated"] is True
    assert summary(spec)["truncation_defect"] == 2.0**-10
    assert validate(spec) == []


def test_ou_spec_valid():
    assert validate(ou_spec()) == []
    assert math.isclose(ou_spec().scale.derivative(1.0), math.e, rel_tol=1e-10)
