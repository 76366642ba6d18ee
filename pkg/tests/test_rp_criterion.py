import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gendiff.catalog import const
from gendiff.characteristics import (
    DiffusionSpec,
    InverseExplicitScale,
    Interval,
    NaturalScale,
    SampledScale,
    SpeedMeasure,
)
from gendiff.errors import InvalidSpec, WindowOutOfRange
from gendiff.gallery import (
    brownian_spec,
    cantor_diffusion_spec,
    cantor_q,
    fat_cantor_set,
    feller_mckean_spec,
    ou_spec,
    sticky_bm_spec,
)
from gendiff.rp_criterion import (
    Method,
    Status,
    absolute_continuity_test,
    rp_verdict,
    zero_derivative_measure,
)


@pytest.fixture(scope="module")
def cset():
    return fat_cantor_set(10, 1.0)


def opaque(scale):
    """The same scale with its exact zero-set hook removed."""
    return dataclasses.replace(scale, zero_set_measure=None)


def cube_scale():
    return InverseExplicitScale(q=lambda y: y**3, q_prime=lambda y: 3 * np.asarray(y) ** 2,
                                value_lo=-1.0, value_hi=1.0)


# -- zero-set measure ----------------------------------------------------------


def test_exact_for_regular_scales():
    for scale in (NaturalScale(), ou_spec().scale, SampledScale((0.0, 1.0, 2.0), (0.0, 1.0, 5.0))):
        est = zero_derivative_measure(scale, (-0.5, 0.5) if not isinstance(scale, SampledScale) else (0.0, 5.0))
        assert est.measure == 0.0 and est.method is Method.EXACT


def test_cantor_exact_measure(cset):
    q = cantor_q(cset)
    assert zero_derivative_measure(q, (0, 1)).measure == 0.5
    est = zero_derivative_measure(q, (0, 3 / 8))
    assert est.measure == pytest.approx(0.25, abs=1e-15) and est.method is Method.EXACT


@pytest.mark.parametrize("window", [(0.0, 1.0), (0.0, 0.375), (0.1, 0.7)])
def test_numeric_agrees_with_exact(cset, window):
    q = cantor_q(cset)
    exact = zero_derivative_measure(q, window).measure
    num = zero_derivative_measure(q, window, force_numeric=True)
    assert num.method is Method.NUMERIC
    assert abs(num.measure - exact) <= num.error


def test_numeric_cantor_resolution_monotone(cset):
    q = opaque(cantor_q(cset))
    vals = [zero_derivative_measure(q, (0, 1), resolution=r).measure for r in (1e-3, 1e-6, 1e-9, 1e-12)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (0.5, -3.0), (10.0, 0.0)])
def test_affine_invariance(cset, a, b):
    q = cantor_q(cset)
    moved = q.affine(a, b)
    est = zero_derivative_measure(moved, (b, a + b))
    assert est.measure == pytest.approx(0.5 * a, rel=1e-12)


def test_window_errors(cset):
    with pytest.raises(WindowOutOfRange):
        zero_derivative_measure(cantor_q(cset), (-0.5, 0.5))
    with pytest.raises(WindowOutOfRange):
        zero_derivative_measure(cantor_q(cset), (0.6, 0.2))
    with pytest.raises(WindowOutOfRange):
        zero_derivative_measure(NaturalScale(), (0.0, math.inf), force_numeric=True)


def test_opaque_cube_is_numeric_and_small():
    est = zero_derivative_measure(cube_scale(), (-1, 1))
    assert est.method is Method.NUMERIC
    # true value at threshold 1e-9 is 2 sqrt(1e-9 / 3)
    assert est.measure <= 2 * math.sqrt(1e-9 / 3) + est.error


# -- absolute continuity ------------------------------------------------------------


def test_ac_regular():
    rep = absolute_continuity_test(NaturalScale(), (-1, 1))
    assert rep.absolutely_continuous and rep.flag == "AC" and rep.singular_mass == 0.0


def test_ac_cantor_not_ac(cset):
    q = cantor_q(cset)
    lo, hi = q.q(0.01), q.q(0.3)
    rep = absolute_continuity_test(q, (lo, hi))
    assert rep.flag == "NotAC"
    assert rep.singular_mass == pytest.approx(q.zero_set_measure(0.01, 0.3), abs=1e-5)


def test_ac_cube_numeric_decreasing():
    rep = absolute_continuity_test(cube_scale(), (-1, 1))
    assert rep.method is Method.NUMERIC and rep.flag == "AC"
    masses = [m for _, m in rep.per_epsilon]
    assert masses == sorted(masses, reverse=True)
    # |{3 y^2 < 1e-3}| = 2 sqrt(1e-3 / 3)
    assert masses[0] == pytest.approx(2 * math.sqrt(1e-3 / 3), abs=0.005)


def test_ac_bad_compact():
    with pytest.raises(WindowOutOfRange):
        absolute_continuity_test(NaturalScale(), (1, 1))


# -- verdicts ------------------------------------------------------------------


@pytest.mark.parametrize("x0", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_cantor_fails_from_every_interior_start(cset, x0):
    v = rp_verdict(cantor_diffusion_spec(cset, x0=x0))
    assert v.status is Status.FAILS
    assert v.zero_set_measure == 0.5 and v.method is Method.EXACT
    assert v.is_extremal is False and v.conclusive


@pytest.mark.parametrize("alpha", [1.0, 0.5, 0.2])
def test_cantor_measure_tracks_alpha(alpha):
    v = rp_verdict(cantor_diffusion_spec(fat_cantor_set(8, alpha)))
    assert v.zero_set_measure == pytest.approx(1 - alpha / 2)


def test_cantor_opaque_numeric_fails(cset):
    spec = cantor_diffusion_spec(cset)
    spec = dataclasses.replace(spec, scale=opaque(spec.scale))
    v = rp_verdict(spec, samples=5000)
    assert v.status is Status.FAILS and v.method is Method.NUMERIC
    assert abs(v.zero_set_measure - 0.5) <= v.error_bound


@pytest.mark.parametrize("spec", [sticky_bm_spec(1.0), ou_spec(), feller_mckean_spec(50), brownian_spec(0, 1, 0.5)],
                         ids=["sticky", "ou", "feller-mckean", "bm-interval"])
def test_regular_specs_hold(spec):
    v = rp_verdict(spec)
    assert v.status is Status.HOLDS and v.is_extremal and v.zero_set_measure == 0.0


def test_absorbed_start_trivially_holds(cset):
    v = rp_verdict(brownian_spec(0.0, 1.0), x0=0.0)
    assert v.status is Status.TRIVIALLY_HOLDS and v.is_extremal
    v = rp_verdict(cantor_diffusion_spec(cset), x0=1.0)
    assert v.status is Status.TRIVIALLY_HOLDS


def test_unbounded_uses_nested_windows():
    v = rp_verdict(sticky_bm_spec(1.0))
    assert len(v.windows) == 8
    widths = [w[1] - w[0] for w in v.windows]
    assert widths == sorted(widths)


def test_invalid_spec_raises():
    bad = DiffusionSpec(Interval(-1, 1), NaturalScale(), SpeedMeasure(density=const(1), atoms=((0.0, -1.0),)),
                        metadata={"x0": 0.0})
    with pytest.raises(InvalidSpec):
        rp_verdict(bad)


def test_start_required_and_inside():
    spec = DiffusionSpec(Interval(-1, 1), NaturalScale(), SpeedMeasure(density=const(1)))
    with pytest.raises(ValueError):
        rp_verdict(spec)
    with pytest.raises(ValueError):
        rp_verdict(spec, x0=3.0)


def test_to_dict_round_fields(cset):
    d = rp_verdict(cantor_diffusion_spec(cset)).to_dict()
    assert d["status"] == "Fails" and d["method"] == "Exact" and d["conclusive"] is True


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.floats(0.05, 1.0), st.floats(0.05, 0.95))
def test_verdict_invariants(levels, alpha, x0):
    v = rp_verdict(cantor_diffusion_spec(fat_cantor_set(levels, alpha), x0=x0))
    # extremality mirrors the verdict; a positive zero set means failure
    assert v.is_extremal == (v.status is not Status.FAILS)
    assert (v.zero_set_measure - v.error_bound > 0) == (v.status is Status.FAILS)
    assert v.status is Status.FAILS
