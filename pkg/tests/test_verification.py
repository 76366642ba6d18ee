import math

import pytest

from gendiff.errors import InfiniteTarget, OrderViolation
from gendiff.gallery import brownian_spec, cantor_diffusion_spec, fat_cantor_set, ou_spec, sticky_bm_spec
from gendiff.verification import (
    StatReport,
    exit_probability_test,
    exit_time_test,
    feller_mckean_occupation_test,
    feller_mckean_refinement_test,
    martingale_test,
    sticky_characteristics_test,
    sticky_occupation_monotonicity,
    sticky_occupation_test,
)


# -- StatReport -------------------------------------------------------------------


@pytest.mark.parametrize("kw,passed", [
    (dict(estimate=1.0, stderr=0.1, target=1.25), True),
    (dict(estimate=1.0, stderr=0.1, target=1.35), False),
    (dict(estimate=1.1, stderr=0.0, target=1.0, mode="relative", tolerance=0.15), True),
    (dict(estimate=1.2, stderr=0.0, target=1.0, mode="relative", tolerance=0.15), False),
    (dict(estimate=0.04, stderr=0.0, target=0.0, mode="at_most", tolerance=0.05), True),
    (dict(estimate=0.94, stderr=0.0, target=1.0, mode="at_least", tolerance=0.95), False),
    (dict(estimate=2.0, stderr=0.0, target=2.0), True),
])
def test_report_modes(kw, passed):
    rep = StatReport("r", n_paths=10, **kw)
    assert rep.passed is passed
    assert rep.line().startswith("PASS" if passed else "FAIL")


def test_report_extra_checks_and_dict():
    rep = StatReport("r", 1.0, 0.1, 1.0, 10, extra_checks={"ok": True, "bad": False})
    assert not rep.passed
    d = rep.to_dict()
    assert d["pass"] is False and d["z_score"] == 0.0
    assert StatReport("r", 1.0, 0.0, 0.0, 1).to_dict()["z_score"] == "inf"
    with pytest.raises(ValueError):
        StatReport("r", 1.0, 0.1, 1.0, 10, mode="weird").passed


# -- exit problems -------------------------------------------------------------


def test_exit_probability_bm_small():
    rep = exit_probability_test(brownian_spec(), 0.3, 0.0, 1.0, n_paths=400, seed=1, h=0.05)
    assert rep.target == pytest.approx(0.3)
    assert rep.passed
    assert rep.metadata["s_start_snapped"] == pytest.approx(0.3)


def test_exit_probability_ou_target():
    spec = ou_spec()
    rep = exit_probability_test(spec, 0.2, -1.0, 1.0, n_paths=300, seed=2)
    assert rep.target == pytest.approx(0.5 + 0.2 * 1.0 / 2.0, abs=0.1)
    assert rep.passed


def test_exit_probability_cantor_small():
    cset = fat_cantor_set(8)
    spec = cantor_diffusion_spec(cset)
    x0 = float(spec.scale.q(0.3))
    rep = exit_probability_test(spec, x0, 0.0, 1.0, n_paths=300, seed=3)
    assert rep.target == pytest.approx(0.3, abs=1e-9)
    assert rep.passed


def test_exit_time_bm_and_edge():
    rep = exit_time_test(brownian_spec(), 0.5, 0.0, 1.0, n_paths=400, seed=4, h=0.05)
    assert rep.target == pytest.approx(0.25) and rep.passed
    edge = exit_time_test(brownian_spec(), 0.0, 0.0, 1.0, n_paths=10)
    assert edge.estimate == 0.0 and edge.target == 0.0 and edge.passed


def test_exit_time_sticky_target():
    rep = exit_time_test(sticky_bm_spec(1.0), 0.0, -1.0, 1.0, n_paths=300, seed=5, h=0.05)
    assert rep.target == pytest.approx(2.0) and rep.passed


def test_exit_errors():
    with pytest.raises(OrderViolation):
        exit_probability_test(brownian_spec(), 2.0, 0.0, 1.0, n_paths=10)
    with pytest.raises(OrderViolation):
        exit_probability_test(brownian_spec(0, 1), 0.5, -1.0, 1.0, n_paths=10)
    with pytest.raises(InfiniteTarget):
        exit_time_test(brownian_spec(0, math.inf), 1.0, 0.0, math.inf, n_paths=10)


def test_martingale_small():
    rep = martingale_test(brownian_spec(), 0.5, 0.0, 1.0, n_paths=400, seed=6, h=0.05)
    assert rep.passed and len(rep.metadata["per_checkpoint"]) == 4
    assert rep.extra_checks["all_checkpoints_within_z"]
    with pytest.raises(ValueError):
        martingale_test(brownian_spec(), 0.5, 0.0, 1.0, checkpoints=(), n_paths=10)


def test_reports_reproducible_bitwise():
    a = exit_time_test(sticky_bm_spec(0.5), 0.0, -1.0, 1.0, n_paths=200, seed=8, h=0.1)
    b = exit_time_test(sticky_bm_spec(0.5), 0.0, -1.0, 1.0, n_paths=200, seed=8, h=0.1)
    assert a.to_dict() == b.to_dict()


def test_workers_do_not_change_reports():
    a = exit_probability_test(brownian_spec(), 0.3, 0.0, 1.0, n_paths=300, seed=1, h=0.05)
    b = exit_probability_test(brownian_spec(), 0.3, 0.0, 1.0, n_paths=300, seed=1, h=0.05, workers=2)
    assert a.to_dict() == b.to_dict()


# -- sticky --------------------------------------------------------------------------


def test_sticky_occupation_small():
    rep = sticky_occupation_test(1.0, n_paths=300, seed=1, h=0.05)
    assert rep.mode == "relative" and rep.extra_checks["no_wall_hit"]
    assert rep.metadata["chain_expected_ratio"] == pytest.approx(1.05)
    assert rep.estimate == pytest.approx(1.0, rel=0.3)
    with pytest.raises(ValueError):
        sticky_occupation_test(0.0, n_paths=10)


def test_sticky_monotone_small():
    rep = sticky_occupation_monotonicity(n_paths=200, seed=2, h=0.05)
    means = rep.metadata["mean_occupation"]
    assert means == sorted(means) and rep.passed


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_sticky_characteristics_small(rho):
    rep = sticky_characteristics_test(rho, n_paths=100, seed=3, h=0.02)
    assert rep.passed, rep.to_dict()


def test_sticky_characteristics_rejects_negative():
    with pytest.raises(ValueError):
        sticky_characteristics_test(-1.0, n_paths=10)


# -- Feller-McKean ----------------------------------------------------------------------


def test_feller_mckean_small():
    rep = feller_mckean_occupation_test(15, n_paths=50, seed=1)
    assert rep.passed and rep.estimate >= 0.95
    assert rep.metadata["holding_ratio_oracle"] == pytest.approx(1.0)
    assert rep.metadata["notes"]


def test_feller_mckean_refinement_small():
    rep = feller_mckean_refinement_test(8, n_paths=30, seed=2)
    assert rep.passed
    assert len(rep.metadata["fractions"]) == 2
