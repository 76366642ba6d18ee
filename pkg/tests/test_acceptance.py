"""Acceptance gate: one PASS/FAIL line per criterion (see the terminal summary)."""

import io
import json
import time
from fractions import Fraction

import numpy as np
import pytest

from gendiff import cli
from gendiff.gallery import (
    CantorQ,
    brownian_spec,
    cantor_diffusion_spec,
    fat_cantor_set,
    feller_mckean_spec,
    ou_spec,
    sticky_bm_spec,
)
from gendiff.rp_criterion import Method, Status, rp_verdict
from gendiff.simulator import Probes, build_grid_chain, run_ensemble
from gendiff.verification import (
    exit_probability_test,
    exit_time_test,
    feller_mckean_occupation_test,
    feller_mckean_refinement_test,
    martingale_test,
    sticky_characteristics_test,
    sticky_occupation_monotonicity,
    sticky_occupation_test,
)

from .test_gallery import oracle_distance


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def cli_run(argv, stdin_text=""):
    out = io.StringIO()
    code = cli.main(argv, stdin=io.StringIO(stdin_text), stdout=out)
    return code, out.getvalue()


def test_criterion_01_cantor_fails(acceptance):
    _, spec_text = cli_run(["gallery", "cantor", "--levels", "12", "--alpha", "1"])
    with Clock() as c:
        code, out = cli_run(["rp-check", "-", "--json"], spec_text)
    res = json.loads(out)["result"]
    ok = (code == 2 and res["status"] == "Fails" and res["zero_set_measure"] == 0.5
          and res["method"] == "Exact" and c.seconds < 1.0)
    acceptance(1, ok, f"measure={res['zero_set_measure']} method={res['method']} exit={code} t={c.seconds:.2f}s")
    assert ok


def test_criterion_02_positive_examples_hold(acceptance):
    specs = [sticky_bm_spec(r) for r in (0.1, 1.0, 10.0)] + [feller_mckean_spec(200), ou_spec()]
    worst, statuses = 0.0, []
    for spec in specs:
        with Clock() as c:
            v = rp_verdict(spec)
        worst = max(worst, c.seconds)
        statuses.append(v.status is Status.HOLDS and v.is_extremal)
    ok = all(statuses) and worst < 1.0
    acceptance(2, ok, f"holds={statuses} slowest={worst:.2f}s")
    assert ok


def test_criterion_03_absorbed_start(acceptance):
    with Clock() as c:
        a = rp_verdict(brownian_spec(0.0, 1.0), x0=0.0)
        b = rp_verdict(cantor_diffusion_spec(fat_cantor_set(10)), x0=1.0)
    ok = a.status is Status.TRIVIALLY_HOLDS and b.status is Status.TRIVIALLY_HOLDS and c.seconds < 1.0
    acceptance(3, ok, f"bm={a.status.value} cantor={b.status.value} t={c.seconds:.2f}s")
    assert ok


def test_criterion_04_cantor_exactness(acceptance):
    rng = np.random.default_rng(2024)
    cq = CantorQ(fat_cantor_set(12, 1.0))
    with Clock() as c:
        xs = rng.uniform(0, 1, 1000)
        oracle = np.array([float(oracle_distance(Fraction(x), Fraction(1))) for x in xs])
        dev = float(np.max(np.abs(cq.raw_derivative(xs) - oracle)))
        pairs = np.sort(rng.uniform(0, 1, (1000, 2)), axis=1)
        lo, hi = pairs[:, 0], pairs[:, 1]
        increasing = bool(np.all(cq.raw(hi) > cq.raw(lo)))
        lip = float(np.max(np.abs(cq.raw_derivative(hi) - cq.raw_derivative(lo)) / (hi - lo)))
    ok = dev <= 1e-15 and increasing and lip <= 1.0 + 1e-12 and c.seconds < 1.0
    acceptance(4, ok, f"max|q'-d_G|={dev:.1e} increasing={increasing} lip={lip:.4f} t={c.seconds:.2f}s")
    assert ok


def test_criterion_05_exit_probability(acceptance):
    with Clock() as c:
        bm = exit_probability_test(brownian_spec(), 0.5, 0.0, 1.0, n_paths=10_000, seed=5, h=0.005)
        spec = cantor_diffusion_spec(fat_cantor_set(12))
        x0 = float(spec.scale.q(0.3))
        cantor = exit_probability_test(spec, x0, 0.0, 1.0, n_paths=10_000, seed=5)
    ok = bm.passed and cantor.passed and c.seconds < 120
    acceptance(5, ok, f"bm={bm.estimate:.4f}/{bm.target} z={bm.z_score:.2f}; "
                      f"cantor={cantor.estimate:.4f}/{cantor.target:.4f} z={cantor.z_score:.2f}; t={c.seconds:.0f}s")
    assert ok


def test_criterion_06_exit_time(acceptance):
    with Clock() as c:
        bm = exit_time_test(brownian_spec(), 0.5, 0.0, 1.0, n_paths=10_000, seed=6)
        sticky = exit_time_test(sticky_bm_spec(1.0), 0.0, -1.0, 1.0, n_paths=10_000, seed=6)
    ok = bm.passed and sticky.passed and bm.target == pytest.approx(0.25) and sticky.target == pytest.approx(2.0)
    ok = ok and c.seconds < 120
    acceptance(6, ok, f"bm={bm.estimate:.4f} z={bm.z_score:.2f}; sticky={sticky.estimate:.4f} "
                      f"z={sticky.z_score:.2f}; t={c.seconds:.0f}s")
    assert ok


def test_criterion_07_martingale(acceptance):
    cantor = cantor_diffusion_spec(fat_cantor_set(12))
    with Clock() as c:
        reports = {
            "bm": martingale_test(brownian_spec(), 0.5, 0.0, 1.0, n_paths=10_000, seed=7),
            "sticky": martingale_test(sticky_bm_spec(1.0), 0.0, -1.0, 1.0, n_paths=10_000, seed=7),
            "cantor": martingale_test(cantor, float(cantor.scale.q(0.3)), 0.0, 1.0, n_paths=10_000, seed=7),
        }
    ok = all(r.passed and len(r.metadata["per_checkpoint"]) == 4 for r in reports.values()) and c.seconds < 180
    detail = " ".join(f"{k}:max|z|={abs(r.z_score):.2f}" for k, r in reports.items())
    acceptance(7, ok, f"{detail} t={c.seconds:.0f}s")
    assert ok


def test_criterion_08_sticky_characteristics(acceptance):
    with Clock() as c:
        rep = sticky_characteristics_test(1.0, horizon=1.0, n_paths=1000, seed=8, h=0.01)
    ok = rep.passed and c.seconds < 120
    acceptance(8, ok, f"sup-dev={rep.estimate:.4f} drift_z={rep.metadata['drift_z']:.2f} t={c.seconds:.1f}s")
    assert ok


def test_criterion_09_sticky_occupation(acceptance):
    with Clock() as c:
        ratio = sticky_occupation_test(1.0, n_paths=10_000, seed=9, h=0.01)
        mono = sticky_occupation_monotonicity((0.1, 1.0, 10.0), n_paths=2000, seed=9, h=0.01)
    ok = ratio.passed and mono.passed and c.seconds < 180
    means = ", ".join(f"{m:.3f}" for m in mono.metadata["mean_occupation"])
    acceptance(9, ok, f"ratio={ratio.estimate:.4f} means=[{means}] t={c.seconds:.0f}s")
    assert ok


def test_criterion_10_feller_mckean(acceptance):
    with Clock() as c:
        occ = feller_mckean_occupation_test(200, t=1.0, n_paths=200, seed=10)
        ref = feller_mckean_refinement_test(200, t=1.0, n_paths=200, seed=10)
    ok = occ.passed and ref.passed and c.seconds < 180
    acceptance(10, ok, f"fraction={occ.estimate:.4f} refinement={ref.metadata['fractions']} t={c.seconds:.0f}s")
    assert ok


def test_criterion_11_determinism(acceptance):
    _, sticky = cli_run(["gallery", "sticky", "--rho", "1"])
    commands = [
        ["simulate", "-", "--horizon", "0.5", "--paths", "3", "--h", "0.02", "--seed", "11"],
        ["verify", "-", "--paths", "300", "--h", "0.05", "--seed", "11", "--json"],
        ["rp-check", "-", "--seed", "11", "--json"],
    ]
    identical = all(cli_run(a, sticky) == cli_run(a, sticky) for a in commands)
    chain = build_grid_chain(sticky_bm_spec(1.0), 0.05, window=(-3, 3))
    k = chain.snap(0.0)
    probes = Probes(checkpoints=(0.25, 0.5), downcross=(k,))
    one = run_ensemble(chain, k, 2000, seed=11, horizon=0.5, probes=probes, chunk_size=256, workers=1)
    four = run_ensemble(chain, k, 2000, seed=11, horizon=0.5, probes=probes, chunk_size=256, workers=4)
    same = all(np.array_equal(v, four.arrays()[n]) for n, v in one.arrays().items())
    ok = identical and same
    acceptance(11, ok, f"cli_byte_identical={identical} workers_1_vs_4_identical={same}")
    assert ok
