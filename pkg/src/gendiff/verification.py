"""Monte Carlo checks of the identities behind the theory.

Every target is computed from the characteristics (closed forms, Green
quadrature, exact gallery arithmetic), never from simulated paths. Reports are
reproducible from the parameters recorded in their metadata.

The representation property itself quantifies over all local martingales and
cannot be simulated; these tests exercise the identities that its criterion
rests on, and :mod:`gendiff.rp_criterion` decides the property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .characteristics import DiffusionSpec, green_expected_exit_time
from .errors import InfiniteTarget, OrderViolation
from .gallery import brownian_spec, feller_mckean_spec, sticky_bm_spec
from .simulator import ABSORB, Probes, build_grid_chain, run_ensemble

Z_MAX = 3.0


@dataclass
class StatReport:
    """``mode`` is ``"z"`` (pass iff ``|estimate - target| <= z_max * stderr``),
    ``"relative"`` (pass iff within ``tolerance * |target|``), ``"at_most"`` or
    ``"at_least"`` (one-sided bound ``tolerance`` on the estimate)."""

    name: str
    estimate: float
    stderr: float
    target: float
    n_paths: int
    mode: str = "z"
    tolerance: float = Z_MAX
    metadata: dict = field(default_factory=dict)
    extra_checks: dict = field(default_factory=dict)

    @property
    def z_score(self) -> float:
        diff = self.estimate - self.target
        if self.stderr > 0:
            return diff / self.stderr
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)

    @property
    def passed(self) -> bool:
        if self.mode == "z":
            ok = (abs(self.estimate - self.target) <= self.tolerance * self.stderr
                  if self.stderr > 0 else math.isclose(self.estimate, self.target, rel_tol=1e-9, abs_tol=1e-12))
        elif self.mode == "relative":
            ok = abs(self.estimate - self.target) <= self.tolerance * abs(self.target)
        elif self.mode == "at_most":
            ok = self.estimate <= self.tolerance
        elif self.mode == "at_least":
            ok = self.estimate >= self.tolerance
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        return bool(ok and all(self.extra_checks.values()))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "target": self.target,
            "z_score": self.z_score if math.isfinite(self.z_score) else str(self.z_score),
            "n_paths": self.n_paths,
            "mode": self.mode,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "extra_checks": dict(self.extra_checks),
            "metadata": self.metadata,
        }

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: estimate={self.estimate:.6g} target={self.target:.6g} "
                f"stderr={self.stderr:.3g} n={self.n_paths}")


def _ordered(spec: DiffusionSpec, x0: float, a: float, b: float, allow_edge: bool = False):
    ok = (a <= x0 <= b) if allow_edge else (a < x0 < b)
    if not (a < b and ok):
        raise OrderViolation(f"need a < x0 < b, got a={a}, x0={x0}, b={b}")
    J = spec.interval
    if not (J.left <= a and b <= J.right):
        raise OrderViolation("exit interval must lie in the state space")


def _exit_chain(spec, a, b, h, steps=200):
    sa, sb = (float(v) for v in np.asarray(spec.scale(np.array([a, b])), dtype=float))
    chain = build_grid_chain(spec, h if h else (sb - sa) / steps, (sa, sb), edges=(ABSORB, ABSORB))
    return chain, sa, sb


def _meta(seed, chain, n_paths, **kw):
    return {"seed": int(seed), "h": chain.h, "n_paths": int(n_paths), "chain_nodes": chain.n_nodes, **kw}


def exit_probability_test(spec: DiffusionSpec, x0: float, a: float, b: float, n_paths: int = 10_000,
                          seed: int = 0, h: float | None = None, workers: int = 1) -> StatReport:
    """Empirical ``P(T_b < T_a)`` against ``(s(x0) - s(a)) / (s(b) - s(a))``."""
    _ordered(spec, x0, a, b)
    chain, sa, sb = _exit_chain(spec, a, b, h)
    sx = float(spec.scale(x0))
    target = (sx - sa) / (sb - sa)
    k = chain.start_node(spec.scale, x0)
    res = run_ensemble(chain, k, n_paths, seed, workers=workers)
    hits = res.final_node == chain.n_nodes - 1
    p = float(np.mean(hits))
    se = math.sqrt(max(p * (1 - p), 1.0 / n_paths) / n_paths)
    meta = _meta(seed, chain, n_paths, x0=x0, a=a, b=b, s_start_snapped=float(chain.grid[k]))
    return StatReport("exit_probability", p, se, target, n_paths, metadata=meta)


def exit_time_test(spec: DiffusionSpec, x0: float, a: float, b: float, n_paths: int = 10_000,
                   seed: int = 0, h: float | None = None, workers: int = 1) -> StatReport:
    """Empirical ``E[T_a ^ T_b]`` against the Green-function integral."""
    _ordered(spec, x0, a, b, allow_edge=True)
    target = green_expected_exit_time(spec, x0, a, b)
    if not math.isfinite(target):
        raise InfiniteTarget("the expected exit time is infinite")
    if x0 in (a, b):
        return StatReport("exit_time", 0.0, 0.0, target, n_paths,
                          metadata={"seed": int(seed), "n_paths": int(n_paths), "x0": x0, "a": a, "b": b})
    chain, _, _ = _exit_chain(spec, a, b, h)
    k = chain.start_node(spec.scale, x0)
    res = run_ensemble(chain, k, n_paths, seed, workers=workers)
    times = res.final_time
    est = float(np.mean(times))
    se = float(np.std(times, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    meta = _meta(seed, chain, n_paths, x0=x0, a=a, b=b, s_start_snapped=float(chain.grid[k]))
    return StatReport("exit_time", est, se, target, n_paths, metadata=meta)


def martingale_test(spec: DiffusionSpec, x0: float, a: float, b: float, checkpoints=(0.05, 0.1, 0.2, 0.4),
                    n_paths: int = 10_000, seed: int = 0, h: float | None = None, workers: int = 1) -> StatReport:
    """Mean of ``s(X_{t ^ T_a ^ T_b})`` against ``s(x0)`` at each checkpoint.

    The reported estimate is the checkpoint with the largest ``|z|``; all of
    them are in ``metadata["per_checkpoint"]``.
    """
    _ordered(spec, x0, a, b)
    cks = tuple(sorted(float(c) for c in checkpoints))
    if not cks or cks[0] < 0:
        raise ValueError("checkpoints must be nonnegative and nonempty")
    chain, _, _ = _exit_chain(spec, a, b, h)
    target = float(spec.scale(x0))
    k = chain.start_node(spec.scale, x0)
    res = run_ensemble(chain, k, n_paths, seed, horizon=cks[-1], probes=Probes(checkpoints=cks), workers=workers)
    s_vals = chain.grid[res.checkpoint_nodes]
    rows = []
    for j, c in enumerate(cks):
        m = float(np.mean(s_vals[:, j]))
        se = float(np.std(s_vals[:, j], ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        z = (m - target) / se if se > 0 else (0.0 if m == target else math.inf)
        rows.append({"t": c, "mean": m, "stderr": se, "z": z})
    worst = max(rows, key=lambda r: abs(r["z"]))
    meta = _meta(seed, chain, n_paths, x0=x0, a=a, b=b, s_start_snapped=float(chain.grid[k]), per_checkpoint=rows)
    rep = StatReport("martingale", worst["mean"], worst["stderr"], target, n_paths, metadata=meta)
    rep.extra_checks["all_checkpoints_within_z"] = all(abs(r["z"]) <= Z_MAX for r in rows)
    return rep


# --------------------------------------------------------------------------
# Sticky Brownian motion
# --------------------------------------------------------------------------


def _sticky_setup(rho: float, x0: float, horizon: float, h: float):
    spec = sticky_bm_spec(rho, x0) if rho > 0 else brownian_spec(x0=x0)
    # wide enough that an unsticky Brownian path reaches the wall with
    # probability below 1e-8 before the horizon
    half = math.ceil((abs(x0) + 6.5 * math.sqrt(horizon) + 1.0) / h) * h
    chain = build_grid_chain(spec, h, (-half, half))
    return spec, chain, chain.snap(0.0), chain.start_node(spec.scale, x0)


def _wall_check(res, horizon):
    return bool(np.all(res.wall_time > horizon))


def sticky_occupation_test(rho: float, x0: float = 0.0, horizon: float = 1.0, n_paths: int = 10_000,
                           seed: int = 0, h: float = 0.01, tolerance: float = 0.15, workers: int = 1) -> StatReport:
    """Ratio of mean time at 0 to ``rho`` times the mean local time at 0.

    The downcrossing estimator is the noisiest ingredient, hence the default
    15% relative tolerance. On the chain the expected ratio is ``1 + h/rho``.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    _, chain, k0, start = _sticky_setup(rho, x0, horizon, h)
    at0 = np.arange(chain.n_nodes) == k0
    probes = Probes(occupation=((at0, 0.0, horizon),), downcross=(k0,))
    res = run_ensemble(chain, start, n_paths, seed, horizon=horizon, probes=probes, workers=workers)
    occ = res.occupation[:, 0]
    lt = 2.0 * (chain.values[k0 + 1] - chain.values[k0]) * res.downcrossings[:, 0]
    A, B = float(occ.mean()), float(rho * lt.mean())
    ratio = A / B if B > 0 else math.inf
    if n_paths > 1 and B > 0:
        cov = np.cov(occ, rho * lt)
        var = (cov[0, 0] / B**2 + A**2 * cov[1, 1] / B**4 - 2 * A * cov[0, 1] / B**3) / n_paths
        se = math.sqrt(max(var, 0.0))
    else:
        se = 0.0
    meta = _meta(seed, chain, n_paths, rho=rho, x0=x0, horizon=horizon, mean_occupation=A,
                 mean_rho_local_time=B, chain_expected_ratio=1.0 + chain.h / rho)
    rep = StatReport("sticky_occupation", ratio, se, 1.0, n_paths, mode="relative", tolerance=tolerance, metadata=meta)
    rep.extra_checks["no_wall_hit"] = _wall_check(res, horizon)
    return rep


def sticky_occupation_monotonicity(rhos=(0.1, 1.0, 10.0), x0: float = 0.0, horizon: float = 1.0,
                                   n_paths: int = 2000, seed: int = 0, h: float = 0.01, workers: int = 1) -> StatReport:
    """Mean time at 0 by ``horizon`` must increase with ``rho`` (same seeds)."""
    means = []
    for rho in sorted(rhos):
        _, chain, k0, start = _sticky_setup(rho, x0, horizon, h)
        at0 = np.arange(chain.n_nodes) == k0
        res = run_ensemble(chain, start, n_paths, seed, horizon=horizon,
                           probes=Probes(occupation=((at0, 0.0, horizon),)), workers=workers)
        means.append(float(res.occupation[:, 0].mean()))
    gap = float(np.min(np.diff(means))) if len(means) > 1 else 0.0
    meta = {"seed": int(seed), "h": h, "n_paths": int(n_paths), "rhos": sorted(rhos), "mean_occupation": means}
    return StatReport("sticky_occupation_monotone", gap, 0.0, 0.0, n_paths, mode="at_least",
                      tolerance=np.nextafter(0.0, 1.0), metadata=meta)


def sticky_characteristics_test(rho: float, x0: float = 0.0, horizon: float = 1.0, n_paths: int = 1000,
                                seed: int = 0, h: float = 0.01, tolerance: float = 0.05,
                                workers: int = 1) -> StatReport:
    """Second characteristic and drift of sticky Brownian motion.

    Estimate: the ensemble mean of ``sup_{t <= T} |QV(t) - int_0^t 1{X_s != 0} ds| / T``,
    which must not exceed ``tolerance``. The drift ``B = 0`` is checked as a
    3-sigma test of ``E[X_T] = x0``. ``rho = 0`` runs plain Brownian motion.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    _, chain, k0, start = _sticky_setup(rho, x0, horizon, h)
    nonzero = chain.values != 0.0
    res = run_ensemble(chain, start, n_paths, seed, horizon=horizon, probes=Probes(c_mask=nonzero), workers=workers)
    rel = res.sup_dev / horizon
    est = float(rel.mean())
    se = float(rel.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    drift = chain.values[res.final_node] - x0
    dm = float(drift.mean())
    dse = float(drift.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    dz = dm / dse if dse > 0 else 0.0
    meta = _meta(seed, chain, n_paths, rho=rho, x0=x0, horizon=horizon, drift_mean=dm, drift_stderr=dse,
                 drift_z=dz, mean_qv=float(res.qv.mean()))
    rep = StatReport("sticky_characteristics", est, se, 0.0, n_paths, mode="at_most", tolerance=tolerance, metadata=meta)
    rep.extra_checks["drift_zero_within_3sigma"] = abs(dz) <= Z_MAX
    rep.extra_checks["no_wall_hit"] = _wall_check(res, horizon)
    return rep


# --------------------------------------------------------------------------
# Feller-McKean
# --------------------------------------------------------------------------


def _dyadic_step(points) -> float:
    """Largest ``2**-j`` with every point a multiple of it."""
    j = 0
    for p in points:
        while abs(p * 2**j - round(p * 2**j)) > 1e-12:
            j += 1
    return 2.0 ** -max(j, 1)


def feller_mckean_occupation_test(n_atoms: int, t: float = 1.0, n_paths: int = 200, seed: int = 0,
                                  h: float | None = None, threshold: float = 0.95, spec_seed: int = 0,
                                  x0: float = 0.0, workers: int = 1) -> StatReport:
    """Fraction of ``[t/2, t]`` spent with the value in the atom set.

    The grid step defaults to the finest dyadic spacing of the atoms, so every
    atom is a node. The chain-level oracle, the share of holding mass carried
    by atom nodes, is recorded alongside.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    spec = feller_mckean_spec(n_atoms, spec_seed, x0)
    locs = np.array([loc for loc, _ in spec.speed.atoms])
    step = h if h else _dyadic_step(locs)
    chain = build_grid_chain(spec, step)
    in_d = np.isclose(chain.values[:, None], locs[None, :], rtol=0.0, atol=1e-12).any(axis=1)
    start = chain.start_node(spec.scale, x0)
    probes = Probes(occupation=((in_d, 0.5 * t, t),))
    res = run_ensemble(chain, start, n_paths, seed, horizon=t, probes=probes, workers=workers)
    frac = res.occupation[:, 0] / (0.5 * t)
    est = float(frac.mean())
    se = float(frac.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    total = float(chain.mean_holding.sum())
    oracle = float(chain.mean_holding[in_d].sum() / total) if total > 0 else 0.0
    notes = [] if n_atoms >= 50 else ["n_atoms below 50: truncation is coarse"]
    meta = _meta(seed, chain, n_paths, n_atoms=n_atoms, t=t, spec_seed=spec_seed, x0=x0,
                 holding_ratio_oracle=oracle, truncation_defect=2.0**-n_atoms, notes=notes)
    return StatReport("feller_mckean_occupation", est, se, 1.0, n_paths, mode="at_least",
                      tolerance=threshold, metadata=meta)


def feller_mckean_refinement_test(n_atoms: int, t: float = 1.0, n_paths: int = 200, seed: int = 0,
                                  workers: int = 1) -> StatReport:
    """Doubling ``n_atoms`` must not lower the atom-set occupation fraction."""
    a = feller_mckean_occupation_test(n_atoms, t, n_paths, seed, workers=workers)
    b = feller_mckean_occupation_test(2 * n_atoms, t, n_paths, seed, workers=workers)
    meta = {"seed": int(seed), "n_paths": int(n_paths), "n_atoms": [n_atoms, 2 * n_atoms],
            "fractions": [a.estimate, b.estimate]}
    return StatReport("feller_mckean_refinement", b.estimate - a.estimate, 0.0, 0.0, n_paths,
                      mode="at_least", tolerance=0.0, metadata=meta)
