"""Speed-measure Markov chain approximation in natural scale.

The chain lives on a uniform grid ``y_0 < ... < y_N`` of step ``h`` in natural
coordinates. From an interior node it jumps to either neighbour with
probability 1/2 after an exponential holding time whose mean is the expected
exit time of the two-neighbour cell,

    mean_k = int G_k(y_k, u) (m o s^{-1})(du),

with ``G_k`` the Green function of ``(y_{k-1}, y_{k+1})``. On a uniform grid
``G_k(y_k, .)`` is a tent of height ``h``, so unit density gives ``h**2`` and an
atom of mass ``rho`` at ``y_k`` adds ``h * rho``. A reflecting end node uses
the Green function of ``[y_0, y_1)`` reflected at ``y_0``, ``2 (y_1 - u)``.

Randomness is per path: path ``i`` of seed ``s`` draws from
``SeedSequence(s, spawn_key=(i,))`` in blocks of ``BLOCK`` exponentials
followed by ``BLOCK`` uniforms. The single-path loop and the lockstep ensemble
engine consume these streams identically, so ensemble results do not depend
on chunking or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _numerics
from .characteristics import BoundaryKind, DiffusionSpec, natural_density
from .errors import (
    BudgetExceeded,
    LevelOutsideWindow,
    NonPositiveStep,
    StartOutsideWindow,
    WindowOutOfRange,
    WindowTooSmall,
)

BLOCK = 256
ABSORB, REFLECT = "absorb", "reflect"
# downcrossing estimator L ~ CALIBRATION * 2 eps * #downcrossings; fixed by the
# Brownian oracle E L_t^0 = sqrt(2t/pi), which the unit factor already matches
LOCAL_TIME_CALIBRATION = 1.0


@dataclass(frozen=True, eq=False)
class GridChain:
    grid: np.ndarray
    values: np.ndarray
    mean_holding: np.ndarray
    p_left: np.ndarray
    absorbing: np.ndarray
    boundary_rules: tuple[str, str]
    artificial: tuple[bool, bool]
    h: float
    spec_label: str = ""
    atom_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    dropped_atoms: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.grid)

    @property
    def wall_nodes(self) -> np.ndarray:
        """Indices of artificial reflecting walls."""
        out = []
        if self.artificial[0]:
            out.append(0)
        if self.artificial[1]:
            out.append(self.n_nodes - 1)
        return np.array(out, dtype=int)

    def snap(self, y: float) -> int:
        """Nearest node to the natural coordinate ``y``, ties to the left."""
        r = (y - self.grid[0]) / self.h
        return int(np.clip(math.ceil(r - 0.5), 0, self.n_nodes - 1))

    def start_node(self, spec_scale, x0: float) -> int:
        y = float(spec_scale(x0))
        tol = 1e-9 * self.h
        if not (self.grid[0] - tol <= y <= self.grid[-1] + tol):
            raise StartOutsideWindow(f"s(x0)={y} is outside the chain window [{self.grid[0]}, {self.grid[-1]}]")
        return self.snap(y)

    def node_of_level(self, level: float) -> int:
        if not (self.values[0] <= level <= self.values[-1]):
            raise LevelOutsideWindow(f"level {level} outside [{self.values[0]}, {self.values[-1]}]")
        k = int(np.clip(np.searchsorted(self.values, level), 0, self.n_nodes - 1))
        if k > 0 and abs(self.values[k - 1] - level) <= abs(self.values[k] - level):
            k -= 1
        return k


def _aligned_grid(lo: float, hi: float, h: float):
    """Uniform grid on ``[lo, hi]``; a step that does not divide the window is
    shrunk to the nearest one that does. Returns ``(grid, step)``."""
    r = (hi - lo) / h
    n = int(round(r)) if abs(r - round(r)) < 1e-9 * max(1.0, r) else int(math.ceil(r))
    if n < 2:
        raise WindowTooSmall(f"window [{lo}, {hi}] holds fewer than two cells of size {h}")
    if n != round(r) or abs(n - r) >= 1e-9 * max(1.0, r):
        h = (hi - lo) / n
    k0 = lo / h
    if abs(k0 - round(k0)) < 1e-9:
        return (round(k0) + np.arange(n + 1)) * h, h
    return lo + h * np.arange(n + 1), h


def _end_rule(spec: DiffusionSpec, side: int, y_end: float, span: float):
    """Rule for a window end: ``(rule, artificial, boundary_atom)``."""
    lo, hi = spec.natural_range()
    J = spec.interval
    natural_end = hi if side else lo
    closed = J.right_closed if side else J.left_closed
    behavior = spec.right_behavior if side else spec.left_behavior
    if closed and abs(y_end - natural_end) <= 1e-12 * max(1.0, span) and behavior.kind.accessible:
        if behavior.kind is BoundaryKind.ABSORBING:
            return ABSORB, False, 0.0
        atom = spec.speed.right_boundary_atom if side else spec.speed.left_boundary_atom
        return REFLECT, False, atom
    return REFLECT, True, 0.0


def build_grid_chain(spec: DiffusionSpec, h: float, window=None, edges=(None, None)) -> GridChain:
    """Chain on the natural-scale window ``[lo, hi]`` (default ``s(J)``) with step
    ``h``, or the largest step below ``h`` dividing the window (see ``chain.h``).

    ``edges`` overrides the end rules: ``"absorb"`` stops the chain there
    (used for exit problems), ``"reflect"`` makes an artificial wall.
    """
    if not (h > 0 and math.isfinite(h)):
        raise NonPositiveStep("grid step must be positive")
    nlo, nhi = spec.natural_range()
    lo, hi = (nlo, nhi) if window is None else (float(window[0]), float(window[1]))
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise WindowOutOfRange("an unbounded natural range needs an explicit finite window")
    span = hi - lo
    slack = 1e-12 * max(1.0, abs(span))
    if lo < nlo - slack or hi > nhi + slack:
        raise WindowOutOfRange(f"window [{lo}, {hi}] not inside s(J) = [{nlo}, {nhi}]")
    grid, h = _aligned_grid(lo, hi, h)
    n = len(grid)

    rules, artificial, batoms = [], [], []
    for side in (0, 1):
        rule, art, atom = _end_rule(spec, side, grid[-1] if side else grid[0], span)
        if edges[side] is not None:
            rule, art = edges[side], edges[side] == REFLECT and art
            if rule not in (ABSORB, REFLECT):
                raise ValueError(f"unknown edge rule {rule!r}")
        rules.append(rule)
        artificial.append(art)
        batoms.append(atom)

    # tent integrals of the natural density over each cell [y_j, y_j+1]
    dens = natural_density(spec)
    pts, wts = _numerics.cell_gauss_points(grid[:-1], grid[1:])
    with np.errstate(all="ignore"):
        f = np.asarray(dens(pts), dtype=float)
    f = np.where(np.isfinite(f), f, 0.0)
    up = np.sum(wts * f * (pts - grid[:-1, None]), axis=1)   # weight rising towards y_j+1
    down = np.sum(wts * f * (grid[1:, None] - pts), axis=1)  # weight falling from y_j
    mean = np.zeros(n)
    mean[1:-1] = up[:-1] + down[1:]
    mean[0] = 2.0 * down[0]
    mean[-1] = 2.0 * up[-1]

    atom_nodes, dropped = [], 0
    for loc, mass in spec.speed.atoms:
        y = float(spec.scale(loc))
        if not (grid[0] - 0.5 * h < y < grid[-1] + 0.5 * h):
            dropped += 1
            continue
        k = int(np.clip(math.ceil((y - grid[0]) / h - 0.5), 0, n - 1))
        mean[k] += (2.0 * h if k in (0, n - 1) else h) * mass
        atom_nodes.append(k)
    mean[0] += 2.0 * h * batoms[0]
    mean[-1] += 2.0 * h * batoms[1]

    absorbing = np.zeros(n, dtype=bool)
    p_left = np.full(n, 0.5)
    if rules[0] == ABSORB:
        absorbing[0] = True
    p_left[0] = 0.0
    if rules[1] == ABSORB:
        absorbing[-1] = True
    p_left[-1] = 1.0
    mean[absorbing] = 0.0

    values = np.asarray(spec.scale.inverse(grid), dtype=float).copy()
    J = spec.interval
    values = np.clip(values, J.left, J.right)
    return GridChain(
        grid=grid, values=values, mean_holding=mean, p_left=p_left, absorbing=absorbing,
        boundary_rules=(rules[0], rules[1]), artificial=(artificial[0], artificial[1]), h=float(h),
        spec_label=spec.label, atom_nodes=np.unique(np.array(atom_nodes, dtype=int)), dropped_atoms=dropped,
    )


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------


def path_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _draw_block(gen: np.random.Generator):
    return gen.standard_exponential(BLOCK), gen.random(BLOCK)


# --------------------------------------------------------------------------
# Single paths
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SamplePath:
    times: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    natural: np.ndarray
    seed: int
    index: int
    grid_step: float
    spec_label: str
    grid_values: np.ndarray
    horizon: float
    absorbed: bool
    metadata: dict = field(default_factory=dict)

    @property
    def end_time(self) -> float:
        return float(self.times[-1])


def simulate_path(chain: GridChain, start_node: int, horizon: float, seed: int, index: int = 0,
                  max_jumps: int = 50_000_000, metadata: dict | None = None) -> SamplePath:
    """One path of the chain from ``start_node`` up to ``horizon`` or absorption.

    The returned times are jump times, with a final row at the horizon (or the
    absorption time followed by the horizon plateau when the horizon is finite).
    """
    if not 0 <= start_node < chain.n_nodes:
        raise StartOutsideWindow("start node outside the chain")
    mean, p_left, absorbing = chain.mean_holding, chain.p_left, chain.absorbing
    gen = path_generator(seed, index)
    times, nodes = [0.0], [start_node]
    t, k = 0.0, int(start_node)
    absorbed = bool(absorbing[k])
    ex, un, ptr = None, None, BLOCK
    jumps = 0
    while not absorbed:
        if ptr == BLOCK:
            ex, un = _draw_block(gen)
            ptr = 0
        t_end = t + mean[k] * ex[ptr]
        u = un[ptr]
        ptr += 1
        if t_end >= horizon:
            break
        k = k - 1 if u < p_left[k] else k + 1
        t = t_end
        times.append(t)
        nodes.append(k)
        absorbed = bool(absorbing[k])
        jumps += 1
        if jumps > max_jumps:
            raise BudgetExceeded("jump budget exhausted; use a finite horizon or an absorbing window")
    if math.isfinite(horizon) and times[-1] < horizon:
        times.append(float(horizon))
        nodes.append(k)
    nodes_arr = np.asarray(nodes, dtype=np.int64)
    return SamplePath(
        times=np.asarray(times), nodes=nodes_arr, values=chain.values[nodes_arr], natural=chain.grid[nodes_arr],
        seed=int(seed), index=int(index), grid_step=chain.h, spec_label=chain.spec_label,
        grid_values=chain.values, horizon=float(horizon), absorbed=absorbed, metadata=dict(metadata or {}),
    )


def simulate(spec: DiffusionSpec, x0: float, horizon: float, h: float, seed: int, window=None,
             edges=(None, None), index: int = 0) -> SamplePath:
    """Convenience wrapper: build the chain, snap ``x0`` and simulate one path."""
    chain = build_grid_chain(spec, h, window, edges)
    k = chain.start_node(spec.scale, x0)
    meta = {"x0": x0, "x0_snapped": float(chain.values[k]), "s_x0_snapped": float(chain.grid[k])}
    return simulate_path(chain, k, horizon, seed, index, metadata=meta)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function ``t -> values[i]`` for ``times[i] <= t``."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        i = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        out = np.where(i >= 0, self.values[np.clip(i, 0, None)], 0.0)
        return float(out) if np.ndim(out) == 0 else out


def quadratic_variation(path: SamplePath) -> StepFunction:
    """``t -> sum_{s <= t} (Delta X_s)**2`` of the state-space values."""
    inc = np.diff(path.values) ** 2
    return StepFunction(path.times, np.concatenate([[0.0], np.cumsum(inc)]))


def _target_mask(values: np.ndarray, target) -> np.ndarray:
    """``target`` is a point, an ``(lo, hi)`` pair, or a list of points and
    pairs; pairs are closed intervals."""
    if np.isscalar(target):
        target = [target]
    elif isinstance(target, tuple) and len(target) == 2 and all(np.isscalar(v) for v in target):
        target = [target]
    mask = np.zeros(values.shape, dtype=bool)
    for item in target:
        if np.isscalar(item):
            mask |= np.isclose(values, float(item), rtol=0.0, atol=1e-12)
        else:
            lo, hi = item
            mask |= (values >= lo) & (values <= hi)
    return mask


def _holding_intervals(path: SamplePath, t: float):
    """Start and end of each sojourn, clipped to ``[0, t]``; the last state
    persists to ``t`` (absorption plateau)."""
    starts = path.times
    ends = np.append(path.times[1:], max(t, path.times[-1]))
    return np.minimum(starts, t), np.minimum(ends, t)


def occupation_time(path: SamplePath, target, t: float, t0: float = 0.0) -> float:
    """Lebesgue time in ``[t0, t]`` with the path value in ``target``."""
    if math.isfinite(path.horizon) and t > path.horizon * (1 + 1e-12):
        raise ValueError("t exceeds the path horizon")
    s, e = _holding_intervals(path, t)
    s, e = np.maximum(s, t0), np.maximum(e, t0)
    mask = _target_mask(path.values, target)
    return float(np.sum((e - s)[mask]))


def local_time_at(path: SamplePath, level: float, t: float) -> float:
    """Downcrossing estimate ``2 eps * #{k0+1 -> k0 jumps by t}`` with ``eps`` one
    grid cell above the level in state space."""
    gv = path.grid_values
    if not (gv[0] <= level <= gv[-1]):
        raise LevelOutsideWindow(f"level {level} outside the path window")
    k0 = int(np.clip(np.searchsorted(gv, level), 0, len(gv) - 1))
    if k0 > 0 and abs(gv[k0 - 1] - level) <= abs(gv[k0] - level):
        k0 -= 1
    if k0 + 1 >= len(gv):
        return 0.0
    eps = gv[k0 + 1] - gv[k0]
    jt = path.times[1:]
    down = (path.nodes[:-1] == k0 + 1) & (path.nodes[1:] == k0) & (jt <= t)
    return float(LOCAL_TIME_CALIBRATION * 2.0 * eps * np.count_nonzero(down))


# --------------------------------------------------------------------------
# Lockstep ensembles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Probes:
    """What the ensemble engine records per path.

    ``occupation`` holds ``(node_mask, t0, t1)`` windows; ``downcross`` lists
    nodes ``k0`` whose ``k0+1 -> k0`` jumps are counted by the horizon;
    ``c_mask`` enables the running sup of ``|QV(t) - int_0^t 1{node in c_mask}|``.
    """

    checkpoints: tuple[float, ...] = ()
    occupation: tuple = ()
    downcross: tuple[int, ...] = ()
    c_mask: np.ndarray | None = None


@dataclass
class EnsembleResult:
    start_node: int
    seed: int
    horizon: float
    final_node: np.ndarray
    final_time: np.ndarray
    absorbed: np.ndarray
    checkpoint_nodes: np.ndarray
    occupation: np.ndarray
    downcrossings: np.ndarray
    qv: np.ndarray
    sup_dev: np.ndarray
    wall_time: np.ndarray
    n_jumps: np.ndarray

    @property
    def n_paths(self) -> int:
        return len(self.final_node)

    def arrays(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if isinstance(v, np.ndarray)}


def _run_chunk(chain: GridChain, start: int, seed: int, first: int, count: int, horizon: float,
               probes: Probes, max_steps: int):
    mean, p_left, absorbing, vals = chain.mean_holding, chain.p_left, chain.absorbing, chain.values
    walls = np.zeros(chain.n_nodes, dtype=bool)
    walls[chain.wall_nodes] = True
    cks = np.asarray(probes.checkpoints, dtype=float)
    occ = probes.occupation
    dlev = np.asarray(probes.downcross, dtype=np.int64)
    track_c = probes.c_mask is not None
    c_mask = np.asarray(probes.c_mask, dtype=float) if track_c else None

    # per-path outputs
    final_node = np.full(count, start, dtype=np.int64)
    final_time = np.zeros(count)
    absorbed = np.zeros(count, dtype=bool)
    ck_nodes = np.full((count, len(cks)), -1, dtype=np.int64)
    occ_out = np.zeros((count, len(occ)))
    dc_out = np.zeros((count, len(dlev)), dtype=np.int64)
    qv_out = np.zeros(count)
    sup_out = np.zeros(count)
    wall_out = np.full(count, np.inf)
    jumps_out = np.zeros(count, dtype=np.int64)

    gens = [path_generator(seed, first + i) for i in range(count)]
    ex = np.empty((count, BLOCK))
    un = np.empty((count, BLOCK))

    # live state, compacted as paths finish
    ids = np.arange(count)
    node = np.full(count, start, dtype=np.int64)
    t = np.zeros(count)
    ckn = ck_nodes.copy()
    occa = np.zeros_like(occ_out)
    dca = np.zeros_like(dc_out)
    qv = np.zeros(count)
    dev = np.zeros(count)
    sup = np.zeros(count)
    wall = np.full(count, np.inf)
    nj = np.zeros(count, dtype=np.int64)

    def finish(sel, fnode, ftime, is_abs):
        tgt = ids[sel]
        fn = fnode[sel]
        final_node[tgt] = fn
        final_time[tgt] = ftime[sel]
        absorbed[tgt] = is_abs
        ck = ckn[sel]
        if ck.size:
            ck = np.where(ck < 0, fn[:, None], ck)
        ck_nodes[tgt] = ck
        o = occa[sel]
        if is_abs and len(occ):
            # the absorbed path stays put until each window closes
            for j, (mask, t0, t1) in enumerate(occ):
                o[:, j] += np.maximum(0.0, t1 - np.maximum(ftime[sel], t0)) * mask[fn]
        occ_out[tgt] = o
        dc_out[tgt] = dca[sel]
        qv_out[tgt] = qv[sel]
        s = sup[sel]
        if is_abs and track_c and math.isfinite(horizon):
            d = dev[sel] - np.maximum(0.0, horizon - ftime[sel]) * c_mask[fn]
            s = np.maximum(s, np.abs(d))
        sup_out[tgt] = s
        wall_out[tgt] = wall[sel]
        jumps_out[tgt] = nj[sel]

    if absorbing[start]:
        final_time[:] = 0.0
        absorbed[:] = True
        ck_nodes[:] = start
        for j, (mask, t0, t1) in enumerate(occ):
            occ_out[:, j] = max(0.0, t1 - t0) * mask[start]
        if track_c and math.isfinite(horizon):
            sup_out[:] = horizon * c_mask[start]
        return final_node, final_time, absorbed, ck_nodes, occ_out, dc_out, qv_out, sup_out, wall_out, jumps_out

    step = 0
    while ids.size:
        ptr = step % BLOCK
        if ptr == 0:
            for i in ids:
                ex[i], un[i] = _draw_block(gens[i])
        tau = mean[node] * ex[ids, ptr]
        u = un[ids, ptr]
        t_end = t + tau
        over = t_end >= horizon
        t_stop = np.where(over, horizon, t_end)

        if cks.size:
            hit = (t[:, None] <= cks[None, :]) & (cks[None, :] < t_stop[:, None]) | (
                over[:, None] & (cks[None, :] == horizon))
            ckn = np.where(hit & (ckn < 0), node[:, None], ckn)
        for j, (mask, t0, t1) in enumerate(occ):
            occa[:, j] += np.maximum(0.0, np.minimum(t_stop, t1) - np.maximum(t, t0)) * mask[node]
        if track_c:
            dev -= (t_stop - t) * c_mask[node]
            sup = np.maximum(sup, np.abs(dev))

        new = np.where(u < p_left[node], node - 1, node + 1)
        new = np.where(over, node, new)
        live_jump = ~over
        if dlev.size:
            dca += (live_jump[:, None] & (node[:, None] == dlev[None, :] + 1) & (new[:, None] == dlev[None, :]))
        dv = vals[new] - vals[node]
        qv += dv * dv
        if track_c:
            dev += dv * dv
            sup = np.maximum(sup, np.abs(dev))
        nj += live_jump
        wall = np.where(live_jump & walls[new] & ~np.isfinite(wall), t_end, wall)
        node = new
        t = t_stop

        done_h = over
        done_a = live_jump & absorbing[new]
        if done_h.any() or done_a.any():
            if done_h.any():
                finish(done_h, node, t, False)
            if done_a.any():
                finish(done_a, node, t, True)
            keep = ~(done_h | done_a)
            ids, node, t = ids[keep], node[keep], t[keep]
            ckn, occa, dca = ckn[keep], occa[keep], dca[keep]
            qv, dev, sup, wall, nj = qv[keep], dev[keep], sup[keep], wall[keep], nj[keep]
        step += 1
        if step > max_steps:
            raise BudgetExceeded(f"ensemble exceeded {max_steps} lockstep steps")
    return final_node, final_time, absorbed, ck_nodes, occ_out, dc_out, qv_out, sup_out, wall_out, jumps_out


def _chunk_job(args):
    return _run_chunk(*args)


def run_ensemble(chain: GridChain, start_node: int, n_paths: int, seed: int, horizon: float = math.inf,
                 probes: Probes = Probes(), chunk_size: int = 4096, workers: int = 1,
                 max_steps: int = 20_000_000) -> EnsembleResult:
    """Simulate ``n_paths`` independent paths in lockstep, recording ``probes``.

    Path ``i`` uses the stream ``(seed, i)``, so the output is the same for any
    ``chunk_size`` and ``workers``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if not 0 <= start_node < chain.n_nodes:
        raise StartOutsideWindow("start node outside the chain")
    if not math.isfinite(horizon) and not chain.absorbing.any():
        raise ValueError("an infinite horizon needs an absorbing end")
    for c in probes.checkpoints:
        if c > horizon:
            raise ValueError("checkpoints must not exceed the horizon")
    jobs = [(chain, int(start_node), int(seed), lo, min(chunk_size, n_paths - lo), float(horizon), probes, max_steps)
            for lo in range(0, n_paths, chunk_size)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(j) for j in jobs]
    cols = [np.concatenate([p[i] for p in parts]) for i in range(10)]
    return EnsembleResult(int(start_node), int(seed), float(horizon), *cols)


def ensemble_paths(chain: GridChain, start_node: int, n_paths: int, seed: int, horizon: float) -> list[SamplePath]:
    """Full trajectories for ``n_paths`` paths (same streams as :func:`run_ensemble`)."""
    return [simulate_path(chain, start_node, horizon, seed, i) for i in range(n_paths)]
