"""Mode dispatch: turn a validated :class:`RunConfig` into runs and output files."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..conv import KernelOperator, conv_direct, conv_fast
from ..diagnostics import error_norms, fit_order
from ..errors import ConfigError, InvalidArgument, InvariantViolation
from ..field import ExternalPotential, SpeciesState
from ..grid import build_grid_1d, build_grid_2d
from ..kernels import KernelSpec, precompute_tensor_1d, precompute_tensor_2d
from ..scheme import Model, PoissonRobin1D, RobinBC, StepConfig, run_transient
from . import outputs
from .config import KernelConfig, PoissonConfig, RunConfig

__all__ = ["RunOptions", "build_grid", "initial_state", "build_model", "run_experiment", "MODE_RUNNERS"]

log = logging.getLogger(__name__)

# mass threshold of the 2D Keller-Segel model with a unit log kernel
KS_CRITICAL_MASS = 8.0 * math.pi


class RunOptions:
    """Command-line overrides shared by every mode."""

    def __init__(self, out_dir: Optional[str] = None, threads: int = 1,
                 snapshot_stride: Optional[int] = None, workers: Optional[int] = None):
        self.out_dir = out_dir
        self.threads = max(1, int(threads))
        self.snapshot_stride = snapshot_stride
        self.workers = workers


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ----------------------------------------------------------------------------
# building blocks


def build_grid(cfg: RunConfig, N=None):
    g = cfg.grid
    Ns = g.N if N is None else ((N,) * g.dim if np.isscalar(N) else tuple(N))
    if g.dim == 1:
        return build_grid_1d(g.L[0], Ns[0])
    return build_grid_2d(g.L[0], g.L[1], Ns[0], Ns[1])


def initial_state(cfg: RunConfig, grid) -> SpeciesState:
    """Sum of Gaussians per species, replaced by tabulated values where given."""
    coords = (grid.x,) if grid.dim == 1 else grid.mesh()
    c = np.zeros((len(cfg.species),) + grid.shape)
    for m, sp in enumerate(cfg.species):
        for gs in sp.gaussians:
            d2 = sum((x - x0) ** 2 for x, x0 in zip(coords, gs.center))
            c[m] += gs.amplitude * np.exp(-gs.rate * d2)
        if sp.table is not None:
            try:
                tab = outputs.read_snapshot(sp.table)
            except OSError as exc:
                raise ConfigError(f"species[{m}].table: cannot read {sp.table}: {exc}") from exc
            if tab.grid.shape != grid.shape or not _same_nodes(tab.grid, grid):
                raise ConfigError(f"species[{m}].table: grid in {sp.table} does not match the run grid")
            col = min(m, tab.M - 1)
            c[m] = tab.c[col]
    if np.any(c < 0.0):
        raise ConfigError("initial concentrations must be non-negative")
    return SpeciesState(grid, cfg.valences, c, 0.0)


def _same_nodes(a, b):
    pa = (a.x,) if a.dim == 1 else (a.x, a.y)
    pb = (b.x,) if b.dim == 1 else (b.x, b.y)
    return all(np.allclose(u, v, rtol=0.0, atol=1e-12 * max(1.0, np.abs(v).max())) for u, v in zip(pa, pb))


def _operator(kc, grid, workers):
    if kc is None:
        return None
    return KernelOperator(kc.spec(grid.dim), grid, kc.evaluation, workers)


def build_model(cfg: RunConfig, grid, K=None, W=None, workers=None) -> Model:
    """Model for ``grid``; ``K``/``W`` override the configured kernel blocks."""
    K = cfg.K if K is None else K
    W = cfg.W if W is None else W
    p = cfg.potential
    pot = ExternalPotential(p.form, p.a, p.wells, None, p.couple_valence)
    if isinstance(K, PoissonConfig):
        poisson = PoissonRobin1D(grid, RobinBC(K.alpha, K.beta, K.g_left, K.g_right))
        return Model(None, _operator(W, grid, workers), pot, poisson)
    return Model(_operator(K, grid, workers), _operator(W, grid, workers), pot, None)


def _step_config(cfg: RunConfig, dt=None) -> StepConfig:
    return StepConfig(cfg.time.dt if dt is None else dt, cfg.solver.tol, cfg.solver.max_iter)


def _simulate(cfg, opts, grid=None, dt=None, K=None, W=None, dense=False):
    grid = grid or build_grid(cfg)
    st = initial_state(cfg, grid)
    model = build_model(cfg, grid, K, W, opts.workers)
    t = cfg.time
    snap = t.snapshot_stride if opts.snapshot_stride is None else opts.snapshot_stride
    return run_transient(st, model, _step_config(cfg, dt), t.t_end,
                         diag_stride=t.diag_stride if dense else 10 ** 12,
                         snapshot_stride=snap if dense else 0,
                         blowup_ceiling=t.blowup_ceiling)


def _out(cfg, opts) -> Path:
    return Path(opts.out_dir if opts.out_dir is not None else cfg.output.dir)


def _energy_increase(records):
    E = [r.energy for r in records]
    return float(max(np.diff(E))) if len(E) > 1 else 0.0


def _write_run(tr, cfg, out: Path, prefix: str) -> dict:
    """Diagnostics CSV, snapshots and index for one transient run."""
    M = len(cfg.species)
    outputs.write_diagnostics(tr.records, out / f"{prefix}_diagnostics.csv", M)
    entries = []
    for i, s in enumerate(tr.snapshots):
        name = f"{prefix}_snap_{i:05d}.csv"
        outputs.write_snapshot(s, out / name)
        entries.append((i, s.t, name))
    outputs.write_snapshot_index(entries, out / f"{prefix}_snapshots.csv")
    last = tr.records[-1] if tr.records else None
    return {
        "blowup": bool(tr.blowup),
        "steps": int(tr.steps),
        "t_final": float(tr.state.t),
        "masses_initial": list(tr.records[0].masses) if last else list(map(float, tr.state.masses())),
        "masses_final": list(last.masses) if last else list(map(float, tr.state.masses())),
        "linf_final": list(last.linf) if last else [float(v) for v in tr.state.c.reshape(tr.state.M, -1).max(axis=1)],
        "energy_final": last.energy if last else None,
        "max_energy_increase": _energy_increase(tr.records),
        "max_clamped": max((r.clamped for r in tr.records), default=0.0),
    }


# ----------------------------------------------------------------------------
# modes


def run_transient_mode(cfg: RunConfig, opts: RunOptions) -> dict:
    out = _out(cfg, opts)
    tr = _simulate(cfg, opts, dense=True)
    summary = {"mode": cfg.mode, "name": cfg.name}
    summary.update(_write_run(tr, cfg, out, cfg.output.prefix))
    if cfg.mode == "keller_segel":
        total = float(np.sum(summary["masses_initial"]))
        summary.update(total_mass=total, critical_mass=KS_CRITICAL_MASS,
                       subcritical=total < KS_CRITICAL_MASS, peaks=_peak_positions(tr.state))
    outputs.write_summary(summary, out / f"{cfg.output.prefix}_summary.json")
    return summary


def _peak_positions(state):
    g = state.grid
    coords = (g.x,) if g.dim == 1 else g.mesh()
    peaks = []
    for c in state.c:
        idx = np.unravel_index(int(np.argmax(c)), c.shape)
        peaks.append([float(x[idx]) for x in coords])
    return peaks


def run_eta_sweep(cfg: RunConfig, opts: RunOptions) -> dict:
    out = _out(cfg, opts)
    sw = cfg.sweep
    base = cfg.K if sw.kernel == "K" else cfg.W
    prefix = cfg.output.prefix

    def one(item):
        i, eta = item
        kc = replace(base, eta=eta)
        kw = {"K": kc} if sw.kernel == "K" else {"W": kc}
        tr = _simulate(cfg, opts, dense=True, **kw)
        res = _write_run(tr, cfg, out, f"{prefix}_eta{i:02d}")
        res["eta"] = eta
        return res

    runs = _map(one, enumerate(sw.eta), opts.threads)
    M = len(cfg.species)
    header = ["eta", "t_final", "E_final"] + [f"linf_{m + 1}" for m in range(M)] + ["max_energy_increase"]
    rows = [[r["eta"], r["t_final"], r["energy_final"], *r["linf_final"], r["max_energy_increase"]] for r in runs]
    outputs._write_rows(out / f"{prefix}_sweep.csv", header, rows)
    summary = {"mode": cfg.mode, "name": cfg.name, "kernel": sw.kernel, "runs": runs,
               "blowup": any(r["blowup"] for r in runs)}
    outputs.write_summary(summary, out / f"{prefix}_summary.json")
    return summary


def _check_nesting(coarse, fine, where):
    ratio = fine / coarse
    if fine % coarse or (int(ratio) & (int(ratio) - 1)):
        raise ConfigError(f"{where}: N={fine} is not a power-of-two refinement of N={coarse}")


def run_convergence_space(cfg: RunConfig, opts: RunOptions) -> dict:
    out = _out(cfg, opts)
    cc = cfg.convergence
    Ns = sorted(cc.N)
    if cc.cauchy:
        for a, b in zip(Ns[:-1], Ns[1:]):
            _check_nesting(a, b, "convergence.N")
    else:
        for n in Ns:
            _check_nesting(n, cc.reference_N, "convergence.reference_N")
    levels = Ns if cc.cauchy else Ns + [cc.reference_N]
    states = _map(lambda n: _simulate(cfg, opts, grid=build_grid(cfg, n)), levels, opts.threads)
    _check_finished(states, "convergence run")
    finals = [tr.state for tr in states]
    h = [cfg.grid.L[0] / n for n in Ns]
    if cc.cauchy:
        errs = [error_norms(a, b) for a, b in zip(finals[:-1], finals[1:])]
        h = h[:-1]
    else:
        errs = [error_norms(s, finals[-1]) for s in finals[:-1]]
    return _finish_convergence(cfg, out, h, errs, extra={"N": Ns, "cauchy": cc.cauchy})


def run_convergence_time(cfg: RunConfig, opts: RunOptions) -> dict:
    out = _out(cfg, opts)
    cc = cfg.convergence
    dts = sorted(cc.dt, reverse=True)
    grid = build_grid(cfg)
    runs = _map(lambda dt: _simulate(cfg, opts, grid=grid, dt=dt), dts + [cc.reference_dt], opts.threads)
    _check_finished(runs, "convergence run")
    ref = runs[-1].state
    errs = [error_norms(tr.state, ref) for tr in runs[:-1]]
    return _finish_convergence(cfg, out, dts, errs, extra={"dt": dts, "reference_dt": cc.reference_dt})


def _check_finished(runs, what):
    for tr in runs:
        if tr.blowup:
            raise InvariantViolation(f"{what} hit the blowup guard at t={tr.state.t}")


def _finish_convergence(cfg, out, h, errs, extra):
    prefix = cfg.output.prefix
    outputs.write_convergence_table(h, errs, out / f"{prefix}_convergence.csv")
    e = np.array(errs)
    orders = {}
    if len(h) >= 3 and np.all(e > 0):
        orders = {k: fit_order(h, e[:, i]) for i, k in enumerate(("linf", "l1", "l2"))}
    summary = {"mode": cfg.mode, "name": cfg.name, "h": list(h), "errors": e.tolist(), "orders": orders,
               "blowup": False, **extra}
    if len(e) >= 2:
        summary["ratios"] = (e[:-1] / e[1:]).tolist()
    outputs.write_summary(summary, out / f"{prefix}_summary.json")
    return summary


def run_regularization_compare(cfg: RunConfig, opts: RunOptions) -> dict:
    """Singular-kernel runs against regularized runs on the same grids."""
    out = _out(cfg, opts)
    rc = cfg.regularization
    W = cfg.W
    K_reg = cfg.K
    if rc.pointwise_K and isinstance(cfg.K, KernelConfig):
        if KernelSpec(cfg.K.family, cfg.K.alpha, cfg.K.eps, dim=1).singular:
            raise ConfigError("regularization.pointwise_K: K is singular and cannot be sampled pointwise")
        K_reg = replace(cfg.K, evaluation="pointwise")
    regs = [KernelConfig("regularized_power_law", W.alpha, eps, W.eta, W.sign, "pointwise") for eps in rc.eps]

    def one(N):
        grid = build_grid(cfg, N)
        ref = _simulate(cfg, opts, grid=grid).state
        return [error_norms(_simulate(cfg, opts, grid=grid, K=K_reg, W=wr).state, ref) for wr in regs]

    table = _map(one, rc.N, opts.threads)  # table[n][e]
    h = [cfg.grid.L[0] / n for n in rc.N]
    prefix = cfg.output.prefix
    curves = {}
    for k, eps in enumerate(rc.eps):
        errs = [row[k] for row in table]
        outputs.write_convergence_table(h, errs, out / f"{prefix}_eps{k:02d}.csv")
        curves[repr(eps)] = [e[0] for e in errs]
    summary = {"mode": cfg.mode, "name": cfg.name, "N": list(rc.N), "h": h, "eps": list(rc.eps),
               "linf": curves, "plateau": {k: v[-1] for k, v in curves.items()}, "blowup": False}
    outputs.write_summary(summary, out / f"{prefix}_summary.json")
    return summary


def _time_call(fn, repeats):
    """Best-of-``repeats`` mean time per call, with enough calls per sample to exceed 0.2 s."""
    fn()
    n = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(n):
            fn()
        dt = time.perf_counter() - t0
        if dt >= 0.2 or n >= 1 << 16:
            break
        n *= 2
    best = dt / n
    for _ in range(repeats - 1):
        t0 = time.perf_counter()
        for _ in range(n):
            fn()
        best = min(best, (time.perf_counter() - t0) / n)
    return best


def run_benchmark(cfg: RunConfig, opts: RunOptions) -> dict:
    """Time the field evaluation (tensor convolution) on each listed grid.

    Tensor precomputation is timed separately; ``fast_per_nlogn`` divides
    the conv_fast time by n log n with n the node count.
    """
    out = _out(cfg, opts)
    bc = cfg.benchmark
    kc = cfg.K if bc.kernel == "K" else cfg.W
    rng = np.random.default_rng(0)
    rows, results = [], []
    for N in bc.N:  # sequential: concurrent timings would disturb each other
        grid = build_grid(cfg, N)
        spec = kc.spec(grid.dim)
        t0 = time.perf_counter()
        if grid.dim == 1:
            tensor = precompute_tensor_1d(spec, grid.dx, grid.N)
        else:
            tensor = precompute_tensor_2d(spec, grid.dx, grid.dy, grid.Nx, grid.Ny)
        t_pre = time.perf_counter() - t0
        dens = rng.random(grid.shape)
        t_fast = _time_call(lambda: conv_fast(tensor, dens, opts.workers), bc.repeats)
        n = grid.size
        t_direct = diff = float("nan")
        if n <= bc.direct_max_nodes:
            t0 = time.perf_counter()
            ref = conv_direct(tensor, dens)
            t_direct = time.perf_counter() - t0
            fast = conv_fast(tensor, dens)
            diff = float(np.max(np.abs(fast - ref)) / max(np.max(np.abs(ref)), np.finfo(float).tiny))
        res = {"N": list(grid.shape), "nodes": n, "precompute_s": t_pre, "fast_s": t_fast,
               "direct_s": t_direct, "fast_per_nlogn": t_fast / (n * math.log(n)), "rel_diff": diff}
        results.append(res)
        rows.append([N, n, t_pre, t_fast, t_direct, res["fast_per_nlogn"], diff])
        log.info("bench N=%s nodes=%d fast=%.3es direct=%.3es", N, n, t_fast, t_direct)
    prefix = cfg.output.prefix
    outputs._write_rows(out / f"{prefix}_bench.csv",
                        ["N", "nodes", "precompute_s", "fast_s", "direct_s", "fast_per_nlogn", "rel_diff"], rows)
    ratios = [r["fast_per_nlogn"] for r in results]
    checked = [r for r in results if r["nodes"] >= 4096 and not math.isnan(r["direct_s"])]
    summary = {"mode": cfg.mode, "name": cfg.name, "results": results, "blowup": False,
               "nlogn_spread": max(ratios) / min(ratios),
               "fast_faster_checked": len(checked),
               "fast_faster": all(r["fast_s"] < r["direct_s"] for r in checked)}
    outputs.write_summary(summary, out / f"{prefix}_summary.json")
    if not summary["fast_faster"]:
        raise InvariantViolation("conv_fast was not faster than conv_direct for a grid with >= 4096 nodes")
    return summary


MODE_RUNNERS = {
    "transient": run_transient_mode,
    "keller_segel": run_transient_mode,
    "eta_sweep": run_eta_sweep,
    "convergence_space": run_convergence_space,
    "convergence_time": run_convergence_time,
    "regularization_compare": run_regularization_compare,
    "benchmark": run_benchmark,
}


def run_experiment(cfg: RunConfig, opts: Optional[RunOptions] = None) -> dict:
    """Run ``cfg`` and return its summary (also written as JSON)."""
    opts = opts or RunOptions()
    try:
        return MODE_RUNNERS[cfg.mode](cfg, opts)
    except InvalidArgument as exc:
        # argument problems that only surface once grids are built
        raise ConfigError(str(exc)) from exc
