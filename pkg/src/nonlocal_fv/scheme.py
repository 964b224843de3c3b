"""Semi-implicit finite-volume time stepping and the 1D Robin Poisson solve.

One step treats the field explicitly and the diffusion implicitly.  Written
in u = c / g with g = exp(-f), each species satisfies

    (diag(vol * g) + dt * L_w) u = vol * c^n,     c^{n+1} = g * u,

where L_w is the graph Laplacian with face conductances
w = g_{1/2} * (face length) / (mesh size) and g_{1/2} is the harmonic mean
of the neighbouring g.  The matrix is symmetric positive definite and an
M-matrix, so c^{n+1} >= 0 whenever c^n >= 0; column sums of L_w vanish, so
mass is conserved.  The matrix is homogeneous in g, so every species uses
g~ = exp(-(f - min f)) in (0, 1], which keeps large fields in range.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lapack, solve_banded

from .diagnostics import DiagnosticsRecord, make_record
from .errors import InvalidArgument, InvariantViolation, SolverFailure
from .field import FieldSet, SpeciesState, assemble_fields, harmonic_mobility_from_fields
from .grid import Grid1D, Grid2D

__all__ = [
    "StepConfig",
    "RobinBC",
    "PoissonRobin1D",
    "Model",
    "Trajectory",
    "StepInfo",
    "step_1d",
    "step_2d",
    "step",
    "solve_poisson_robin_1d",
    "conjugate_gradient",
    "run_transient",
]

log = logging.getLogger(__name__)

# floor for the shifted Boltzmann factors; keeps dt * w and vol * g normal numbers
G_FLOOR = 1e-300
CLAMP_TOL = 1e-13
# true-residual restarts CG may spend on the mass defect
MASS_RESTARTS = 3


@dataclass(frozen=True)
class StepConfig:
    """Time step and linear-solver settings.

    ``max_iter`` of ``None`` means max(2000, 20 sqrt(n)) for n unknowns.
    """

    dt: float
    tol: float = 1e-13
    max_iter: Optional[int] = None
    bc: str = "no_flux"

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise InvalidArgument(f"dt must be positive, got {self.dt!r}")
        if not 0.0 < self.tol <= 1e-6:
            raise InvalidArgument(f"solver tolerance must lie in (0, 1e-6], got {self.tol!r}")
        if self.max_iter is not None and self.max_iter < 1:
            raise InvalidArgument("max_iter must be positive")
        if self.bc != "no_flux":
            raise InvalidArgument(f"only no_flux boundaries are supported, got {self.bc!r}")

    def iteration_cap(self, n: int) -> int:
        return self.max_iter if self.max_iter is not None else max(2000, int(20 * math.sqrt(n)))


@dataclass
class StepInfo:
    iterations: int = 0
    residual: float = 0.0
    clamped: float = 0.0


def _check_fresh(state: SpeciesState, fields: FieldSet):
    if fields.t != state.t:
        raise InvariantViolation(f"fields assembled at t={fields.t} used for a step from t={state.t}")
    if fields.f.shape != state.c.shape:
        raise InvalidArgument("field and state shapes differ")
    state.check_nonnegative()


def _shifted(fields: FieldSet):
    f = fields.f
    axes = tuple(range(1, f.ndim))
    s = f.min(axis=axes).reshape((-1,) + (1,) * len(axes))
    g = np.maximum(np.exp(-(f - s)), G_FLOOR)
    return s, g


def _face_weights(f, s, axis):
    ax = axis + 1
    n = f.shape[ax]
    a = np.take(f, np.arange(n - 1), axis=ax)
    b = np.take(f, np.arange(1, n), axis=ax)
    return np.maximum(harmonic_mobility_from_fields(a, b, s), G_FLOOR)


def _clamp(c_new, c_old, t):
    """Zero out solver noise below zero; anything larger is a bug."""
    thresh = CLAMP_TOL * max(1.0, float(np.max(np.abs(c_old))) if c_old.size else 1.0)
    lo = float(c_new.min()) if c_new.size else 0.0
    if lo < -thresh:
        raise InvariantViolation(f"step produced negative concentration {lo:.3e} at t={t}")
    neg = c_new < 0.0
    clamped = float(-c_new[neg].sum()) if neg.any() else 0.0
    if clamped:
        c_new = np.where(neg, 0.0, c_new)
    return c_new, clamped


def step_1d(state: SpeciesState, fields: FieldSet, cfg: StepConfig, return_info: bool = False):
    """Advance a 1D state by one backward-Euler step with frozen fields.

    The symmetric positive definite tridiagonal system is factored as
    L D L^T (LAPACK ``dptsv``).  With the off-diagonal entries negative,
    every update in the elimination adds nonnegative terms, so the computed
    u is nonnegative in floating point, not just in exact arithmetic.
    """
    grid = state.grid
    if not isinstance(grid, Grid1D):
        raise InvalidArgument("step_1d needs a 1D state")
    _check_fresh(state, fields)
    dt = cfg.dt
    s, g = _shifted(fields)
    w = _face_weights(fields.f, s, 0) / grid.dx
    vol = grid.volumes
    c_new = np.empty_like(state.c)
    for m in range(state.M):
        diag = vol * g[m]
        diag[:-1] += dt * w[m]
        diag[1:] += dt * w[m]
        off = -dt * w[m]
        rhs = vol * state.c[m]
        _, _, u, info = lapack.dptsv(diag, off, rhs)
        if info != 0:
            raise SolverFailure(f"tridiagonal solve failed (info={info})", residual=float("nan"), iterations=0)
        c_new[m] = g[m] * u
    c_new, clamped = _clamp(c_new, state.c, state.t)
    out = state.replace(c=c_new, t=state.t + dt)
    if return_info:
        return out, StepInfo(iterations=1, residual=0.0, clamped=clamped)
    return out


def conjugate_gradient(matvec: Callable, b: np.ndarray, diag: np.ndarray, tol: float, max_iter: int,
                       x0: Optional[np.ndarray] = None, conserve: bool = False) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned conjugate gradients for an SPD operator.

    Stops when ||r||_2 <= tol * ||b||_2.  Returns (x, iterations, relative
    residual); raises :class:`SolverFailure` if ``max_iter`` is exhausted
    first.

    With ``conserve`` the sum of the true residual b - A x is checked once
    the norm test passes.  When the column sums of A equal the mass weights,
    that sum is exactly the mass defect of the iterate.  If it exceeds
    tol * sum(|b|), CG restarts from the true residual, at most
    ``MASS_RESTARTS`` times, and the iterate with the smallest defect is kept.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    inv_d = 1.0 / diag
    x = inv_d * b if x0 is None else x0.copy()
    r = b - matvec(x)
    z = inv_d * r
    p = z.copy()
    rz = float(np.vdot(r, z))
    target = tol * bnorm
    mass_target = tol * float(np.abs(b).sum())
    res = float(np.linalg.norm(r))
    it = 0
    best = None  # (defect, x, relative residual) of the best converged iterate
    restarts = 0
    while True:
        if res <= target:
            if not conserve:
                break
            r = b - matvec(x)
            res = float(np.linalg.norm(r))
            defect = abs(float(r.sum()))
            if best is None or defect < best[0]:
                best = (defect, x.copy(), res / bnorm)
            if (defect <= mass_target and res <= target) or restarts >= MASS_RESTARTS:
                break
            # the recursive residual has drifted from b - A x; restart from the true one
            restarts += 1
            z = inv_d * r
            p = z.copy()
            rz = float(np.vdot(r, z))
        if it >= max_iter:
            if best is not None:
                break
            raise SolverFailure(
                f"conjugate gradients stopped after {it} iterations, relative residual {res / bnorm:.3e}",
                residual=res / bnorm, iterations=it,
            )
        Ap = matvec(p)
        alpha = rz / float(np.vdot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        z = inv_d * r
        rz_new = float(np.vdot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
        res = float(np.linalg.norm(r))
        it += 1
    if best is not None:
        if best[0] > mass_target:
            log.debug("mass defect %.3e after %d restarts (target %.3e)", best[0], restarts, mass_target)
        return best[1], it, best[2]
    return x, it, res / bnorm


def step_2d(state: SpeciesState, fields: FieldSet, cfg: StepConfig, return_info: bool = False):
    """Advance a 2D state by one step; five-point system solved by PCG."""
    grid = state.grid
    if not isinstance(grid, Grid2D):
        raise InvalidArgument("step_2d needs a 2D state")
    _check_fresh(state, fields)
    dt = cfg.dt
    s, g = _shifted(fields)
    # conductances: x-faces have length dy (halved on boundary rows), y-faces dx
    hy = np.full(grid.shape[1], grid.dy)
    hy[[0, -1]] *= 0.5
    hx = np.full(grid.shape[0], grid.dx)
    hx[[0, -1]] *= 0.5
    wx = _face_weights(fields.f, s, 0) * (hy / grid.dx)[None, None, :]
    wy = _face_weights(fields.f, s, 1) * (hx / grid.dy)[None, :, None]
    vol = grid.volumes
    cap = cfg.iteration_cap(grid.size)
    c_new = np.empty_like(state.c)
    iters = 0
    worst = 0.0
    for m in range(state.M):
        ax_, ay_ = dt * wx[m], dt * wy[m]
        d = vol * g[m]
        d[:-1, :] += ax_
        d[1:, :] += ax_
        d[:, :-1] += ay_
        d[:, 1:] += ay_

        def matvec(u, d=d, ax_=ax_, ay_=ay_):
            u = u.reshape(grid.shape)
            out = d * u
            out[:-1, :] -= ax_ * u[1:, :]
            out[1:, :] -= ax_ * u[:-1, :]
            out[:, :-1] -= ay_ * u[:, 1:]
            out[:, 1:] -= ay_ * u[:, :-1]
            return out.ravel()

        b = (vol * state.c[m]).ravel()
        u, it, res = conjugate_gradient(matvec, b, d.ravel(), cfg.tol, cap, conserve=True)
        iters += it
        worst = max(worst, res)
        c_new[m] = g[m] * u.reshape(grid.shape)
    c_new, clamped = _clamp(c_new, state.c, state.t)
    if clamped:
        log.debug("clamped %.3e of negative mass at t=%g", clamped, state.t)
    out = state.replace(c=c_new, t=state.t + dt)
    if return_info:
        return out, StepInfo(iterations=iters, residual=worst, clamped=clamped)
    return out


def step(state, fields, cfg, return_info=False):
    if state.grid.dim == 1:
        return step_1d(state, fields, cfg, return_info)
    return step_2d(state, fields, cfg, return_info)


# ----------------------------------------------------------------------------
# Robin Poisson problem


@dataclass(frozen=True)
class RobinBC:
    """alpha phi - beta phi' = g_left at x = -L and alpha phi + beta phi' = g_right at x = L."""

    alpha: float
    beta: float
    g_left: float
    g_right: float

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.g_left, self.g_right)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidArgument("Robin coefficients must be finite")
        if self.alpha == 0.0 and self.beta == 0.0:
            raise InvalidArgument("Robin condition needs alpha^2 + beta^2 > 0")


def _poisson_banded(grid: Grid1D, bc: RobinBC) -> np.ndarray:
    if bc.alpha == 0.0:
        raise InvalidArgument("alpha = 0 gives a pure Neumann problem, which is singular")
    n = grid.size
    h = grid.dx
    ab = np.zeros((5, n))  # ab[2 + i - j, j] = A[i, j]

    def put(i, j, v):
        ab[2 + i - j, j] = v

    for i in range(1, n - 1):
        put(i, i - 1, -1.0 / h**2)
        put(i, i, 2.0 / h**2)
        put(i, i + 1, -1.0 / h**2)
    # alpha phi_0 - beta (-3 phi_0 + 4 phi_1 - phi_2) / (2h)
    k = bc.beta / (2.0 * h)
    put(0, 0, bc.alpha + 3.0 * k)
    put(0, 1, -4.0 * k)
    put(0, 2, k)
    # alpha phi_n + beta (3 phi_n - 4 phi_{n-1} + phi_{n-2}) / (2h)
    put(n - 1, n - 1, bc.alpha + 3.0 * k)
    put(n - 1, n - 2, -4.0 * k)
    put(n - 1, n - 3, k)
    return ab


def solve_poisson_robin_1d(rho, bc: RobinBC, grid: Grid1D) -> np.ndarray:
    """Second-order finite differences for -phi'' = rho with Robin ends."""
    if not isinstance(grid, Grid1D):
        raise InvalidArgument("solve_poisson_robin_1d needs a 1D grid")
    rho = np.asarray(rho, dtype=float)
    if rho.shape != grid.shape:
        raise InvalidArgument(f"rho shape {rho.shape} does not match grid {grid.shape}")
    rhs = rho.copy()
    rhs[0] = bc.g_left
    rhs[-1] = bc.g_right
    return solve_banded((2, 2), _poisson_banded(grid, bc), rhs)


class PoissonRobin1D:
    """phi_K from Gauss's law, usable in place of the K convolution.

    ``boundary_field`` is the solution for rho = 0, i.e. the part of phi
    driven purely by the boundary data.
    """

    def __init__(self, grid: Grid1D, bc: RobinBC):
        self.grid = grid
        self.bc = bc
        self._ab = _poisson_banded(grid, bc)
        self.boundary_field = self(np.zeros(grid.shape))
        self.boundary_field.flags.writeable = False

    def __call__(self, rho):
        rhs = np.array(rho, dtype=float)
        rhs[0] = self.bc.g_left
        rhs[-1] = self.bc.g_right
        return solve_banded((2, 2), self._ab, rhs)


# ----------------------------------------------------------------------------
# time loop


@dataclass
class Model:
    """Everything that turns a state into fields."""

    kernel_K: Optional[Callable] = None
    kernel_W: Optional[Callable] = None
    potential: Optional[object] = None
    poisson: Optional[Callable] = None
    _vext: Optional[np.ndarray] = field(default=None, repr=False)

    def fields(self, state: SpeciesState) -> FieldSet:
        if self._vext is None and self.potential is not None and not self.potential.is_zero:
            self._vext = self.potential.evaluate(state.grid)
        return assemble_fields(state, self.kernel_K, self.kernel_W, self.potential, self.poisson, self._vext)


@dataclass
class Trajectory:
    state: SpeciesState
    records: list
    snapshots: list
    blowup: bool = False
    steps: int = 0
    final_fields: Optional[FieldSet] = None


def run_transient(initial: SpeciesState, model: Model, cfg: StepConfig, t_end: float,
                  observers: Sequence[Callable] = (), diag_stride: int = 1,
                  snapshot_stride: int = 0, blowup_ceiling: Optional[float] = None) -> Trajectory:
    """March from ``initial.t`` to ``t_end`` with constant dt.

    The last step is shortened so the run lands exactly on ``t_end``.
    Diagnostics are recorded at the initial time, every ``diag_stride``
    steps and at the final time; snapshots (copies of the state) every
    ``snapshot_stride`` steps (0 disables) plus the initial and final
    states.  Observers are called as ``obs(state, fields, record)`` whenever
    a record is made.  If ``max c`` exceeds ``blowup_ceiling`` (default
    1e6 times the initial maximum) the run stops early with ``blowup=True``.
    """
    if t_end < initial.t:
        raise InvalidArgument("t_end is before the initial time")
    if diag_stride < 1:
        raise InvalidArgument("diag_stride must be >= 1")
    if blowup_ceiling is None:
        blowup_ceiling = 1e6 * max(float(np.max(initial.c)), np.finfo(float).tiny)
    n_steps = int(math.ceil((t_end - initial.t) / cfg.dt - 1e-9))
    if n_steps == 0:
        return Trajectory(initial, [], [], False, 0, None)

    state = initial
    records: list[DiagnosticsRecord] = []
    snapshots = [state]
    info = StepInfo()
    blowup = False

    def emit(state, fields, info):
        rec = make_record(state, fields, info.clamped, info.iterations)
        records.append(rec)
        for obs in observers:
            obs(state, fields, rec)

    fields = model.fields(state)
    emit(state, fields, info)
    for n in range(1, n_steps + 1):
        remaining = t_end - state.t
        if n < n_steps or abs(remaining - cfg.dt) <= 1e-9 * cfg.dt:
            scfg = cfg
        else:
            scfg = StepConfig(remaining, cfg.tol, cfg.max_iter, cfg.bc)
        state, info = step(state, fields, scfg, return_info=True)
        # keep t free of accumulated rounding
        state = state.replace(t=t_end if n == n_steps else initial.t + n * cfg.dt)
        fields = model.fields(state)
        blowup = bool(np.max(state.c) > blowup_ceiling)
        last = n == n_steps or blowup
        if last or n % diag_stride == 0:
            emit(state, fields, info)
        if snapshot_stride and n % snapshot_stride == 0 and not last:
            snapshots.append(state)
        if last:
            snapshots.append(state)
            if blowup:
                log.info("blowup guard triggered at t=%g (max c = %.3e)", state.t, float(np.max(state.c)))
            return Trajectory(state, records, snapshots, blowup, n, fields)
    raise AssertionError("unreachable")
