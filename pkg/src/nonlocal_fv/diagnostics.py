"""Discrete energy, dissipation, chemical potential, masses and error norms."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvariantViolation
from .field import FieldSet, SpeciesState, harmonic_mobility_from_fields
from .grid import Grid1D, Grid2D

__all__ = [
    "DiagnosticsRecord",
    "discrete_energy",
    "discrete_dissipation",
    "chemical_potential",
    "total_mass",
    "restrict",
    "error_norms",
    "fit_order",
    "make_record",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    energy: float
    dissipation: float
    masses: tuple
    linf: tuple
    clamped: float = 0.0
    iterations: int = 0


def _xlogx(c):
    out = np.zeros_like(c)
    pos = c > 0.0
    out[pos] = c[pos] * np.log(c[pos])
    return out


def _interaction_and_external(state: SpeciesState, fields: FieldSet):
    """Split f into the self-interaction part and the external part."""
    z = state.z.reshape((-1,) + (1,) * state.grid.dim)
    phi_K = fields.phi_K
    ext = fields.phi_external[None]
    if fields.external_coupled:
        ext = z * fields.phi_external[None]
    if fields.phi_K_boundary is not None:
        phi_K = phi_K - fields.phi_K_boundary
        ext = ext + z * fields.phi_K_boundary[None]
    inter = z * phi_K[None] + fields.phi_W[None]
    return inter, ext


def discrete_energy(state: SpeciesState, fields: FieldSet) -> float:
    """E = sum_m sum_j vol_j c_{m,j} (log c_{m,j} + f^int_{m,j}/2 + V_{m,j}).

    The pairwise-interaction part of the field enters with weight one half;
    the external potential (and, in the Poisson variant, the boundary-driven
    part of the potential) enters with weight one, making E the Lyapunov
    functional of the flow with external forcing.  Uses 0 log 0 = 0.
    """
    c = state.c
    if c.size and c.min() < 0.0:
        raise InvariantViolation(f"negative concentration {c.min():.3e} in energy")
    inter, ext = _interaction_and_external(state, fields)
    dens = _xlogx(c) + c * (0.5 * inter + ext)
    return float(np.sum(dens * state.grid.volumes))


def _faces(grid):
    """(axis, conductance geometry factor) for every face direction."""
    if isinstance(grid, Grid1D):
        return [(0, np.array(1.0 / grid.dx))]
    w_y = np.ones(grid.shape[1])
    w_y[0] = w_y[-1] = 0.5
    w_x = np.ones(grid.shape[0])
    w_x[0] = w_x[-1] = 0.5
    # x-faces have length dy (halved on the boundary rows), y-faces length dx
    return [(0, (grid.dy / grid.dx) * w_y[None, :]), (1, (grid.dx / grid.dy) * w_x[:, None])]


def discrete_dissipation(state: SpeciesState, fields: FieldSet) -> float:
    """D = sum over faces of w (log u_b - log u_a)(u_b - u_a), u = c exp(f).

    w is the harmonic-mean mobility times face length over mesh size.  The
    product is formed with a per-species shift so neither factor overflows.
    Returns ``inf`` (logged at debug level) if any concentration is zero.
    """
    c = state.c
    if np.any(c <= 0.0):
        log.debug("dissipation undefined at t=%g: zero concentration present", state.t)
        return float("inf")
    f = fields.f
    axes = tuple(range(1, f.ndim))
    s = f.min(axis=axes).reshape((-1,) + (1,) * len(axes))
    logu = np.log(c) + f
    ut = c * np.exp(f - s)  # u exp(-s); shift cancels against the mobility
    total = 0.0
    for axis, geom in _faces(state.grid):
        ax = axis + 1
        n = f.shape[ax]
        lo, hi = np.arange(n - 1), np.arange(1, n)
        # exp(s) times the true mobility, bounded by 2
        w = harmonic_mobility_from_fields(np.take(f, lo, ax), np.take(f, hi, ax), s)
        dl = np.take(logu, hi, ax) - np.take(logu, lo, ax)
        du = np.take(ut, hi, ax) - np.take(ut, lo, ax)
        total += float(np.sum(geom * w * dl * du))
    return total


def chemical_potential(state: SpeciesState, fields: FieldSet) -> np.ndarray:
    """mu_m = 1 + log c_m + f_m at every node (-inf where c = 0)."""
    with np.errstate(divide="ignore"):
        return 1.0 + np.log(state.c) + fields.f


def total_mass(state: SpeciesState) -> tuple[np.ndarray, float]:
    """Per-species masses sum_j vol_j c_{m,j} and their total."""
    m = state.masses()
    return m, float(m.sum())


def _axis_bounds(L, N):
    h = L / N
    x = -L + np.arange(2 * N + 1) * h
    return np.maximum(x - 0.5 * h, -L), np.minimum(x + 0.5 * h, L)


def _restriction_matrix(L, n_coarse, n_fine):
    if n_fine % n_coarse:
        raise InvalidArgument(f"grids do not nest: N={n_coarse} vs N={n_fine}")
    ratio = n_fine // n_coarse
    if ratio & (ratio - 1):
        raise InvalidArgument(f"refinement ratio {ratio} is not a power of two")
    clo, chi = _axis_bounds(L, n_coarse)
    flo, fhi = _axis_bounds(L, n_fine)
    overlap = np.clip(np.minimum(chi[:, None], fhi[None, :]) - np.maximum(clo[:, None], flo[None, :]), 0.0, None)
    return overlap / (chi - clo)[:, None]


def restrict(fine: SpeciesState, coarse_grid) -> np.ndarray:
    """Average the fine piecewise-constant solution over each coarse control volume."""
    fg = fine.grid
    if isinstance(fg, Grid1D) and isinstance(coarse_grid, Grid1D):
        if not np.isclose(fg.L, coarse_grid.L, rtol=1e-14):
            raise InvalidArgument("grids cover different domains")
        R = _restriction_matrix(fg.L, coarse_grid.N, fg.N)
        return fine.c @ R.T
    if isinstance(fg, Grid2D) and isinstance(coarse_grid, Grid2D):
        if not (np.isclose(fg.Lx, coarse_grid.Lx, rtol=1e-14) and np.isclose(fg.Ly, coarse_grid.Ly, rtol=1e-14)):
            raise InvalidArgument("grids cover different domains")
        Rx = _restriction_matrix(fg.Lx, coarse_grid.Nx, fg.Nx)
        Ry = _restriction_matrix(fg.Ly, coarse_grid.Ny, fg.Ny)
        return np.einsum("ai,mij,bj->mab", Rx, fine.c, Ry)
    raise InvalidArgument("grids must have the same dimension")


def error_norms(candidate: SpeciesState, reference: SpeciesState) -> tuple[float, float, float]:
    """(l_inf, l_1, l_2) distance after restricting ``reference`` to the candidate grid.

    l_1 and l_2 are control-volume weighted and summed over species; l_inf is
    the largest nodal difference over all species.
    """
    if candidate.M != reference.M:
        raise InvalidArgument("states have different species counts")
    ref = restrict(reference, candidate.grid)
    e = np.abs(candidate.c - ref)
    vol = candidate.grid.volumes
    return float(e.max()), float(np.sum(e * vol)), float(np.sqrt(np.sum(e * e * vol)))


def fit_order(h, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.shape != e.shape or h.ndim != 1:
        raise InvalidArgument("mesh sizes and errors must be 1D arrays of equal length")
    if h.size < 3:
        raise InvalidArgument("need at least three points to fit an order")
    if np.any(h <= 0.0) or np.any(e <= 0.0) or not np.all(np.isfinite(e)):
        raise InvalidArgument("mesh sizes and errors must be positive and finite")
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)


def make_record(state: SpeciesState, fields: FieldSet, clamped: float = 0.0, iterations: int = 0) -> DiagnosticsRecord:
    masses, _ = total_mass(state)
    axes = tuple(range(1, state.c.ndim))
    linf = np.abs(state.c).max(axis=axes)
    return DiagnosticsRecord(
        t=state.t,
        energy=discrete_energy(state, fields),
        dissipation=discrete_dissipation(state, fields),
        masses=tuple(float(m) for m in masses),
        linf=tuple(float(v) for v in linf),
        clamped=float(clamped),
        iterations=int(iterations),
    )
