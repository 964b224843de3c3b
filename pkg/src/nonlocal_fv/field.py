"""Species state, the convolution-type field, and Boltzmann-factor mobilities.

Each species m feels

    f_m = z_m (K * rho) + (W * theta) + V_ext        (or z_m V_ext when the
                                                       potential is valence-coupled)

with rho = sum z_m c_m and theta = sum c_m.  Downstream code only ever needs
ratios exp(f_a - f_b), so fields are stored as f and exponentials are formed
after subtracting a shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, InvariantViolation
from .grid import Grid1D, Grid2D

__all__ = [
    "SpeciesState",
    "ExternalPotential",
    "FieldSet",
    "total_densities",
    "assemble_fields",
    "half_point_mobility",
    "harmonic_mobility_from_fields",
    "G_MATERIALIZE_LIMIT",
]

# exp(-f) is materialised only when |f| stays below this
G_MATERIALIZE_LIMIT = 600.0


@dataclass(frozen=True, eq=False)
class SpeciesState:
    """Nodal cell averages ``c[m, ...]`` for M species on a grid at time ``t``."""

    grid: object
    valences: tuple
    c: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        c = np.array(self.c, dtype=float)  # private copy
        z = tuple(int(v) for v in self.valences)
        if any(v != zz for v, zz in zip(self.valences, z)):
            raise InvalidArgument("valences must be integers")
        if c.shape != (len(z),) + self.grid.shape:
            raise InvalidArgument(
                f"concentration array has shape {c.shape}, expected {(len(z),) + self.grid.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("concentrations must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "valences", z)
        object.__setattr__(self, "t", float(self.t))

    @property
    def M(self) -> int:
        return len(self.valences)

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.valences, dtype=float)

    def masses(self) -> np.ndarray:
        axes = tuple(range(1, self.c.ndim))
        return np.sum(self.c * self.grid.volumes, axis=axes)

    def check_nonnegative(self, tol: float = 0.0):
        lo = float(self.c.min()) if self.c.size else 0.0
        if lo < -tol:
            raise InvariantViolation(f"negative concentration {lo:.3e} at t={self.t}")

    def replace(self, c=None, t=None) -> "SpeciesState":
        return SpeciesState(self.grid, self.valences, self.c if c is None else c, self.t if t is None else t)


@dataclass(frozen=True)
class ExternalPotential:
    """External potential V_ext evaluated at grid nodes.

    Forms
    -----
    none
        V = 0.
    quadratic
        V = a * |x|^2.
    linear
        V = a * x (first coordinate).
    multi_well
        V = sum_i A_i exp(-k_i |x - x_i|^2) + a * |x|^2, wells given as
        ``(A, k, center)`` tuples.
    table
        Nodal values supplied directly.

    With ``couple_valence`` species m sees z_m * V instead of V.
    """

    form: str = "none"
    a: float = 0.0
    wells: tuple = ()
    values: Optional[np.ndarray] = field(default=None, compare=False)
    couple_valence: bool = False

    FORMS = ("none", "quadratic", "linear", "multi_well", "table")

    def __post_init__(self):
        if self.form not in self.FORMS:
            raise InvalidArgument(f"unknown potential form {self.form!r}; expected one of {self.FORMS}")
        if not np.isfinite(self.a):
            raise InvalidArgument("potential coefficient must be finite")
        if self.form == "table" and self.values is None:
            raise InvalidArgument("table potential needs nodal values")

    @property
    def is_zero(self) -> bool:
        return self.form == "none" or (self.form in ("quadratic", "linear") and self.a == 0.0)

    def evaluate(self, grid) -> np.ndarray:
        if isinstance(grid, Grid1D):
            coords = (grid.x,)
        elif isinstance(grid, Grid2D):
            coords = grid.mesh()
        else:
            raise InvalidArgument(f"unsupported grid type {type(grid).__name__}")
        r2 = sum(x * x for x in coords)
        if self.form == "none":
            v = np.zeros(grid.shape)
        elif self.form == "quadratic":
            v = self.a * r2
        elif self.form == "linear":
            v = self.a * coords[0]
        elif self.form == "multi_well":
            v = self.a * r2
            for amp, rate, center in self.wells:
                d2 = sum((x - x0) ** 2 for x, x0 in zip(coords, center))
                v = v + amp * np.exp(-rate * d2)
        else:
            v = np.asarray(self.values, dtype=float)
            if v.shape != grid.shape:
                raise InvalidArgument(f"potential table shape {v.shape} does not match grid {grid.shape}")
        v = np.array(v, dtype=float)
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("external potential is not finite at every node")
        return v


def total_densities(state: SpeciesState) -> tuple[np.ndarray, np.ndarray]:
    """Charge density rho = sum z_m c_m and total density theta = sum c_m."""
    c = state.c
    rho = np.tensordot(state.z, c, axes=1)
    theta = c.sum(axis=0)
    return rho, theta


def half_point_mobility(g_a, g_b):
    """Harmonic mean 2 g_a g_b / (g_a + g_b), evaluated without overflow.

    Written as lo * 2 / (1 + lo/hi) so that neither the product nor the sum
    is formed; the result overflows only if the true value does.
    """
    a = np.asarray(g_a, dtype=float)
    b = np.asarray(g_b, dtype=float)
    if not (np.all(a > 0.0) and np.all(b > 0.0)):
        raise InvalidArgument("harmonic mean needs strictly positive arguments")
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    out = lo * (2.0 / (1.0 + lo / hi))
    return float(out) if out.ndim == 0 else out


def harmonic_mobility_from_fields(f_a, f_b, shift=0.0):
    """Harmonic mean of exp(-(f_a - s)) and exp(-(f_b - s)) computed from the exponents.

    Equals 2 exp(-(hi - s)) / (1 + exp(lo - hi)) with lo/hi the smaller/larger
    exponent, which never overflows and only underflows when the true value
    does.
    """
    lo = np.minimum(f_a, f_b)
    hi = np.maximum(f_a, f_b)
    return 2.0 * np.exp(-(hi - shift)) / (1.0 + np.exp(lo - hi))


@dataclass(frozen=True, eq=False)
class FieldSet:
    """Per-species nodal fields f[m, ...] assembled at time ``t``.

    ``phi_K``/``phi_W`` keep the two shared convolution parts;
    ``phi_external`` is the species-independent potential part before any
    valence coupling.  ``phi_K_boundary`` is the part of phi_K driven by
    boundary data rather than by rho (non-zero only for the Poisson variant);
    the energy treats it as an external, valence-coupled potential.
    """

    f: np.ndarray
    t: float
    phi_K: np.ndarray
    phi_W: np.ndarray
    phi_external: np.ndarray
    external_coupled: bool = False
    phi_K_boundary: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return self.f.shape[0]

    @property
    def g(self) -> np.ndarray:
        """exp(-f); only available when it cannot overflow."""
        if np.max(np.abs(self.f)) > G_MATERIALIZE_LIMIT:
            raise InvalidArgument("|f| too large to materialise exp(-f); use the shifted path")
        return np.exp(-self.f)

    def shifted_g(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-species shift s_m = min f_m and g~ = exp(-(f - s)) in (0, 1]."""
        axes = tuple(range(1, self.f.ndim))
        s = self.f.min(axis=axes)
        gt = np.exp(-(self.f - s.reshape((-1,) + (1,) * len(axes))))
        return s, np.maximum(gt, np.finfo(float).tiny)

    def half_point_mobilities(self, axis: int = 0, shifted: bool = True) -> np.ndarray:
        """Harmonic-mean mobilities between neighbours along spatial ``axis``.

        With ``shifted`` (default) the per-species shift of :meth:`shifted_g`
        is applied, i.e. the values are exp(s_m) times the true mobilities.
        """
        ax = axis + 1
        n = self.f.shape[ax]
        fa = np.take(self.f, np.arange(n - 1), axis=ax)
        fb = np.take(self.f, np.arange(1, n), axis=ax)
        if shifted:
            axes = tuple(range(1, self.f.ndim))
            s = self.f.min(axis=axes).reshape((-1,) + (1,) * len(axes))
        else:
            s = 0.0
        return harmonic_mobility_from_fields(fa, fb, s)


def assemble_fields(state: SpeciesState, kernel_K: Optional[Callable] = None,
                    kernel_W: Optional[Callable] = None,
                    potential: Optional[ExternalPotential] = None,
                    poisson: Optional[Callable] = None,
                    external_values: Optional[np.ndarray] = None) -> FieldSet:
    """Build f_m at the state's time level.

    ``kernel_K``/``kernel_W`` are callables mapping a nodal density to the
    scaled field (typically :class:`~nonlocal_fv.conv.KernelOperator`).  When
    ``poisson`` is given it replaces K: it maps rho to phi_K, e.g. a bound
    :func:`~nonlocal_fv.scheme.solve_poisson_robin_1d`.
    If the Poisson callable has a ``boundary_field`` attribute (phi for
    rho = 0) it is recorded so the energy can split it off.
    ``external_values`` lets callers pass precomputed V_ext nodal values.
    """
    state.check_nonnegative()
    grid = state.grid
    rho, theta = total_densities(state)
    zeros = np.zeros(grid.shape)
    if poisson is not None:
        if kernel_K is not None:
            raise InvalidArgument("give either a K kernel or a Poisson solve, not both")
        phi_K = np.asarray(poisson(rho), dtype=float)
    elif kernel_K is not None and np.any(rho != 0.0):
        phi_K = np.asarray(kernel_K(rho), dtype=float)
    else:
        phi_K = zeros
    phi_W = np.asarray(kernel_W(theta), dtype=float) if kernel_W is not None else zeros

    potential = potential or ExternalPotential()
    if external_values is None:
        external_values = zeros if potential.is_zero else potential.evaluate(grid)
    z = state.z.reshape((-1,) + (1,) * grid.dim)
    f = z * phi_K[None] + phi_W[None]
    if potential.couple_valence:
        f = f + z * external_values[None]
    else:
        f = f + external_values[None]
    if not np.all(np.isfinite(f)):
        raise InvariantViolation("assembled field is not finite")
    f.flags.writeable = False
    bc_part = getattr(poisson, "boundary_field", None) if poisson is not None else None
    return FieldSet(f, state.t, phi_K, phi_W, external_values, potential.couple_valence, bc_part)
