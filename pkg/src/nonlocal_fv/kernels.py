"""Interaction kernels and their precomputed convolution tensors.

For a kernel U and mesh size dx the one-sided ("half-hat") integral

    Q_k = dx * int_0^1 U((k - x) dx) (1 - x) dx

is the basic building block.  Every catalog kernel is even, so the full-hat
tensor entry is T_k = Q_k + Q_{-k} and the half-hat boundary weights are
plain index flips of Q.  In 2D the same holds per coordinate with

    Q_{k,l} = dx dy * int int_{[0,1]^2} U((k-x) dx, (l-y) dy) (1-x)(1-y).

Only Q needs quadrature.  Cells touching the kernel singularity use closed
forms (1D power law) or a Duffy split plus dyadic refinement toward the
singular corner; all other cells use tensor Gauss-Legendre rules.

Tensors never include the kernel strength (eta, sign, 1/2pi); that factor is
applied when the convolution is evaluated, so eta-sweeps reuse one tensor.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidArgument, KernelDomainError, QuadratureFailure
from .quadrature import gauss_legendre01, integrate_endpoint_singular

__all__ = [
    "FAMILIES",
    "KernelSpec",
    "ConvolutionTensor1D",
    "ConvolutionTensor2D",
    "eval_kernel",
    "precompute_tensor_1d",
    "precompute_tensor_2d",
    "singular_cell_integral",
    "save_tensor",
    "load_tensor",
]

FAMILIES = ("power_law", "exponential", "log2d", "regularized_power_law")

QUAD_TOL = 1e-13
EVAL_BUDGET = 10**6

# Gauss orders for the non-singular cells, chosen from the Bernstein-ellipse
# bound: a singularity one cell away from [0, 1] gives rho ~ 5.8.
_ORDER_1D = 20
_ORDER_2D_NEAR = 16
_ORDER_2D_FAR = 6
_NEAR_CELLS = 8
_ORDER_DUFFY_ANGLE = 32


@dataclass(frozen=True)
class KernelSpec:
    """Symbolic description of an interaction kernel.

    ``strength`` (the factor applied at convolution time) is ``sign * eta``,
    times 1/(2 pi) for ``log2d``.  Tensors are built from the unit kernel.
    """

    family: str
    alpha: Optional[float] = None
    eps: Optional[float] = None
    eta: float = 1.0
    sign: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.dim not in (1, 2):
            raise InvalidArgument(f"kernel dimension must be 1 or 2, got {self.dim!r}")
        if not (np.isfinite(self.eta) and np.isfinite(self.sign)):
            raise InvalidArgument("kernel eta and sign must be finite")
        if self.family == "power_law":
            if self.alpha is None:
                raise InvalidArgument("power_law kernel needs alpha")
            if not 0.0 < self.alpha < self.dim:
                raise InvalidArgument(
                    f"kernel not integrable in {self.dim}D: power_law requires "
                    f"0 < alpha < {self.dim}, got alpha={self.alpha}"
                )
        elif self.family == "regularized_power_law":
            if self.eps is None or not self.eps > 0.0:
                raise InvalidArgument("regularized_power_law requires eps > 0")
            if self.alpha is None:
                object.__setattr__(self, "alpha", 0.5)
            if not self.alpha > 0.0:
                raise InvalidArgument("regularized_power_law requires alpha > 0")
        elif self.family == "log2d" and self.dim != 2:
            raise InvalidArgument("log2d kernel is only defined in 2D")

    @property
    def strength(self) -> float:
        s = self.sign * self.eta
        if self.family == "log2d":
            s /= 2.0 * math.pi
        return s

    @property
    def singular(self) -> bool:
        return self.family in ("power_law", "log2d")

    def unit(self) -> "KernelSpec":
        """Same kernel with unit strength; the tensor cache key."""
        return replace(self, eta=1.0, sign=1.0)

    def base(self, r):
        """Unscaled kernel U(r) at distance(s) ``r >= 0`` (no singularity check)."""
        r = np.asarray(r, dtype=float)
        if self.family == "power_law":
            return r ** -self.alpha
        if self.family == "exponential":
            return np.exp(-r)
        if self.family == "log2d":
            return np.log(r)
        return 1.0 / (r ** self.alpha + self.eps)

    def base_sq(self, r2):
        """U evaluated from squared distances; avoids a square root in 2D."""
        r2 = np.asarray(r2, dtype=float)
        if self.family == "power_law":
            return r2 ** (-0.5 * self.alpha)
        if self.family == "log2d":
            return 0.5 * np.log(r2)
        return self.base(np.sqrt(r2))


def eval_kernel(spec: KernelSpec, *displacement):
    """Scaled kernel value ``strength * U(|r|)``.

    Pass one displacement component in 1D and two in 2D (a single radius is
    also accepted in 2D).  Evaluating a singular family at r = 0 raises
    :class:`KernelDomainError`.
    """
    if len(displacement) == 1:
        r = np.abs(np.asarray(displacement[0], dtype=float))
    elif len(displacement) == 2:
        r = np.hypot(np.asarray(displacement[0], dtype=float), np.asarray(displacement[1], dtype=float))
    else:
        raise InvalidArgument("eval_kernel takes one (1D) or two (2D) displacement components")
    if spec.singular and np.any(r == 0.0):
        raise KernelDomainError(f"{spec.family} kernel is singular at r = 0")
    out = spec.strength * spec.base(r)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# 1D half-hat integrals


def _power_law_q_closed(alpha: float, k: int) -> float:
    """int_0^1 |k - x|^-alpha (1 - x) dx in closed form (unit mesh)."""
    a1, a2 = 1.0 - alpha, 2.0 - alpha
    if k == 0:
        return 1.0 / (a1 * a2)
    if k == 1:
        return 1.0 / a2
    if k >= 2:
        # s = k - x in [k-1, k], weight 1 - k + s
        lo, hi = k - 1.0, float(k)
        return (1.0 - k) * (hi ** a1 - lo ** a1) / a1 + (hi ** a2 - lo ** a2) / a2
    # k < 0: s = x - k in [|k|, |k|+1], weight 1 - k - s
    lo, hi = float(-k), 1.0 - k
    return (1.0 - k) * (hi ** a1 - lo ** a1) / a1 - (hi ** a2 - lo ** a2) / a2


def _q1d_singular(spec: KernelSpec, k: int, dx: float, method: str = "auto") -> float:
    """Q_k for k in {0, 1}, where U is singular or non-smooth at an endpoint."""
    if spec.family == "power_law" and method in ("auto", "closed"):
        return dx ** (1.0 - spec.alpha) * _power_law_q_closed(spec.alpha, k)
    if k == 0:
        g = lambda u: spec.base(u * dx) * (1.0 - u)
    else:
        g = lambda u: spec.base(u * dx) * u
    return dx * integrate_endpoint_singular(g, tol=QUAD_TOL, budget=EVAL_BUDGET)


def _q1d_regular(spec: KernelSpec, ks: np.ndarray, dx: float, order: int = _ORDER_1D) -> np.ndarray:
    x, w = gauss_legendre01(order)
    r = np.abs(ks[:, None] - x[None, :]) * dx
    return dx * (spec.base(r) * ((1.0 - x) * w)[None, :]).sum(axis=1)


def _half_tensor_1d(spec: KernelSpec, dx: float, kmax: int) -> np.ndarray:
    """Q_k for k = -kmax..kmax."""
    ks = np.arange(-kmax, kmax + 1)
    q = np.empty(ks.size)
    smooth_endpoint = spec.family == "exponential"
    regular = np.ones(ks.size, dtype=bool)
    if not smooth_endpoint:
        for k in (0, 1):
            if abs(k) <= kmax:
                q[k + kmax] = _q1d_singular(spec, k, dx)
                regular[k + kmax] = False
    q[regular] = _q1d_regular(spec, ks[regular].astype(float), dx)
    return q


@dataclass(eq=False)
class ConvolutionTensor1D:
    """Precomputed weights for the 1D field evaluation on a (dx, N) grid.

    Attributes
    ----------
    half : (4N+1,) array
        Q_k for k = -2N..2N.
    T : (4N-1,) array
        Full-hat weights T_k = Q_k + Q_{-k}, k = -(2N-1)..(2N-1).
    B_plus, B_minus : (2N+1,) arrays
        Weights of the half hats at nodes +N and -N seen from every node j.
    """

    spec: KernelSpec
    dx: float
    N: int
    half: np.ndarray
    tolerance: float = QUAD_TOL
    _fft_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        N = self.N
        q = self.half
        k = np.arange(-(2 * N - 1), 2 * N)
        self.T = q[k + 2 * N] + q[-k + 2 * N]
        j = np.arange(-N, N + 1)
        self.B_plus = q[(N - j) + 2 * N]
        self.B_minus = q[(j + N) + 2 * N]
        for a in (self.half, self.T, self.B_plus, self.B_minus):
            a.flags.writeable = False

    @property
    def dim(self) -> int:
        return 1

    @property
    def shape(self) -> tuple[int]:
        return (2 * self.N + 1,)

    def entry(self, k: int) -> float:
        return float(self.T[k + 2 * self.N - 1])

    def fft_of_T(self, n_fft: int) -> np.ndarray:
        got = self._fft_cache.get(n_fft)
        if got is None:
            got = np.fft.rfft(self.T, n_fft)
            got.flags.writeable = False
            self._fft_cache[n_fft] = got  # idempotent write
        return got


def precompute_tensor_1d(spec: KernelSpec, dx: float, N: int) -> ConvolutionTensor1D:
    """Build (or fetch from cache) the 1D convolution tensor for ``spec``."""
    if spec.dim != 1:
        raise InvalidArgument("precompute_tensor_1d needs a 1D kernel spec")
    if not dx > 0.0:
        raise InvalidArgument(f"dx must be positive, got {dx!r}")
    if int(N) != N or N < 2:
        raise InvalidArgument(f"N must be an integer >= 2, got {N!r}")
    return _tensor_1d_cached(spec.unit(), float(dx), int(N))


@lru_cache(maxsize=64)
def _tensor_1d_cached(spec, dx, N):
    return ConvolutionTensor1D(spec, dx, N, _half_tensor_1d(spec, dx, 2 * N))


# ----------------------------------------------------------------------------
# 2D quarter-cell integrals


def _duffy_corner(spec: KernelSpec, k: int, l: int, dx: float, dy: float) -> float:
    """Q_{k,l} for (k, l) in {0,1}^2: the singular point is a corner of the cell.

    Local coordinates a = |x - k|, b = |y - l| put the singularity at the
    origin; each of the two triangles of [0,1]^2 is mapped to the unit square
    by the Duffy substitution, whose Jacobian u tames the singularity to an
    integrable one in u alone.
    """
    v, wv = gauss_legendre01(_ORDER_DUFFY_ANGLE)

    def wx(a):
        return 1.0 - a if k == 0 else a

    def wy(b):
        return 1.0 - b if l == 0 else b

    def integrand(u):
        uu = u[:, None]
        # triangle b <= a: a = u, b = u v
        ra = uu * np.sqrt(dx * dx + (v * dy) ** 2)[None, :]
        fa = spec.base(ra) * wx(uu) * wy(uu * v[None, :])
        # triangle a <= b: b = u, a = u v
        rb = uu * np.sqrt((v * dx) ** 2 + dy * dy)[None, :]
        fb = spec.base(rb) * wx(uu * v[None, :]) * wy(uu)
        return u * ((fa + fb) @ wv)

    val = integrate_endpoint_singular(
        integrand, tol=QUAD_TOL, budget=EVAL_BUDGET, cost_per_point=2 * v.size
    )
    return dx * dy * val


def _q2d_gauss(spec, ks, ls, dx, dy, order):
    """Tensor Gauss-Legendre Q_{k,l} on the outer product of offsets ks x ls."""
    x, w = gauss_legendre01(order)
    wx = w * (1.0 - x)
    out = np.zeros((ks.size, ls.size))
    # (l - y) dy for every y node, reused across x nodes
    dyy = ((ls[None, :] - x[:, None]) * dy) ** 2  # (order, nl)
    for p in range(order):
        dxx = (((ks - x[p]) * dx) ** 2)[:, None]  # (nk, 1)
        for q in range(order):
            out += (wx[p] * wx[q]) * spec.base_sq(dxx + dyy[q][None, :])
    return dx * dy * out


def _q2d_entry(spec, k, l, dx, dy):
    if k in (0, 1) and l in (0, 1):
        return _duffy_corner(spec, k, l, dx, dy)
    ks = np.array([float(k)])
    ls = np.array([float(l)])
    return float(_q2d_gauss(spec, ks, ls, dx, dy, _ORDER_2D_NEAR)[0, 0])


def _quarter_tensor_2d(spec: KernelSpec, dx: float, dy: float, kmax: int, lmax: int) -> np.ndarray:
    """Q_{k,l} for k = -kmax..kmax, l = -lmax..lmax."""
    ks = np.arange(-kmax, kmax + 1, dtype=float)
    ls = np.arange(-lmax, lmax + 1, dtype=float)
    q = _q2d_gauss(spec, ks, ls, dx, dy, _ORDER_2D_FAR)
    # higher order where the singular point is within a few cells
    ratio = max(dx / dy, dy / dx)
    near = int(math.ceil(_NEAR_CELLS * ratio))
    k0, k1 = max(-kmax, -near), min(kmax, near + 1)
    l0, l1 = max(-lmax, -near), min(lmax, near + 1)
    q[k0 + kmax:k1 + kmax + 1, l0 + lmax:l1 + lmax + 1] = _q2d_gauss(
        spec, np.arange(k0, k1 + 1, dtype=float), np.arange(l0, l1 + 1, dtype=float),
        dx, dy, _ORDER_2D_NEAR,
    )
    for k in (0, 1):
        for l in (0, 1):
            if abs(k) <= kmax and abs(l) <= lmax:
                q[k + kmax, l + lmax] = _duffy_corner(spec, k, l, dx, dy)
    return q


@dataclass(eq=False)
class ConvolutionTensor2D:
    """Precomputed weights for the 2D field evaluation.

    ``quarter[k + 2Nx, l + 2Ny]`` holds Q_{k,l}.  Derived arrays:

    * ``T``: interior weights over offsets |k| <= 2Nx-1, |l| <= 2Ny-1;
    * ``edge_x_plus/minus[j, b]``: nodes (+-Nx, l) with l interior, target row
      j, offset b = k - l;
    * ``edge_y_plus/minus[a, k]``: nodes (i, +-Ny) with i interior, offset
      a = j - i, target column k;
    * ``corner_pp`` etc.: the four corner nodes seen from every (j, k).
    """

    spec: KernelSpec
    dx: float
    dy: float
    Nx: int
    Ny: int
    quarter: np.ndarray
    tolerance: float = QUAD_TOL
    _fft_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        Nx, Ny = self.Nx, self.Ny
        q = self.quarter
        cx, cy = 2 * Nx, 2 * Ny  # array position of offset 0

        def Q(a, b):
            return q[np.ix_(a + cx, b + cy)]

        a = np.arange(-(2 * Nx - 1), 2 * Nx)
        b = np.arange(-(2 * Ny - 1), 2 * Ny)
        j = np.arange(-Nx, Nx + 1)
        k = np.arange(-Ny, Ny + 1)
        self.T = Q(a, b) + Q(-a, b) + Q(a, -b) + Q(-a, -b)
        self.edge_x_plus = Q(Nx - j, b) + Q(Nx - j, -b)
        self.edge_x_minus = Q(j + Nx, b) + Q(j + Nx, -b)
        self.edge_y_plus = Q(a, Ny - k) + Q(-a, Ny - k)
        self.edge_y_minus = Q(a, k + Ny) + Q(-a, k + Ny)
        self.corner_pp = Q(Nx - j, Ny - k)
        self.corner_pm = Q(Nx - j, k + Ny)
        self.corner_mp = Q(j + Nx, Ny - k)
        self.corner_mm = Q(j + Nx, k + Ny)
        for arr in (self.quarter, self.T, self.edge_x_plus, self.edge_x_minus,
                    self.edge_y_plus, self.edge_y_minus, self.corner_pp,
                    self.corner_pm, self.corner_mp, self.corner_mm):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return 2

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.Nx + 1, 2 * self.Ny + 1)

    def entry(self, k: int, l: int) -> float:
        return float(self.T[k + 2 * self.Nx - 1, l + 2 * self.Ny - 1])

    def cached_fft(self, key, compute):
        got = self._fft_cache.get(key)
        if got is None:
            got = compute()
            got.flags.writeable = False
            self._fft_cache[key] = got
        return got


def precompute_tensor_2d(spec: KernelSpec, dx: float, dy: float, Nx: int, Ny: int) -> ConvolutionTensor2D:
    """Build (or fetch from cache) the 2D convolution tensor for ``spec``."""
    if spec.dim != 2:
        raise InvalidArgument("precompute_tensor_2d needs a 2D kernel spec")
    if not (dx > 0.0 and dy > 0.0):
        raise InvalidArgument("mesh sizes must be positive")
    for n in (Nx, Ny):
        if int(n) != n or n < 2:
            raise InvalidArgument(f"half grid counts must be integers >= 2, got {n!r}")
    return _tensor_2d_cached(spec.unit(), float(dx), float(dy), int(Nx), int(Ny))


@lru_cache(maxsize=8)
def _tensor_2d_cached(spec, dx, dy, Nx, Ny):
    q = _quarter_tensor_2d(spec, dx, dy, 2 * Nx, 2 * Ny)
    return ConvolutionTensor2D(spec, dx, dy, Nx, Ny, q)


def singular_cell_integral(spec: KernelSpec, offset, dx: float, dy: Optional[float] = None,
                           method: str = "auto") -> float:
    """Full-hat tensor entry for an offset touching the singularity.

    ``offset`` is an int (1D) or an (k, l) pair (2D) with every component in
    {-1, 0, 1}.  ``method="adaptive"`` forces dyadic refinement even where a
    closed form exists (used to cross-check the closed forms).
    """
    if spec.dim == 1:
        k = int(offset)
        if abs(k) > 1:
            raise InvalidArgument("singular_cell_integral needs |offset| <= 1")
        total = 0.0
        for kk in (k, -k):
            if kk in (0, 1) and spec.family != "exponential":
                total += _q1d_singular(spec, kk, dx, method)
            else:
                total += float(_q1d_regular(spec, np.array([float(kk)]), dx)[0])
        return total
    if dy is None:
        dy = dx
    k, l = (int(o) for o in offset)
    if abs(k) > 1 or abs(l) > 1:
        raise InvalidArgument("singular_cell_integral needs |offset| <= 1 componentwise")
    return sum(_q2d_entry(spec, sk * k, sl * l, dx, dy) for sk in (1, -1) for sl in (1, -1))


# ----------------------------------------------------------------------------
# tensor cache files


def _meta(tensor) -> dict:
    s = tensor.spec
    meta = {
        "family": s.family, "alpha": s.alpha, "eps": s.eps, "dim": s.dim,
        "eta_excluded": True, "tolerance": tensor.tolerance,
    }
    if tensor.dim == 1:
        meta.update(dx=tensor.dx, N=tensor.N)
    else:
        meta.update(dx=tensor.dx, dy=tensor.dy, Nx=tensor.Nx, Ny=tensor.Ny)
    return meta


def save_tensor(path, tensor) -> Path:
    """Write a tensor cache file.

    1D tensors go to a plain-text table ``k Q_k T_k`` (T blank where k is
    outside the interior range) preceded by ``#``-prefixed JSON metadata; 2D
    tensors go to a ``.npz`` archive holding the quarter-cell array.
    """
    path = Path(path)
    meta = _meta(tensor)
    if tensor.dim == 1:
        N = tensor.N
        lines = ["# " + json.dumps(meta, sort_keys=True), "# k Q_k T_k"]
        for k in range(-2 * N, 2 * N + 1):
            q = repr(float(tensor.half[k + 2 * N]))
            t = repr(tensor.entry(k)) if abs(k) <= 2 * N - 1 else ""
            lines.append(f"{k} {q} {t}".rstrip())
        path.write_text("\n".join(lines) + "\n")
    else:
        with open(path, "wb") as fh:
            np.savez(fh, quarter=tensor.quarter, meta=json.dumps(meta, sort_keys=True))
    return path


def load_tensor(path):
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            quarter = np.array(data["quarter"])
        spec = KernelSpec(meta["family"], meta["alpha"], meta["eps"], dim=2)
        return ConvolutionTensor2D(spec, meta["dx"], meta["dy"], meta["Nx"], meta["Ny"], quarter, meta["tolerance"])
    text = path.read_text().splitlines()
    meta = json.loads(text[0][2:])
    rows = [ln.split() for ln in text if ln and not ln.startswith("#")]
    half = np.array([float(r[1]) for r in rows])
    spec = KernelSpec(meta["family"], meta["alpha"], meta["eps"], dim=1)
    return ConvolutionTensor1D(spec, meta["dx"], meta["N"], half, meta["tolerance"])
