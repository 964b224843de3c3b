"""Discrete convolution of nodal densities with precomputed tensors.

``conv_fast`` evaluates

    phi_j = sum_{|i| < N} c_i T_{j-i} + c_N B+_j + c_{-N} B-_j

(and its 2D analogue with edge and corner terms) through zero-padded real
FFTs; ``conv_direct`` is the literal O(N^2) sum and serves as the oracle.
Both return the unscaled field: multiply by ``spec.strength`` (or use
:class:`KernelOperator`) to get eta and sign in.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .errors import InvalidArgument
from .grid import Grid1D, Grid2D
from .kernels import (ConvolutionTensor1D, ConvolutionTensor2D, KernelSpec,
                      precompute_tensor_1d, precompute_tensor_2d)

__all__ = ["conv_fast", "conv_direct", "conv_pointwise_regularized", "KernelOperator"]


def _check_density(tensor, density):
    density = np.asarray(density, dtype=float)
    if density.shape != tensor.shape:
        raise InvalidArgument(f"density shape {density.shape} does not match tensor grid {tensor.shape}")
    return density


def _pad_len(n: int) -> int:
    # n = 2N+1 nodes; 4N+1 >= 4N-1 is enough to stop wrap-around into the kept slice
    return sfft.next_fast_len(2 * n - 1, real=True)


def conv_fast(tensor, density, workers: Optional[int] = None) -> np.ndarray:
    """FFT evaluation of the tensor convolution; same result as :func:`conv_direct`."""
    density = _check_density(tensor, density)
    if isinstance(tensor, ConvolutionTensor1D):
        return _conv_fast_1d(tensor, density, workers)
    if isinstance(tensor, ConvolutionTensor2D):
        return _conv_fast_2d(tensor, density, workers)
    raise InvalidArgument(f"unsupported tensor type {type(tensor).__name__}")


def _conv_fast_1d(t: ConvolutionTensor1D, c, workers):
    N = t.N
    P = _pad_len(2 * N + 1)
    z = sfft.irfft(sfft.rfft(c[1:-1], P, workers=workers) * t.fft_of_T(P), P, workers=workers)
    out = z[2 * N - 2:4 * N - 1].copy()
    out += c[-1] * t.B_plus + c[0] * t.B_minus
    return out


def _conv_fast_2d(t: ConvolutionTensor2D, c, workers):
    Nx, Ny = t.Nx, t.Ny
    Px, Py = _pad_len(2 * Nx + 1), _pad_len(2 * Ny + 1)
    sx = slice(2 * Nx - 2, 4 * Nx - 1)
    sy = slice(2 * Ny - 2, 4 * Ny - 1)

    That = t.cached_fft(("T", Px, Py), lambda: sfft.rfft2(t.T, (Px, Py), workers=workers))
    z = sfft.irfft2(sfft.rfft2(c[1:-1, 1:-1], (Px, Py), workers=workers) * That, (Px, Py), workers=workers)
    out = z[sx, sy].copy()

    # x-edges (+-Nx, l): 1D convolutions along y, one per target row
    for key, row, E in (("exp", c[-1, 1:-1], t.edge_x_plus), ("exm", c[0, 1:-1], t.edge_x_minus)):
        Ehat = t.cached_fft((key, Py), lambda E=E: sfft.rfft(E, Py, axis=1, workers=workers))
        r = sfft.rfft(row, Py, workers=workers)
        out += sfft.irfft(Ehat * r[None, :], Py, axis=1, workers=workers)[:, sy]
    # y-edges (i, +-Ny): 1D convolutions along x, one per target column
    for key, col, E in (("eyp", c[1:-1, -1], t.edge_y_plus), ("eym", c[1:-1, 0], t.edge_y_minus)):
        Ehat = t.cached_fft((key, Px), lambda E=E: sfft.rfft(E, Px, axis=0, workers=workers))
        r = sfft.rfft(col, Px, workers=workers)
        out += sfft.irfft(Ehat * r[:, None], Px, axis=0, workers=workers)[sx, :]

    out += (c[-1, -1] * t.corner_pp + c[-1, 0] * t.corner_pm
            + c[0, -1] * t.corner_mp + c[0, 0] * t.corner_mm)
    return out


def conv_direct(tensor, density) -> np.ndarray:
    """Literal O(N^2) evaluation, built from the half-hat integrals Q.

    Each source node contributes Q_{s(j-i)} per half hat it owns, with s = +1
    for the half on its right and s = -1 for the half on its left.  This
    deliberately bypasses the derived T and boundary arrays used by
    :func:`conv_fast`.
    """
    density = _check_density(tensor, density)
    if isinstance(tensor, ConvolutionTensor1D):
        N = tensor.N
        q = tensor.half
        i = np.arange(-N, N + 1)
        right = i < N  # source owns a right half hat
        left = i > -N  # source owns a left half hat
        out = np.zeros(2 * N + 1)
        for j in range(-N, N + 1):
            d = j - i
            w = np.where(right, q[d + 2 * N], 0.0) + np.where(left, q[-d + 2 * N], 0.0)
            out[j + N] = np.dot(w, density)
        return out
    if isinstance(tensor, ConvolutionTensor2D):
        Nx, Ny = tensor.Nx, tensor.Ny
        q = tensor.quarter
        cx, cy = 2 * Nx, 2 * Ny
        dj = np.arange(-Nx, Nx + 1)
        dk = np.arange(-Ny, Ny + 1)
        out = np.zeros(tensor.shape)
        for i in range(-Nx, Nx + 1):
            sx = [s for s, ok in ((1, i < Nx), (-1, i > -Nx)) if ok]
            for l in range(-Ny, Ny + 1):
                c = density[i + Nx, l + Ny]
                if c == 0.0:
                    continue
                sy = [s for s, ok in ((1, l < Ny), (-1, l > -Ny)) if ok]
                w = np.zeros(tensor.shape)
                for a in sx:
                    for b in sy:
                        w += q[np.ix_(a * (dj - i) + cx, b * (dk - l) + cy)]
                out += c * w
        return out
    raise InvalidArgument(f"unsupported tensor type {type(tensor).__name__}")


def _pointwise_samples(spec: KernelSpec, h: float, N: int) -> np.ndarray:
    k = np.arange(-2 * N, 2 * N + 1)
    return spec.base(np.abs(k) * h)


def conv_pointwise_regularized(spec: KernelSpec, density, grid, workers: Optional[int] = None) -> np.ndarray:
    """Point-sampled convolution ``vol_h * sum_i U(x_j - x_i) c_i`` for non-singular kernels.

    Every node gets the full weight dx (dx*dy in 2D), boundary nodes included;
    the result is scaled by ``spec.strength``.
    """
    if spec.singular:
        raise InvalidArgument(f"{spec.family} kernel is singular; pointwise sampling needs a regularised kernel")
    density = np.asarray(density, dtype=float)
    if density.shape != grid.shape:
        raise InvalidArgument(f"density shape {density.shape} does not match grid {grid.shape}")
    if isinstance(grid, Grid1D):
        if spec.dim != 1:
            raise InvalidArgument("kernel dimension does not match grid")
        N = grid.N
        P = _pad_len(2 * N + 1)
        w = _pointwise_samples(spec, grid.dx, N)
        z = sfft.irfft(sfft.rfft(density, P, workers=workers) * sfft.rfft(w, P, workers=workers), P, workers=workers)
        return spec.strength * grid.dx * z[2 * N:4 * N + 1]
    if isinstance(grid, Grid2D):
        if spec.dim != 2:
            raise InvalidArgument("kernel dimension does not match grid")
        Nx, Ny = grid.Nx, grid.Ny
        kx = np.arange(-2 * Nx, 2 * Nx + 1) * grid.dx
        ky = np.arange(-2 * Ny, 2 * Ny + 1) * grid.dy
        w = spec.base(np.hypot(kx[:, None], ky[None, :]))
        shape = (_pad_len(2 * Nx + 1), _pad_len(2 * Ny + 1))
        z = sfft.irfft2(sfft.rfft2(density, shape, workers=workers) * sfft.rfft2(w, shape, workers=workers),
                        shape, workers=workers)
        return spec.strength * grid.dx * grid.dy * z[2 * Nx:4 * Nx + 1, 2 * Ny:4 * Ny + 1]
    raise InvalidArgument(f"unsupported grid type {type(grid).__name__}")


@dataclass
class KernelOperator:
    """A kernel bound to a grid: ``op(density)`` returns the scaled field.

    ``mode="tensor"`` uses the hat-integrated tensor (the scheme's default);
    ``mode="pointwise"`` samples the kernel at node offsets and is only
    allowed for non-singular kernels.
    """

    spec: KernelSpec
    grid: object
    mode: str = "tensor"
    workers: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("tensor", "pointwise"):
            raise InvalidArgument(f"unknown convolution mode {self.mode!r}")
        if self.spec.dim != self.grid.dim:
            raise InvalidArgument(f"{self.spec.dim}D kernel on a {self.grid.dim}D grid")
        if self.mode == "pointwise" and self.spec.singular:
            raise InvalidArgument(f"{self.spec.family} kernel is singular; pointwise mode needs a regularised kernel")
        self.tensor = None
        if self.mode == "tensor":
            g = self.grid
            if g.dim == 1:
                self.tensor = precompute_tensor_1d(self.spec, g.dx, g.N)
            else:
                self.tensor = precompute_tensor_2d(self.spec, g.dx, g.dy, g.Nx, g.Ny)

    def __call__(self, density) -> np.ndarray:
        if self.spec.strength == 0.0:
            return np.zeros(self.grid.shape)
        if self.mode == "pointwise":
            return conv_pointwise_regularized(self.spec, density, self.grid, self.workers)
        return self.spec.strength * conv_fast(self.tensor, density, self.workers)
