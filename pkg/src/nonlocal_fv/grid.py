"""Uniform vertex-centred grids on [-L, L] and [-Lx, Lx] x [-Ly, Ly].

Nodes are indexed j = -N..N and stored in arrays at position j + N.  Every
node owns a control volume of width dx, except the two boundary nodes which
own the half cells [x_{-N}, x_{-N+1/2}] and [x_{N-1/2}, x_N].
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument

__all__ = ["Grid1D", "Grid2D", "build_grid_1d", "build_grid_2d", "cell_volume"]


def _check_axis(L, N, name_L="L", name_N="N"):
    if not np.isfinite(L) or L <= 0:
        raise InvalidArgument(f"{name_L} must be positive, got {L!r}")
    if int(N) != N or N < 2:
        raise InvalidArgument(f"{name_N} must be an integer >= 2, got {N!r}")


def _axis_nodes(L, N):
    dx = L / N
    x = -L + np.arange(2 * N + 1) * dx
    # pin the endpoints and the midpoint so the grid is exactly symmetric
    x[0], x[N], x[-1] = -L, 0.0, L
    x[N + 1:] = -x[N - 1::-1]
    return x


def _axis_weights(N):
    w = np.ones(2 * N + 1)
    w[0] = w[-1] = 0.5
    return w


@dataclass(frozen=True)
class Grid1D:
    L: float
    N: int

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def dim(self) -> int:
        return 1

    @property
    def shape(self) -> tuple[int]:
        return (2 * self.N + 1,)

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @cached_property
    def x(self) -> np.ndarray:
        x = _axis_nodes(self.L, self.N)
        x.flags.writeable = False
        return x

    @cached_property
    def volumes(self) -> np.ndarray:
        v = self.dx * _axis_weights(self.N)
        v.flags.writeable = False
        return v

    @property
    def measure(self) -> float:
        return 2.0 * self.L

    def index(self, j: int) -> int:
        """Array position of node ``j`` (``-N <= j <= N``)."""
        if not -self.N <= j <= self.N:
            raise IndexError(f"node index {j} outside [-{self.N}, {self.N}]")
        return j + self.N


@dataclass(frozen=True)
class Grid2D:
    Lx: float
    Ly: float
    Nx: int
    Ny: int

    @property
    def dx(self) -> float:
        return self.Lx / self.Nx

    @property
    def dy(self) -> float:
        return self.Ly / self.Ny

    @property
    def dim(self) -> int:
        return 2

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.Nx + 1, 2 * self.Ny + 1)

    @property
    def size(self) -> int:
        return (2 * self.Nx + 1) * (2 * self.Ny + 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = _axis_nodes(self.Lx, self.Nx)
        x.flags.writeable = False
        return x

    @cached_property
    def y(self) -> np.ndarray:
        y = _axis_nodes(self.Ly, self.Ny)
        y.flags.writeable = False
        return y

    @cached_property
    def volumes(self) -> np.ndarray:
        v = self.dx * self.dy * np.outer(_axis_weights(self.Nx), _axis_weights(self.Ny))
        v.flags.writeable = False
        return v

    @property
    def measure(self) -> float:
        return 4.0 * self.Lx * self.Ly

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays of shape ``self.shape`` (first axis is x)."""
        return np.meshgrid(self.x, self.y, indexing="ij")

    def index(self, j: int, k: int) -> tuple[int, int]:
        if not (-self.Nx <= j <= self.Nx and -self.Ny <= k <= self.Ny):
            raise IndexError(f"node index ({j}, {k}) outside the grid")
        return j + self.Nx, k + self.Ny


def build_grid_1d(L: float, N: int) -> Grid1D:
    """Uniform grid x_j = -L + (j + N) dx, j = -N..N, with dx = L/N."""
    _check_axis(L, N)
    return Grid1D(float(L), int(N))


def build_grid_2d(Lx: float, Ly: float, Nx: int, Ny: int) -> Grid2D:
    _check_axis(Lx, Nx, "Lx", "Nx")
    _check_axis(Ly, Ny, "Ly", "Ny")
    return Grid2D(float(Lx), float(Ly), int(Nx), int(Ny))


def cell_volume(grid, index) -> float:
    """Control-volume measure of node ``index`` (an int in 1D, a pair in 2D).

    Interior nodes own dx (dx*dy); every boundary direction halves it.
    """
    if isinstance(grid, Grid1D):
        if isinstance(index, tuple):
            raise InvalidArgument("1D grid takes a scalar node index")
        return float(grid.volumes[grid.index(index)])
    if isinstance(grid, Grid2D):
        j, k = index
        return float(grid.volumes[grid.index(j, k)])
    raise InvalidArgument(f"unsupported grid type {type(grid).__name__}")
