"""Plain-text run outputs.

All floats are written with 17 significant digits so files round-trip to
the same doubles.  Nothing time-dependent (wall clock, host name) goes into
the CSV files, so identical runs produce byte-identical output.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument
from ..field import SpeciesState
from ..grid import Grid1D, Grid2D, build_grid_1d, build_grid_2d

__all__ = [
    "fmt",
    "write_diagnostics",
    "write_snapshot",
    "read_snapshot",
    "write_snapshot_index",
    "write_convergence_table",
    "read_table",
    "write_summary",
]


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_diagnostics(records, path, n_species: int):
    header = (["t", "E", "D"] + [f"mass_{m + 1}" for m in range(n_species)]
              + [f"linf_{m + 1}" for m in range(n_species)] + ["clamped", "iters"])
    rows = ([r.t, r.energy, r.dissipation, *r.masses, *r.linf, r.clamped, r.iterations] for r in records)
    return _write_rows(path, header, rows)


def write_snapshot(state: SpeciesState, path):
    """Columns ``x[,y],c_1..c_M``; 2D nodes are listed with y varying fastest."""
    g = state.grid
    names = [f"c_{m + 1}" for m in range(state.M)]
    if isinstance(g, Grid1D):
        cols = [g.x] + list(state.c)
        header = ["x"] + names
    else:
        X, Y = g.mesh()
        cols = [X.ravel(), Y.ravel()] + [c.ravel() for c in state.c]
        header = ["x", "y"] + names
    return _write_rows(path, header, zip(*cols))


def read_snapshot(path, valences=None, t: float = 0.0) -> SpeciesState:
    """Rebuild a :class:`SpeciesState` from :func:`write_snapshot` output."""
    header, data = read_table(path)
    if header[0] != "x":
        raise InvalidArgument(f"{path}: not a snapshot file")
    two_d = len(header) > 1 and header[1] == "y"
    ncoord = 2 if two_d else 1
    M = len(header) - ncoord
    valences = tuple(valences) if valences is not None else (0,) * M
    if len(valences) != M:
        raise InvalidArgument(f"{path}: {M} species columns but {len(valences)} valences")
    if not two_d:
        x = data[:, 0]
        grid = build_grid_1d(float(x[-1]), (len(x) - 1) // 2)
        c = data[:, 1:].T
    else:
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        grid = build_grid_2d(float(xs[-1]), float(ys[-1]), (len(xs) - 1) // 2, (len(ys) - 1) // 2)
        c = data[:, 2:].T.reshape((M,) + grid.shape)
    return SpeciesState(grid, valences, c, t)


def write_snapshot_index(entries, path):
    """``index,t,file`` rows for the snapshots of one run."""
    return _write_rows(path, ["index", "t", "file"], ([i, t, f] for i, t, f in entries))


def write_convergence_table(h, errors, path):
    rows = ([hh, *e] for hh, e in zip(h, errors))
    return _write_rows(path, ["h", "err_linf", "err_l1", "err_l2"], rows)


def read_table(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_summary(summary: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
