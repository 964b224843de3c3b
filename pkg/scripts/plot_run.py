"""Quick-look plots from the CSV files written by ``nonlocal-fv``.

    python scripts/plot_run.py out/equilibrium_1d/eq          # diagnostics + snapshots
    python scripts/plot_run.py out/conv_space_1d/conv --kind convergence

The positional argument is ``<output dir>/<prefix>``.  Needs matplotlib.
"""
import argparse
import csv
import glob
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def load(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def plot_diagnostics(stem, ax_e, ax_m):
    header, d = load(f"{stem}_diagnostics.csv")
    t = d[:, 0]
    ax_e.plot(t, d[:, header.index("E")])
    ax_e.set_xlabel("t")
    ax_e.set_ylabel("discrete energy")
    for i, name in enumerate(header):
        if name.startswith("linf_"):
            ax_m.plot(t, d[:, i], label=name)
    ax_m.set_xlabel("t")
    ax_m.legend()


def plot_last_snapshot(stem, ax):
    with open(f"{stem}_snapshots.csv", newline="") as fh:
        last = list(csv.DictReader(fh))[-1]
    directory = os.path.dirname(stem) or "."
    cols, d = load(os.path.join(directory, last["file"]))
    if cols[1] == "y":
        x, y = np.unique(d[:, 0]), np.unique(d[:, 1])
        c = d[:, 2:].sum(axis=1).reshape(len(x), len(y))
        im = ax.pcolormesh(x, y, c.T, shading="auto")
        plt.colorbar(im, ax=ax)
        ax.set_aspect("equal")
    else:
        for i in range(1, len(cols)):
            ax.plot(d[:, 0], d[:, i], label=cols[i])
        ax.legend()
    ax.set_title(f"t = {float(last['t']):g}")


def plot_convergence(stem, ax):
    files = sorted(glob.glob(f"{stem}_convergence.csv")) or sorted(glob.glob(f"{stem}_eps*.csv"))
    for f in files:
        header, d = load(f)
        for i in range(1, d.shape[1]):
            ax.loglog(d[:, 0], d[:, i], "o-", label=f"{f.rsplit('_', 1)[-1][:-4]} {header[i]}")
    h = d[:, 0]
    ax.loglog(h, d[-1, 1] * (h / h[-1]) ** 2, "k--", label="slope 2")
    ax.set_xlabel("h")
    ax.legend(fontsize="small")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("stem", help="<output dir>/<prefix>")
    p.add_argument("--kind", choices=["run", "convergence"], default="run")
    p.add_argument("-o", "--output", default=None, help="image file (default <stem>.png)")
    args = p.parse_args(argv)
    if args.kind == "run":
        fig, axes = plt.subplots(1, 3, figsize=(14, 4))
        plot_diagnostics(args.stem, axes[0], axes[1])
        plot_last_snapshot(args.stem, axes[2])
    else:
        fig, ax = plt.subplots(figsize=(6, 5))
        plot_convergence(args.stem, ax)
    fig.tight_layout()
    out = args.output or f"{args.stem}.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
