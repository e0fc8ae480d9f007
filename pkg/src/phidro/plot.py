"""Quick CSV -> PNG plotting for files written by the ``phidro`` command line.

Usage::

    python3 -m phidro.plot density.csv density.png            # first column vs the rest
    python3 -m phidro.plot report.csv report.png --x rho --y rel_err --logx --logy

Needs matplotlib (``pip install .[plot]``). Not part of the tested numerics.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .output import read_csv_table


def load_columns(path) -> tuple[dict, dict]:
    """``(meta, {column: float array})``; non-numeric cells become NaN."""
    meta, columns, rows = read_csv_table(path)

    def num(cell):
        try:
            return float(cell) if cell != "" else np.nan
        except ValueError:
            return np.nan

    data = {c: np.array([num(r[i]) for r in rows], dtype=float) for i, c in enumerate(columns)}
    return meta, data


def plot_csv(path, out, x=None, y=None, logx=False, logy=False, title=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    meta, data = load_columns(path)
    names = list(data)
    if not names:
        raise ValueError(f"{path}: no columns")
    x = x or names[0]
    ys = y or [c for c in names if c != x]
    for c in [x, *ys]:
        if c not in data:
            raise ValueError(f"{path}: no column {c!r} (have {', '.join(names)})")
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in ys:
        ax.plot(data[x], data[c], label=c, lw=1)
    ax.set_xlabel(x)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    if len(ys) > 1:
        ax.legend()
    ax.set_title(title or meta.get("command", str(path)))
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python3 -m phidro.plot", description="plot a phidro CSV file")
    p.add_argument("csv")
    p.add_argument("png")
    p.add_argument("--x", default=None, help="x column (default: first)")
    p.add_argument("--y", action="append", default=None, help="y column, repeatable (default: all others)")
    p.add_argument("--logx", action="store_true")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default=None)
    a = p.parse_args(argv)
    try:
        plot_csv(a.csv, a.png, a.x, a.y, a.logx, a.logy, a.title)
    except (OSError, ValueError) as exc:
        print(f"plot: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
