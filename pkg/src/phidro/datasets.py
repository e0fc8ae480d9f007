"""Synthetic classification data and the CSV dataset format.

CSV format: one row per sample, features first, integer class label in the
last column. Lines starting with ``#`` are comments; an optional header row
(non-numeric first field) is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = ["Dataset", "gaussian_blobs", "two_moons", "random_labels", "load_csv", "save_csv"]


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y).astype(int).ravel()
        if X.shape[0] != y.shape[0]:
            raise ParameterError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if X.shape[0] == 0:
            raise ParameterError("empty dataset")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1


def as_dataset(data) -> Dataset:
    if isinstance(data, Dataset):
        return data
    X, y = data
    return Dataset(X, y)


def gaussian_blobs(n, means, stds, rng) -> Dataset:
    """``n`` points split evenly (round-robin) over Gaussian blobs, label = blob index."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    stds = np.broadcast_to(np.asarray(stds, dtype=float), means.shape)
    y = np.arange(n) % means.shape[0]
    X = means[y] + stds[y] * rng.standard_normal((n, means.shape[1]))
    return Dataset(X, y)


def two_moons(n, noise, rng) -> Dataset:
    y = np.arange(n) % 2
    t = rng.uniform(0.0, np.pi, n)
    X = np.column_stack([np.cos(t), np.sin(t)])
    X[y == 1] = np.column_stack([1.0 - np.cos(t[y == 1]), 0.5 - np.sin(t[y == 1])])
    X += noise * rng.standard_normal(X.shape)
    return Dataset(X, y)


def random_labels(n, dim, rng) -> Dataset:
    return Dataset(rng.standard_normal((n, dim)), rng.integers(0, 2, n))


def load_csv(path) -> Dataset:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                if rows:
                    raise ParameterError(f"non-numeric data row in {path}: {line!r}")
                continue  # header
    if not rows:
        raise ParameterError(f"no data rows in {path}")
    arr = np.asarray(rows)
    return Dataset(arr[:, :-1], arr[:, -1].astype(int))


def save_csv(data: Dataset, path) -> None:
    header = ",".join([f"x{i}" for i in range(data.dim)] + ["label"])
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for x, y in zip(data.X, data.y):
            fh.write(",".join(f"{v:.17g}" for v in x) + f",{int(y)}\n")
