"""Independent reference computations used by several test modules."""

import numpy as np


def quadratic_exact(f, eta):
    """Exact solution of the quadratic-penalty problem by sorting.

    mu solves mean((f - mu)_+) = eta, a piecewise-linear equation; gamma_i =
    (f_i - mu)_+ / (m eta).
    """
    f = np.asarray(f, dtype=float)
    m = f.size
    fs = np.sort(f)[::-1]
    for k in range(1, m + 1):
        # top-k active: sum_{i<k}(fs_i - mu) = m eta
        mu = (fs[:k].sum() - m * eta) / k
        nxt = fs[k] if k < m else -np.inf
        if mu >= nxt and mu <= fs[k - 1]:
            break
    gamma = np.maximum(f - mu, 0.0) / (m * eta)
    value = np.sum(gamma * f) - eta * np.mean(0.5 * ((m * gamma) ** 2 - 1.0))
    return gamma, mu, value


def softmax_solution(f, eta):
    f = np.asarray(f, dtype=float)
    w = np.exp((f - f.max()) / eta)
    gamma = w / w.sum()
    value = f.max() + eta * np.log(np.mean(w))
    return gamma, value


def simplex_grid(m, step):
    """All points of the simplex in R^m whose coordinates are multiples of ``step``."""
    n = int(round(1 / step))
    if m == 1:
        return np.ones((1, 1))
    idx = np.indices((n + 1,) * (m - 1)).reshape(m - 1, -1).T
    idx = idx[idx.sum(axis=1) <= n]
    last = n - idx.sum(axis=1, keepdims=True)
    return np.hstack([idx, last]).astype(float) / n


def grid_min(fun, lo, hi, n=200001):
    xs = np.linspace(lo, hi, n)
    vals = np.array([fun(x) for x in xs]) if n <= 5000 else fun(xs)
    i = int(np.argmin(vals))
    return xs[i], vals[i]
