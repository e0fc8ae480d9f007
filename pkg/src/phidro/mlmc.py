"""Stochastic gradient estimators of the level-``L`` approximation objective.

A draw picks a data point ``z`` and ``2**l`` i.i.d. uniform perturbations
``z'_i`` in the ball around it (a *sample tree*), solves the finite-support
inner problem on the losses ``f_theta(z'_i)`` and returns the weighted
parameter gradient ``sum_i gamma_i grad f_theta(z'_i)``.

* SG: average of ``n_outer`` draws at the fixed level ``L`` (cost ``2**L`` each).
* RT-MLMC: each draw samples a level ``l`` with ``P(l) = 2**-l / (2 - 2**-L)``
  and returns ``G^l / P(l)`` where ``G^l`` is the antithetic difference
  ``g(all) - g(first half)/2 - g(second half)/2`` on the *same* children
  (``G^0 = g^0``). Both estimators have the same expectation.

Every outer draw uses its own generator ``default_rng([base, i])`` with
``base`` taken once from the caller's generator, so results do not depend on
evaluation order or batching.

The smoothness and gradient-growth constants that appear in variance/cost
bounds for these estimators are theoretical; nothing here depends on them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datasets import as_dataset
from .divergence import DivergenceSpec, make_divergence
from .errors import ParameterError
from .inner import batch_weights

__all__ = [
    "Norm",
    "Scheme",
    "BallSampler",
    "SampleTree",
    "EstimatorConfig",
    "GradientEstimate",
    "level_probabilities",
    "sample_tree",
    "grad_hat_R",
    "level_term",
    "entropic_level_term",
    "estimator_terms",
    "fixed_level_terms",
    "sg_estimator",
    "rt_mlmc_estimator",
    "estimate",
]

CHUNK_POINTS = 1 << 16  # perturbed points evaluated per model call


class Norm(str, enum.Enum):
    L2 = "l2"
    LINF = "linf"


class Scheme(str, enum.Enum):
    SG = "sg"
    RTMLMC = "rtmlmc"


@dataclass(frozen=True)
class BallSampler:
    """Uniform sampler on the ``rho``-ball (L2 or Linf) in ``dim`` dimensions."""

    norm: Norm
    rho: float
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(str(getattr(self.norm, "value", self.norm)).lower()))
        if not (self.rho > 0 and np.isfinite(self.rho)):
            raise ParameterError(f"rho must be positive, got {self.rho!r}")
        if self.dim < 1:
            raise ParameterError(f"dim must be >= 1, got {self.dim!r}")

    def sample(self, rng, n: int) -> np.ndarray:
        """``n`` offsets (shape ``(n, dim)``) uniform on the centred ball."""
        if self.norm is Norm.LINF:
            return rng.uniform(-self.rho, self.rho, (n, self.dim))
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.rho * rng.random(n) ** (1.0 / self.dim)
        return g * r[:, None]

    def norm_of(self, offsets) -> np.ndarray:
        offsets = np.atleast_2d(offsets)
        if self.norm is Norm.LINF:
            return np.abs(offsets).max(axis=1)
        return np.linalg.norm(offsets, axis=1)

    def contains(self, offsets, tol: float = 1e-12) -> bool:
        return bool(np.all(self.norm_of(offsets) <= self.rho * (1 + tol)))


@dataclass(frozen=True, eq=False)
class SampleTree:
    root: np.ndarray
    label: int
    children: np.ndarray
    level: int

    def __post_init__(self):
        if self.children.shape[0] != 2**self.level:
            raise ParameterError("a level-l tree has exactly 2**l children")


@dataclass(frozen=True)
class EstimatorConfig:
    L: int = 5
    n_outer: int = 1
    inner_eps: float = 1e-8
    scheme: Scheme = Scheme.RTMLMC
    entropic_fast_path: bool = True
    eta: float = 1.0
    divergence: DivergenceSpec = field(default_factory=lambda: make_divergence("kl"))

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(str(getattr(self.scheme, "value", self.scheme)).lower()))
        if self.L < 0:
            raise ParameterError(f"L must be >= 0, got {self.L}")
        if self.n_outer < 1:
            raise ParameterError(f"n_outer must be >= 1, got {self.n_outer}")
        if not self.inner_eps > 0:
            raise ParameterError(f"inner_eps must be positive, got {self.inner_eps}")
        if not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    vector: np.ndarray
    samples_drawn: int
    inner_queries: int
    levels_used: tuple
    terms: Optional[np.ndarray] = None  # per-draw terms, shape (n_outer, p)

    def stderr(self) -> np.ndarray:
        if self.terms is None or len(self.terms) < 2:
            return np.full_like(self.vector, np.nan)
        return self.terms.std(axis=0, ddof=1) / np.sqrt(len(self.terms))


def level_probabilities(L: int) -> np.ndarray:
    p = 2.0 ** -np.arange(L + 1)
    return p / p.sum()


def sample_tree(sampler: BallSampler, data, level: int, rng) -> SampleTree:
    """Draw a root uniformly from ``data`` and ``2**level`` perturbed children."""
    if level < 0:
        raise ParameterError(f"level must be >= 0, got {level}")
    data = as_dataset(data)
    i = int(rng.integers(len(data)))
    root = data.X[i]
    return SampleTree(root, int(data.y[i]), root + sampler.sample(rng, 2**level), level)


def _eval(model, theta, X, y):
    """Losses (k, n) and gradients (k, n, p) for children X (k, n, d), labels y (k,)."""
    k, n, d = X.shape
    flatX = X.reshape(k * n, d)
    flaty = np.repeat(y, n)
    f = model.loss(theta, flatX, flaty).reshape(k, n)
    G = model.grad_theta(theta, flatX, flaty).reshape(k, n, -1)
    return f, G


def _weighted(f, G, eta, div, eps, fast):
    if f.shape[1] == 1:
        return G[:, 0, :]
    w = batch_weights(f, eta, div, eps, fast_path=fast)
    return np.einsum("kn,knp->kp", w, G)


def _terms_from_eval(f, G, level, eta, div, eps, fast):
    full = _weighted(f, G, eta, div, eps, fast)
    if level == 0:
        return full
    h = f.shape[1] // 2
    a = _weighted(f[:, :h], G[:, :h], eta, div, eps, fast)
    b = _weighted(f[:, h:], G[:, h:], eta, div, eps, fast)
    return full - 0.5 * (a + b)


def grad_hat_R(model, theta, points, label, eta, divergence, inner_eps=1e-8, fast_path=True):
    """Inner-solution-weighted parameter gradient over the perturbed ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ParameterError("grad_hat_R needs at least one point")
    f, G = _eval(model, theta, points[None], np.array([label]))
    return _weighted(f, G, eta, divergence, inner_eps, fast_path)[0]


def level_term(model, theta, tree: SampleTree, eta, divergence, inner_eps=1e-8, fast_path=True):
    """``G^l`` on a single tree (``g^0`` at level 0)."""
    f, G = _eval(model, theta, tree.children[None], np.array([tree.label]))
    return _terms_from_eval(f, G, tree.level, eta, divergence, inner_eps, fast_path)[0]


def _window_softmax_grad(f, G, eta):
    # grad of U = eta * log mean exp(f / eta) over the window
    z = (f - f.max(axis=-1, keepdims=True)) / eta
    w = np.exp(z)
    w /= w.sum(axis=-1, keepdims=True)
    return np.einsum("...n,...np->...p", w, G)


def entropic_level_term(model, theta, tree: SampleTree, eta):
    """``grad U_{1:2^l} - grad U_{1:2^{l-1}}/2 - grad U_{2^{l-1}+1:2^l}/2`` for KL."""
    f, G = _eval(model, theta, tree.children[None], np.array([tree.label]))
    f, G = f[0], G[0]
    full = _window_softmax_grad(f, G, eta)
    if tree.level == 0:
        return full
    h = f.size // 2
    return full - 0.5 * (_window_softmax_grad(f[:h], G[:h], eta) + _window_softmax_grad(f[h:], G[h:], eta))


def _draw_plan(config: EstimatorConfig, sampler, n_data, base, n_draws):
    """Per-draw root index, level, and child offsets from independent streams."""
    cdf = np.cumsum(level_probabilities(config.L))
    roots = np.empty(n_draws, dtype=np.int64)
    levels = np.empty(n_draws, dtype=np.int64)
    offsets = []
    for i in range(n_draws):
        g = np.random.default_rng([base, i])
        roots[i] = g.integers(n_data)
        if config.scheme is Scheme.SG:
            lvl = config.L
        else:
            lvl = min(int(np.searchsorted(cdf, g.random(), side="right")), config.L)
        levels[i] = lvl
        offsets.append(sampler.sample(g, 2**lvl))
    return roots, levels, offsets


def estimator_terms(model, theta, config: EstimatorConfig, sampler: BallSampler, data, base: int,
                    n_draws: Optional[int] = None):
    """Per-draw estimator terms, levels, and inner-solve counts for stream ``base``.

    Returns ``(terms (n, p), levels (n,), inner_queries)``. The SG term is
    ``g^L``; the RT-MLMC term is ``G^l / P(l)``.
    """
    data = as_dataset(data)
    n_draws = config.n_outer if n_draws is None else n_draws
    theta = np.asarray(theta, dtype=float)
    roots, levels, offsets = _draw_plan(config, sampler, len(data), base, n_draws)
    probs = level_probabilities(config.L)
    div, eta, eps, fast = config.divergence, config.eta, config.inner_eps, config.entropic_fast_path
    terms = np.empty((n_draws, theta.size))
    queries = 0
    for lvl in np.unique(levels):
        idx = np.flatnonzero(levels == lvl)
        n_child = 2 ** int(lvl)
        step = max(1, CHUNK_POINTS // n_child)
        for s in range(0, idx.size, step):
            sel = idx[s : s + step]
            X = data.X[roots[sel]][:, None, :] + np.stack([offsets[i] for i in sel])
            f, G = _eval(model, theta, X, data.y[roots[sel]])
            if config.scheme is Scheme.SG:
                terms[sel] = _weighted(f, G, eta, div, eps, fast)
            else:
                terms[sel] = _terms_from_eval(f, G, int(lvl), eta, div, eps, fast) / probs[lvl]
        queries += idx.size * (1 if (config.scheme is Scheme.SG or lvl == 0) else 3)
    return terms, levels, queries


def fixed_level_terms(model, theta, level: int, config: EstimatorConfig, sampler: BallSampler, data,
                      base: int, n_draws: int, antithetic: bool = True):
    """Unscaled ``G^level`` (``antithetic=True``) or ``g^level`` for ``n_draws`` trees."""
    data = as_dataset(data)
    theta = np.asarray(theta, dtype=float)
    cfg = EstimatorConfig(L=level, n_outer=1, inner_eps=config.inner_eps, scheme=Scheme.SG,
                          entropic_fast_path=config.entropic_fast_path, eta=config.eta,
                          divergence=config.divergence)
    roots, _, offsets = _draw_plan(cfg, sampler, len(data), base, n_draws)
    out = np.empty((n_draws, theta.size))
    step = max(1, CHUNK_POINTS // 2**level)
    for s in range(0, n_draws, step):
        sel = np.arange(s, min(s + step, n_draws))
        X = data.X[roots[sel]][:, None, :] + np.stack([offsets[i] for i in sel])
        f, G = _eval(model, theta, X, data.y[roots[sel]])
        if antithetic:
            out[sel] = _terms_from_eval(f, G, level, cfg.eta, cfg.divergence, cfg.inner_eps, cfg.entropic_fast_path)
        else:
            out[sel] = _weighted(f, G, cfg.eta, cfg.divergence, cfg.inner_eps, cfg.entropic_fast_path)
    return out


def estimate(model, theta, config: EstimatorConfig, sampler: BallSampler, data, rng) -> GradientEstimate:
    base = int(rng.integers(2**63))
    terms, levels, queries = estimator_terms(model, theta, config, sampler, data, base)
    return GradientEstimate(
        vector=terms.mean(axis=0),
        samples_drawn=int(np.sum(2**levels)),
        inner_queries=int(queries),
        levels_used=tuple(int(v) for v in levels),
        terms=terms,
    )


def sg_estimator(model, theta, config: EstimatorConfig, sampler, data, rng) -> GradientEstimate:
    if config.scheme is not Scheme.SG:
        raise ParameterError("sg_estimator needs scheme=sg")
    return estimate(model, theta, config, sampler, data, rng)


def rt_mlmc_estimator(model, theta, config: EstimatorConfig, sampler, data, rng) -> GradientEstimate:
    if config.scheme is not Scheme.RTMLMC:
        raise ParameterError("rt_mlmc_estimator needs scheme=rtmlmc")
    return estimate(model, theta, config, sampler, data, rng)
