"""Contextual personalized pricing under the KL-regularized causal formulation.

Covariates ``x ~ N(0, I_10)``, price sensitivities

    z = (tanh(3 beta_1^T x), exp(-2 beta_2^T x)) + N(0, I_2),

loss ``Psi(w, z) = -w z^T (w, 1) = -z_1 w^2 - z_2 w`` (negative revenue) and a
linear decision rule ``w = theta^T g(x)`` on random cosine features
``g_i(x) = cos(omega_i^T x + b_i)``.

Because ``Psi`` is linear in ``z``, the conditional-sample average
``E_z^[Psi(w, z^)]`` at a training covariate only needs the mean ``zbar`` of
its ``m`` samples; the adversary moves the covariate inside a ball while the
sensitivities stay attached to the original point. Training reuses the
generic projected SGD / RT-MLMC machinery through :class:`PricingModel`,
whose integer "label" is the index of the training covariate.

The decision parameter lives in a Euclidean ball ``||theta|| <= radius``:
whenever ``E[z_1 | x] > 0`` the revenue is unbounded in ``w``, so without a
bounded parameter set neither the empirical nor the true problem has a
minimizer. Both are quadratic in ``theta``; exact minimizers over the ball
come from :func:`trust_region_min`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from ..datasets import Dataset
from ..divergence import DivergenceSpec, make_divergence
from ..errors import ParameterError
from ..mlmc import EstimatorConfig, Norm, Scheme
from ..train import TrainConfig, projected_sgd

__all__ = [
    "PricingInstance",
    "PricingModel",
    "PricingConfig",
    "PricingResult",
    "make_pricing_instance",
    "pricing_loss",
    "trust_region_min",
    "true_risk_quadratic",
    "solve_pricing",
    "improvement",
    "run_pricing_trials",
]


def pricing_loss(w, z):
    """``Psi(w, z) = -w (z_1 w + z_2)``; ``z`` has a trailing axis of length 2."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    return -w * (z[..., 0] * w + z[..., 1])


@dataclass(frozen=True, eq=False)
class PricingInstance:
    beta1: np.ndarray  # (d,)
    beta2: np.ndarray  # (d,)
    omega: np.ndarray  # (p, d)
    b: np.ndarray  # (p,)
    X: np.ndarray  # (M, d) training covariates
    Z: np.ndarray  # (M, m, 2) conditional samples
    noise_std: float = 1.0
    seed: Optional[int] = None

    @property
    def dim(self) -> int:
        return self.beta1.size

    @property
    def n_features(self) -> int:
        return self.b.size

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    @property
    def zbar(self) -> np.ndarray:
        return self.Z.mean(axis=1)

    def features(self, X) -> np.ndarray:
        return np.cos(np.atleast_2d(X) @ self.omega.T + self.b)

    def mean_z(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.column_stack([np.tanh(3.0 * X @ self.beta1), np.exp(-2.0 * X @ self.beta2)])

    def sample_z(self, X, m: int, rng) -> np.ndarray:
        mu = self.mean_z(X)
        return mu[:, None, :] + self.noise_std * rng.standard_normal((mu.shape[0], m, 2))

    def dataset(self) -> Dataset:
        """Training covariates with label ``i`` = row index (selects ``zbar[i]``)."""
        return Dataset(self.X, np.arange(self.M))


def make_pricing_instance(M: int = 100, m: int = 50, seed: int = 0, dim: int = 10, n_features: int = 100,
                          noise_std: float = 1.0) -> PricingInstance:
    """Draw ``beta``'s, the feature map and the training data from one seeded stream."""
    if M < 1 or m < 1:
        raise ParameterError(f"M and m must be >= 1, got M={M}, m={m}")
    if dim < 1 or n_features < 1:
        raise ParameterError("dim and n_features must be >= 1")
    rng = np.random.default_rng(seed)
    beta1 = rng.uniform(-0.1, 0.1, dim)
    beta2 = rng.uniform(-0.1, 0.1, dim)
    omega = rng.standard_normal((n_features, dim))
    b = rng.uniform(0.0, 2 * np.pi, n_features)
    X = rng.standard_normal((M, dim))
    inst = PricingInstance(beta1, beta2, omega, b, X, np.empty((M, m, 2)), noise_std, seed)
    Z = inst.sample_z(X, m, rng)
    return PricingInstance(beta1, beta2, omega, b, X, Z, noise_std, seed)


class PricingModel:
    """Model adapter: ``loss(theta, X', i) = Psi(theta^T g(X'), zbar_i)``."""

    def __init__(self, instance: PricingInstance, zbar: Optional[np.ndarray] = None):
        self.instance = instance
        self.zbar = instance.zbar if zbar is None else np.asarray(zbar, dtype=float)
        self.dim = instance.dim
        self.n_params = instance.n_features

    def init_theta(self, rng=None):
        return np.zeros(self.n_params)

    def loss(self, theta, X, y):
        w = self.instance.features(X) @ theta
        return pricing_loss(w, self.zbar[np.asarray(y, dtype=int)])

    def grad_theta(self, theta, X, y):
        G = self.instance.features(X)
        zb = self.zbar[np.asarray(y, dtype=int)]
        w = G @ theta
        return -(2.0 * zb[:, 0] * w + zb[:, 1])[:, None] * G

    def grad_x(self, theta, X, y):
        X = np.atleast_2d(X)
        inst = self.instance
        arg = X @ inst.omega.T + inst.b
        w = np.cos(arg) @ theta
        zb = self.zbar[np.asarray(y, dtype=int)]
        dw = -(np.sin(arg) * theta) @ inst.omega
        return -(2.0 * zb[:, 0] * w + zb[:, 1])[:, None] * dw


# -- exact quadratic minimization over a ball --------------------------------------


def trust_region_min(H, c, radius: float, tol: float = 1e-12):
    """Global minimizer of ``0.5 x^T H x + c^T x`` subject to ``||x|| <= radius``.

    Eigen-decomposition plus a scalar root find on the secular equation
    ``||(H + lam I)^{-1} c|| = radius``; the hard case adds a component along
    the lowest eigenvector.
    """
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    c = np.asarray(c, dtype=float)
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    lam, V = np.linalg.eigh(H)
    a = V.T @ c
    scale = max(1.0, np.abs(lam).max())
    lmin = lam[0]

    if lmin > tol * scale:
        x = -V @ (a / lam)
        if np.linalg.norm(x) <= radius:
            return x

    def norm_at(mu):
        return np.linalg.norm(a / (lam + mu)) - radius

    lo = max(0.0, -lmin)
    low_block = lam <= lmin + tol * scale
    if np.all(np.abs(a[low_block]) <= tol * max(1.0, np.abs(a).max())):
        # possible hard case: the secular function may stay below zero at mu -> -lmin
        rest = ~low_block
        y = np.zeros_like(a)
        y[rest] = -a[rest] / (lam[rest] + lo) if lo > 0 else -a[rest] / np.where(lam[rest] != 0, lam[rest], 1.0)
        if np.linalg.norm(y) <= radius:
            k = int(np.flatnonzero(low_block)[0])
            y[k] = math.sqrt(max(radius**2 - float(y @ y), 0.0))
            return V @ y
    left = lo + max(tol * scale, 1e-300)
    while norm_at(left) <= 0:  # only when a is tiny along the low block
        left = lo + 0.5 * (left - lo)
        if left - lo < 1e-300:
            break
    right = lo + np.linalg.norm(a) / radius + scale
    while norm_at(right) > 0:
        right *= 2.0
    mu = brentq(norm_at, left, right, xtol=1e-15 * max(1.0, right), rtol=4 * np.finfo(float).eps, maxiter=500)
    return -V @ (a / (lam + mu))


def true_risk_quadratic(instance: PricingInstance, n: int = 100_000, seed: int = 0, chunk: int = 20_000):
    """``R(theta) = -theta^T P theta - q^T theta`` estimated from ``n`` fresh covariates.

    Uses the exact conditional means of ``z`` (``Psi`` is linear in ``z``), so
    the only Monte Carlo error is over ``x``.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    p = instance.n_features
    P = np.zeros((p, p))
    q = np.zeros(p)
    done = 0
    while done < n:
        k = min(chunk, n - done)
        X = rng.standard_normal((k, instance.dim))
        G = instance.features(X)
        mu = instance.mean_z(X)
        P += (G * mu[:, :1]).T @ G
        q += G.T @ mu[:, 1]
        done += k
    return P / n, q / n


def _risk(theta, P, q):
    return float(-theta @ P @ theta - q @ theta)


def improvement(r_theta: float, r_erm: float, r_star: float, rel_tol: float = 1e-9):
    """``J = 1 - (R(theta) - R*) / (R(theta_ERM) - R*)``; ``None`` when the ERM gap vanishes."""
    gap = r_erm - r_star
    if not gap > rel_tol * max(1.0, abs(r_star)):
        return None
    return 1.0 - (r_theta - r_star) / gap


# -- training -----------------------------------------------------------------------


@dataclass(frozen=True)
class PricingConfig:
    rho: float = 0.45
    eta: float = 0.9
    radius: float = 1.0
    T: int = 500
    step: float = 0.05
    L: int = 3
    n_outer: int = 4
    norm: Norm = Norm.L2
    divergence: DivergenceSpec = field(default_factory=lambda: make_divergence("kl"))
    n_truth: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not self.rho >= 0 or not self.eta > 0:
            raise ParameterError(f"need rho >= 0 and eta > 0, got rho={self.rho}, eta={self.eta}")
        if not self.radius > 0:
            raise ParameterError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True, eq=False)
class PricingResult:
    theta: np.ndarray
    theta_erm: np.ndarray
    risk: float
    risk_erm: float
    risk_star: float
    J: Optional[float]
    seed: Optional[int]


def _empirical_erm(instance: PricingInstance, radius: float):
    G = instance.features(instance.X)
    zb = instance.zbar
    P = (G * zb[:, :1]).T @ G / instance.M
    q = G.T @ zb[:, 1] / instance.M
    return trust_region_min(-2.0 * P, -q, radius)


def _train(instance: PricingInstance, config: PricingConfig, rho: float, L: int, seed: int):
    model = PricingModel(instance)
    est = EstimatorConfig(L=L, n_outer=config.n_outer, scheme=Scheme.RTMLMC, eta=config.eta,
                          divergence=config.divergence)
    tc = TrainConfig(T=config.T, step=config.step, projection_radius=config.radius, estimator=est,
                     rho=rho, eta=config.eta, norm=config.norm, seed=seed, eval_trees=1, keep_trajectory=False)
    return projected_sgd(model, instance.dataset(), tc, theta0=np.zeros(model.n_params)).theta_avg


# ERM through the same optimizer: a vanishing ball makes every perturbed point equal to its root
ERM_RHO = 1e-12


def solve_pricing(instance: PricingInstance, config: PricingConfig = PricingConfig(), truth=None,
                  exact_erm: bool = False) -> PricingResult:
    """Train the regularized model, compare with ERM, report ``J``.

    ``theta_ERM`` is trained by the same projected SGD (same estimator, steps,
    step size and seed) with ``rho -> 0``, so every perturbed point equals its
    root and the run is SGD on the empirical risk; only ``rho`` differs between
    the two runs. ``exact_erm=True`` uses the exact empirical minimizer over the ball
    instead. ``R*`` is the exact minimizer of the estimated true risk over the
    ball.
    """
    theta = _train(instance, config, config.rho, config.L, config.seed) if config.rho > 0 else None
    if exact_erm:
        theta_erm = _empirical_erm(instance, config.radius)
    else:
        theta_erm = _train(instance, config, ERM_RHO, config.L, config.seed)
    if theta is None:
        theta = theta_erm
    P, q = truth if truth is not None else true_risk_quadratic(instance, config.n_truth, seed=config.seed)
    theta_star = trust_region_min(-2.0 * P, -q, config.radius)
    r_star = _risk(theta_star, P, q)
    r, r_erm = _risk(theta, P, q), _risk(theta_erm, P, q)
    return PricingResult(theta, theta_erm, r, r_erm, r_star, improvement(r, r_erm, r_star), instance.seed)


def run_pricing_trials(trials: int = 50, M: int = 100, m: int = 50, config: PricingConfig = PricingConfig(),
                       seed: int = 0) -> list:
    """Independent trials; trial ``t`` uses instance seed ``(seed, t)`` folded into one integer."""
    out = []
    for t in range(trials):
        s = int(np.random.SeedSequence([seed, t]).generate_state(1)[0])
        inst = make_pricing_instance(M, m, seed=s)
        out.append(solve_pricing(inst, replace(config, seed=s)))
    return out
