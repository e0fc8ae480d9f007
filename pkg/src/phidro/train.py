"""Projected SGD over the regularized robust objective, attacks and evaluation.

``projected_sgd`` iterates ``theta <- Proj(theta - step * V(theta))`` with
``V`` an SG or RT-MLMC estimate (see :mod:`phidro.mlmc`) and returns the
final iterate, the running average (convex regime) and a uniformly chosen
iterate (nonconvex regime).

The recorded ``objective_estimate`` is the mean inner value on a fixed set
of level-``L`` sample trees drawn once per run, so consecutive values are
comparable (same samples, different ``theta``).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .datasets import Dataset, as_dataset
from .divergence import DivergenceKind
from .errors import NumericalError, ParameterError
from .inner import batch_bisection, batch_closed_form
from .mlmc import BallSampler, EstimatorConfig, Norm, Scheme, estimate

__all__ = [
    "TrainConfig",
    "TrainResult",
    "AttackKind",
    "AttackConfig",
    "project_ball",
    "projected_sgd",
    "pgm_attack",
    "white_noise_attack",
    "evaluate",
    "step_size_preset",
    "PRESETS",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    T: int = 500
    step: float = 0.1
    projection_radius: float = math.inf
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    rho: float = 0.1
    eta: Optional[float] = None  # defaults to 2 * rho
    norm: Norm = Norm.L2
    seed: int = 0
    eval_trees: int = 64
    keep_trajectory: bool = True

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(str(getattr(self.norm, "value", self.norm)).lower()))
        if self.eta is None:
            object.__setattr__(self, "eta", 2.0 * self.rho)
        if self.T < 1:
            raise ParameterError(f"T must be >= 1, got {self.T}")
        if not self.step > 0:
            raise ParameterError(f"step must be positive, got {self.step}")
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if not self.projection_radius > 0:
            raise ParameterError(f"projection_radius must be positive, got {self.projection_radius}")
        # the estimator always runs at this config's eta
        if self.estimator.eta != self.eta:
            object.__setattr__(self, "estimator", replace(self.estimator, eta=self.eta))


@dataclass(frozen=True, eq=False)
class TrainResult:
    theta: np.ndarray
    theta_avg: np.ndarray
    theta_random: np.ndarray
    random_index: int
    metrics: list  # (iter, objective_estimate, grad_norm, samples_cumulative)
    trajectory: Optional[np.ndarray] = None


def project_ball(theta, radius):
    if not math.isfinite(radius):
        return theta
    n = np.linalg.norm(theta)
    # the slack keeps projected points fixed despite rounding in the rescale
    return theta if n <= radius * (1 + 4 * np.finfo(float).eps) else theta * (radius / n)


def _inner_values(f, eta, div, eps):
    if f.shape[1] == 1:
        return f[:, 0]
    if div.kind is DivergenceKind.QUADRATIC:
        return batch_bisection(f, eta, div, eps)[2]
    return batch_closed_form(f, eta, div)[2]


class _ObjectiveProbe:
    """Fixed trees for a comparable objective estimate across iterations."""

    def __init__(self, model, data: Dataset, sampler, config: TrainConfig, rng):
        n = max(1, config.eval_trees)
        level = config.estimator.L
        idx = rng.integers(len(data), size=n)
        offs = sampler.sample(rng, n * 2**level).reshape(n, 2**level, -1)
        self.X = (data.X[idx][:, None, :] + offs).reshape(n * 2**level, -1)
        self.y = np.repeat(data.y[idx], 2**level)
        self.shape = (n, 2**level)
        self.model = model
        self.est = config.estimator

    def __call__(self, theta) -> float:
        f = self.model.loss(theta, self.X, self.y).reshape(self.shape)
        return float(np.mean(_inner_values(f, self.est.eta, self.est.divergence, self.est.inner_eps)))


def projected_sgd(model, data, config: TrainConfig, theta0=None) -> TrainResult:
    """Algorithm: projected SGD with SG / RT-MLMC gradient estimates."""
    data = as_dataset(data)
    if data.dim != model.dim:
        raise ParameterError(f"model expects dim {model.dim}, data has {data.dim}")
    master = np.random.default_rng(config.seed)
    init_rng, probe_rng, pick_rng, est_rng = (np.random.default_rng(s) for s in master.bit_generator.seed_seq.spawn(4))
    sampler = BallSampler(config.norm, config.rho, data.dim)
    theta = np.array(model.init_theta(init_rng) if theta0 is None else theta0, dtype=float)
    theta = project_ball(theta, config.projection_radius)
    probe = _ObjectiveProbe(model, data, sampler, config, probe_rng)
    pick = int(pick_rng.integers(config.T))

    traj = np.empty((config.T + 1, theta.size)) if config.keep_trajectory else None
    total = np.zeros_like(theta)
    chosen = theta.copy()
    metrics = []
    samples = 0
    for t in range(config.T):
        if traj is not None:
            traj[t] = theta
        total += theta
        if t == pick:
            chosen = theta.copy()
        est = estimate(model, theta, config.estimator, sampler, data, est_rng)
        g = est.vector
        gn = float(np.linalg.norm(g))
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at iteration {t + 1} (norm {gn})")
        samples += est.samples_drawn
        metrics.append((t + 1, probe(theta), gn, samples))
        theta = project_ball(theta - config.step * g, config.projection_radius)
    if traj is not None:
        traj[config.T] = theta
    return TrainResult(theta, total / config.T, chosen, pick + 1, metrics, traj)


# -- attacks -----------------------------------------------------------------------


class AttackKind(str, enum.Enum):
    PGM = "pgm"
    WHITE_NOISE = "white_noise"


@dataclass(frozen=True)
class AttackConfig:
    norm: Norm = Norm.LINF
    epsilon_adv: float = 0.3
    steps: int = 15
    step_size: float = 0.1
    kind: AttackKind = AttackKind.PGM

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(str(getattr(self.norm, "value", self.norm)).lower()))
        object.__setattr__(self, "kind", AttackKind(str(getattr(self.kind, "value", self.kind)).lower()))
        if not self.epsilon_adv >= 0:
            raise ParameterError(f"epsilon_adv must be >= 0, got {self.epsilon_adv}")
        if self.kind is AttackKind.PGM and self.steps < 1:
            raise ParameterError(f"PGM needs steps >= 1, got {self.steps}")


def _project_offsets(delta, norm: Norm, eps):
    if norm is Norm.LINF:
        return np.clip(delta, -eps, eps)
    n = np.linalg.norm(delta, axis=1, keepdims=True)
    scale = np.where(n > eps, eps / np.where(n > 0, n, 1.0), 1.0)
    return delta * scale


def pgm_attack(model, theta, X, y, config: AttackConfig):
    """Projected gradient ascent on the inputs; labels are left untouched."""
    X0 = np.atleast_2d(np.asarray(X, dtype=float))
    if config.epsilon_adv == 0:
        return X0.copy()
    Z = X0.copy()
    for _ in range(config.steps):
        g = model.grad_x(theta, Z, y)
        if config.norm is Norm.LINF:
            d = np.sign(g)
        else:
            n = np.linalg.norm(g, axis=1, keepdims=True)
            d = np.where(n > 0, g / np.where(n > 0, n, 1.0), 0.0)
        Z = X0 + _project_offsets(Z + config.step_size * d - X0, config.norm, config.epsilon_adv)
    return Z


def white_noise_attack(X, config: AttackConfig, rng):
    X0 = np.atleast_2d(np.asarray(X, dtype=float))
    if config.epsilon_adv == 0:
        return X0.copy()
    return X0 + BallSampler(config.norm, config.epsilon_adv, X0.shape[1]).sample(rng, X0.shape[0])


def evaluate(model, theta, dataset, attack: Optional[AttackConfig] = None, rng=None) -> float:
    """Misclassification rate, optionally after attacking every point."""
    data = as_dataset(dataset)
    X = data.X
    if attack is not None:
        if attack.kind is AttackKind.PGM:
            X = pgm_attack(model, theta, X, data.y, attack)
        else:
            X = white_noise_attack(X, attack, np.random.default_rng(0) if rng is None else rng)
    return float(np.mean(model.predict(theta, X) != data.y))


# -- hyper-parameter presets ------------------------------------------------------

PRESETS = ("convex-sg", "convex-rtmlmc", "nonconvex-rtmlmc", "nonconvex-unconstrained")


def step_size_preset(name: str, delta: float, base: float = 1e-2, g_idf: float = 1.0) -> dict:
    """Batch size, max level, iteration count and step size for target accuracy ``delta``.

    Only the scalings in ``delta`` are meaningful; the unknown problem
    constants are folded into ``base`` (step size) and ``g_idf`` (level).
    """
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    lg = math.log(1.0 / delta)
    if name in ("convex-sg", "convex-rtmlmc"):
        L = max(0, math.ceil(math.log2(8 * g_idf / delta)))
        if name == "convex-sg":
            return dict(scheme=Scheme.SG, n_outer=1, L=L, T=math.ceil(delta**-2), step=base * delta)
        return dict(scheme=Scheme.RTMLMC, n_outer=1, L=L, T=math.ceil(lg**2 / delta**2), step=base * delta / lg**2)
    if name in ("nonconvex-rtmlmc", "nonconvex-unconstrained"):
        L = max(0, math.ceil(math.log2(delta**-2)))
        n = math.ceil(delta**-2) if name == "nonconvex-rtmlmc" else 1
        return dict(scheme=Scheme.RTMLMC, n_outer=n, L=L, T=math.ceil(delta**-2), step=base)
    raise ParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
