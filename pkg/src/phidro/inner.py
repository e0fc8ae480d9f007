"""Finite-support penalized phi-divergence DRO.

Solves

    max_{gamma in simplex(m)}  sum_i gamma_i f_i - (eta / m) sum_i phi(m gamma_i)

whose dual is ``inf_mu { mu + (1/m) sum_i (eta*phi)*(f_i - mu) }``.

KL and quadratic generators are handled by bisection on the dual multiplier
(the simplex residual ``h(mu) = mean((phi')^{-1}((f - mu)/eta)) - 1`` is
nonincreasing in ``mu``). KL, indicator, absolute-value and hinge generators
also have closed forms. Every solver has a row-batched variant working on a
``(B, m)`` array of loss values; the single-problem functions wrap those.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import DEFAULT_RATIO_RANGE, DivergenceKind, DivergenceSpec
from .errors import ParameterError, UnsupportedDivergenceError

__all__ = [
    "Method",
    "InnerProblem",
    "InnerSolution",
    "solve_bisection",
    "solve_closed_form",
    "solve",
    "dual_objective",
    "primal_objective",
    "bisection_iterations",
    "bisection_bracket",
    "log_mean_exp",
    "batch_bisection",
    "batch_closed_form",
    "batch_weights",
]

log = logging.getLogger(__name__)

# Residual below which a bisection midpoint counts as an exact hit.
EXACT_HIT_TOL = 1e-12
# Simplex residual the bisection keeps refining toward after the nominal budget.
SIMPLEX_TOL = 1e-10
MAX_EXTRA_ITERATIONS = 200
MAX_WIDENINGS = 200


class Method(str, enum.Enum):
    BISECTION = "bisection"
    CLOSED_FORM = "closed_form"


@dataclass(frozen=True)
class InnerProblem:
    values: np.ndarray
    eta: float
    divergence: DivergenceSpec

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ParameterError("inner problem needs at least one value")
        if not np.all(np.isfinite(v)):
            raise ParameterError("inner problem values must be finite")
        if not (self.eta > 0) or not math.isfinite(self.eta):
            raise ParameterError(f"eta must be positive and finite, got {self.eta!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def m(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class InnerSolution:
    gamma: np.ndarray
    mu: float
    value: float
    iterations: int
    method: Method
    primal_exact: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "gamma": [float(g) for g in self.gamma],
            "mu": float(self.mu),
            "value": float(self.value),
            "iterations": int(self.iterations),
            "method": self.method.value,
            "primal_exact": bool(self.primal_exact),
        }


# -- helpers ------------------------------------------------------------------------


def log_mean_exp(a, axis=-1):
    """log(mean(exp(a))) along ``axis`` with max subtraction."""
    a = np.asarray(a, dtype=float)
    amax = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.mean(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return np.squeeze(out, axis=axis)


def primal_objective(values, gamma, eta, divergence: DivergenceSpec):
    """sum_i gamma_i f_i - (eta/m) sum_i phi(m gamma_i), row-wise for 2-D input."""
    values = np.asarray(values, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    m = values.shape[-1]
    reg = np.mean(divergence.phi(m * gamma), axis=-1)
    return np.sum(gamma * values, axis=-1) - eta * reg


def dual_objective(problem: InnerProblem, mu: float) -> float:
    """mu + (1/m) sum_i (eta*phi)*(f_i - mu); +inf where the conjugate is infinite."""
    t = problem.values - mu
    with np.errstate(over="ignore"):
        conj = problem.divergence.scaled_conjugate(t, problem.eta)
    if np.any(np.isinf(conj)):
        return math.inf
    return float(mu + np.mean(conj))


def _residual(div: DivergenceSpec, F, mu, eta):
    """h(mu) per row: mean((phi')^{-1}((f - mu)/eta)) - 1."""
    with np.errstate(over="ignore"):
        x = div.inv_phi_prime((F - mu[:, None]) / eta)
    return np.mean(x, axis=1) - 1.0


def bisection_bracket(values, eta, divergence: DivergenceSpec):
    """Initial bracket [lo, hi] from the minimum/maximum loss values.

    lo = min f; hi = max f - eta*K when K is finite, otherwise
    hi = max f - eta*(min f - max f).
    """
    F = np.atleast_2d(np.asarray(values, dtype=float))
    fmin = F.min(axis=1)
    fmax = F.max(axis=1)
    K = divergence.K
    if math.isfinite(K):
        hi = fmax - eta * K
    else:
        hi = fmax - eta * (fmin - fmax)
    return fmin, hi


def bisection_iterations(width, eta, kappa, epsilon):
    """ceil(1/2 log2(width^2 / (2 kappa eta epsilon))), clipped at 0."""
    width = np.asarray(width, dtype=float)
    with np.errstate(divide="ignore"):
        raw = 0.5 * np.log2(width**2 / (2.0 * kappa * eta * epsilon))
    return np.where(width > 0, np.maximum(np.ceil(raw), 0), 0).astype(int)


# -- batched solvers ----------------------------------------------------------------


def batch_bisection(values, eta, divergence: DivergenceSpec, epsilon=1e-8, ratio_range=DEFAULT_RATIO_RANGE):
    """Bisection on the dual multiplier for every row of ``values``.

    Returns ``(gamma, mu, value, iterations)``; ``gamma`` is renormalised to the
    simplex after the search.
    """
    if not divergence.differentiable:
        raise UnsupportedDivergenceError(
            f"bisection needs a differentiable generator (kl, quadratic), got {divergence.kind.value}"
        )
    kappa = divergence.effective_kappa(ratio_range)
    if not kappa > 0:
        raise UnsupportedDivergenceError(f"{divergence.kind.value} has no positive strong-convexity modulus")
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon!r}")
    F = np.atleast_2d(np.asarray(values, dtype=float))
    B, m = F.shape
    lo, hi = bisection_bracket(F, eta, divergence)
    iters = np.zeros(B, dtype=int)
    mu = np.empty(B)

    degenerate = (F.max(axis=1) - F.min(axis=1)) <= 0
    # all values equal: h(mu) = 0 at mu = c - eta*phi'(1)
    mu[degenerate] = F[degenerate, 0] - eta * divergence.phi_prime_at_one

    act = ~degenerate
    if np.any(act):
        Fa = F[act]
        lo_a, hi_a = lo[act].copy(), hi[act].copy()
        # widen until h(lo) >= 0 >= h(hi)
        for _ in range(MAX_WIDENINGS):
            bad = _residual(divergence, Fa, lo_a, eta) < 0
            if not np.any(bad):
                break
            lo_a[bad] -= np.maximum(hi_a[bad] - lo_a[bad], 1e-300)
        for n in range(MAX_WIDENINGS):
            bad = _residual(divergence, Fa, hi_a, eta) > 0
            if not np.any(bad):
                break
            if n == 0:
                log.warning("bisection upper bracket too small for %d row(s); widening", int(bad.sum()))
            hi_a[bad] += np.maximum(hi_a[bad] - lo_a[bad], 1e-300)

        budget = bisection_iterations(hi_a - lo_a, eta, kappa, epsilon)
        mu_a = 0.5 * (lo_a + hi_a)
        it_a = np.zeros(Fa.shape[0], dtype=int)
        running = np.ones(Fa.shape[0], dtype=bool)
        for t in range(int(budget.max(initial=0)) + MAX_EXTRA_ITERATIONS):
            if not np.any(running):
                break
            mid = 0.5 * (lo_a + hi_a)
            h = _residual(divergence, Fa, mid, eta)
            r = running
            mu_a[r] = mid[r]
            it_a[r] += 1
            down = r & (h <= 0)
            up = r & (h > 0)
            hi_a[down] = mid[down]
            lo_a[up] = mid[up]
            hit = np.abs(h) <= EXACT_HIT_TOL
            stalled = hi_a - lo_a <= 4 * np.spacing(np.abs(mid) + 1.0)
            done_budget = (it_a >= budget) & (np.abs(h) <= SIMPLEX_TOL)
            running = r & ~(hit | stalled | done_budget)
        mu[act] = mu_a
        iters[act] = it_a

    with np.errstate(over="ignore"):
        gamma = divergence.inv_phi_prime((F - mu[:, None]) / eta) / m
    s = gamma.sum(axis=1, keepdims=True)
    gamma = gamma / s
    value = primal_objective(F, gamma, eta, divergence)
    return gamma, mu, value, iters


def _closed_form_kl(F, eta):
    fmax = F.max(axis=1, keepdims=True)
    w = np.exp((F - fmax) / eta)
    gamma = w / w.sum(axis=1, keepdims=True)
    mu = fmax[:, 0] + eta * np.log(np.mean(w, axis=1))
    return gamma, mu, mu.copy()


def _closed_form_indicator(F, alpha):
    B, m = F.shape
    order = np.argsort(-F, axis=1, kind="stable")
    k = alpha * m
    full = int(math.floor(k + 1e-12))
    frac = max(k - full, 0.0) if full < m else 0.0
    full = min(full, m)
    w_sorted = np.zeros(m)
    w_sorted[:full] = 1.0 / k
    if frac > 1e-12 and full < m:
        w_sorted[full] = frac / k
    w_sorted /= w_sorted.sum()
    gamma = np.zeros_like(F)
    np.put_along_axis(gamma, order, np.broadcast_to(w_sorted, F.shape), axis=1)
    # every weight vector with m*gamma <= 1/alpha is optimal for a constant row; pick uniform
    flat = F.max(axis=1) == F.min(axis=1)
    gamma[flat] = 1.0 / m
    boundary = min(int(math.ceil(k - 1e-12)), m) - 1
    mu = np.take_along_axis(F, order[:, boundary:boundary + 1], axis=1)[:, 0]
    value = np.sum(gamma * F, axis=1)
    return gamma, mu, value


def _closed_form_cap(F, eta, width):
    """Absolute (width=2 eta) and hinge (width=eta): uniform weights on {f >= max f - width}."""
    fmax = F.max(axis=1, keepdims=True)
    value = fmax[:, 0] - width + np.mean(np.maximum(F - fmax + width, 0.0), axis=1)
    support = F >= fmax - width
    gamma = support / support.sum(axis=1, keepdims=True)
    mu = fmax[:, 0] - eta
    return gamma, mu, value


def batch_closed_form(values, eta, divergence: DivergenceSpec):
    """Closed-form solutions for KL, indicator, absolute-value and hinge generators.

    Returns ``(gamma, mu, value, primal_exact)``.
    """
    F = np.atleast_2d(np.asarray(values, dtype=float))
    k = divergence.kind
    if k is DivergenceKind.KL:
        gamma, mu, value = _closed_form_kl(F, eta)
    elif k is DivergenceKind.INDICATOR:
        gamma, mu, value = _closed_form_indicator(F, divergence.alpha)
    elif k is DivergenceKind.ABSOLUTE:
        gamma, mu, value = _closed_form_cap(F, eta, 2.0 * eta)
    elif k is DivergenceKind.HINGE:
        gamma, mu, value = _closed_form_cap(F, eta, eta)
    else:
        raise UnsupportedDivergenceError("the quadratic divergence has no closed form here; use solve_bisection")
    if k in (DivergenceKind.ABSOLUTE, DivergenceKind.HINGE):
        primal = primal_objective(F, gamma, eta, divergence)
        scale = 1.0 + np.abs(value)
        exact = np.abs(primal - value) <= 1e-9 * scale
    else:
        exact = np.ones(F.shape[0], dtype=bool)
    return gamma, mu, value, exact


def batch_weights(values, eta, divergence: DivergenceSpec, epsilon=1e-8, fast_path=True):
    """Near-optimal weights gamma for every row (closed form when allowed, else bisection)."""
    if divergence.kind is DivergenceKind.QUADRATIC or (divergence.kind is DivergenceKind.KL and not fast_path):
        return batch_bisection(values, eta, divergence, epsilon)[0]
    return batch_closed_form(values, eta, divergence)[0]


# -- single-problem API -------------------------------------------------------------


def solve_bisection(problem: InnerProblem, epsilon: float = 1e-8, ratio_range=DEFAULT_RATIO_RANGE) -> InnerSolution:
    """Bisection search on the dual multiplier (KL and quadratic generators)."""
    gamma, mu, value, iters = batch_bisection(
        problem.values[None, :], problem.eta, problem.divergence, epsilon, ratio_range
    )
    return InnerSolution(gamma[0], float(mu[0]), float(value[0]), int(iters[0]), Method.BISECTION)


def solve_closed_form(problem: InnerProblem) -> InnerSolution:
    """Closed-form solution for KL, indicator, absolute-value and hinge generators."""
    gamma, mu, value, exact = batch_closed_form(problem.values[None, :], problem.eta, problem.divergence)
    return InnerSolution(
        gamma[0], float(mu[0]), float(value[0]), 0, Method.CLOSED_FORM, primal_exact=bool(exact[0])
    )


def solve(problem: InnerProblem, epsilon: float = 1e-8) -> InnerSolution:
    """Closed form where one exists, bisection otherwise."""
    if problem.divergence.kind is DivergenceKind.QUADRATIC:
        return solve_bisection(problem, epsilon)
    return solve_closed_form(problem)
