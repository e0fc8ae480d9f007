"""Regularization effects of the phi-regularized robust loss.

For a smooth loss ``f``, atoms ``z`` (uniform empirical measure) and the
uniform measure ``beta`` on the unit ball, compare

* the gap      ``eps = E_z[ OCE_eta( f(z + rho b) ) ] - E_z[f(z)]``,
* the surrogate ``E~ = rho E_z[ OCE_{eta/rho}( grad f(z).b ) ]``  (first-order Taylor),
* ``R1 = rho E_z[ OCE_{1/C}( grad f(z).b ) ]``,
* ``R2 = rho E_z[ ||grad f(z)||_* ]``,
* ``R3 = rho**2 / (2 eta phi''(1)) E_z[ Var_b( grad f(z).b ) ]``,

where ``OCE_s(X) = inf_mu { mu + E[ s phi*((X - mu) / s) ] }`` is the value
of the inner problem on the law of ``X``. Expectations over ``b`` use a
deterministic tensor grid (cell midpoints, ``grid`` points per axis, masked
to the disc for L2) when ``d <= 2`` and Monte Carlo otherwise.

KL values are exact log-mean-exps streamed over grid chunks; other
divergences minimise the convex dual in ``mu`` by golden-section search.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .divergence import DivergenceKind, DivergenceSpec, make_divergence
from .errors import ParameterError, UnsupportedDivergenceError
from .mlmc import BallSampler, Norm

__all__ = [
    "LossKind",
    "SmoothTestLoss",
    "linear_loss",
    "quadratic_loss",
    "logsumexp_loss",
    "default_atoms",
    "Regime",
    "RegimeKind",
    "parse_regime",
    "ScalingReport",
    "oce",
    "golden_section",
    "regularizer_gap",
    "surrogate_gap",
    "oce_regularizer",
    "variation_regularizer",
    "variance_regularizer",
    "run_scaling_study",
]

DEFAULT_GRID = 4096
DEFAULT_MC = 100_000
MIN_MC = 100
_CHUNK = 1 << 20  # ball points per chunk


# -- test losses ------------------------------------------------------------------


class LossKind(str, enum.Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    LOGSUMEXP = "logsumexp"


@dataclass(frozen=True, eq=False)
class SmoothTestLoss:
    """``linear: a.z``; ``quadratic: z'Az/2 + b.z``; ``logsumexp: log sum exp(Az + b)``."""

    kind: LossKind
    A: np.ndarray
    b: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[-1]

    def value(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.kind is LossKind.LINEAR:
            return Z @ self.A
        if self.kind is LossKind.QUADRATIC:
            return 0.5 * np.einsum("ni,ij,nj->n", Z, self.A, Z) + Z @ self.b
        U = Z @ self.A.T + self.b
        m = U.max(axis=1)
        return m + np.log(np.exp(U - m[:, None]).sum(axis=1))

    def grad(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.kind is LossKind.LINEAR:
            return np.broadcast_to(self.A, Z.shape).copy()
        if self.kind is LossKind.QUADRATIC:
            return Z @ self.A.T + self.b
        U = Z @ self.A.T + self.b
        p = np.exp(U - U.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        return p @ self.A

    def increment(self, z, offsets):
        """``f(z + o) - f(z)`` without cancellation for small offsets."""
        z = np.asarray(z, dtype=float)
        O = np.atleast_2d(offsets)
        if self.kind is LossKind.LINEAR:
            return O @ self.A
        if self.kind is LossKind.QUADRATIC:
            return O @ (self.A @ z + self.b) + 0.5 * np.einsum("ni,ij,nj->n", O, self.A, O)
        u = self.A @ z + self.b
        logp = u - (u.max() + np.log(np.exp(u - u.max()).sum()))
        V = O @ self.A.T + logp
        m = V.max(axis=1)
        return m + np.log(np.exp(V - m[:, None]).sum(axis=1))

    def smoothness(self, z=None) -> float:
        """A Lipschitz constant of the gradient (operator 2-norm bound)."""
        if self.kind is LossKind.LINEAR:
            return 0.0
        if self.kind is LossKind.QUADRATIC:
            return float(np.linalg.norm(self.A, 2))
        return float(np.linalg.norm(self.A, 2) ** 2)


def linear_loss(a=(1.0, -0.5)) -> SmoothTestLoss:
    a = np.asarray(a, dtype=float)
    return SmoothTestLoss(LossKind.LINEAR, a, np.zeros(1))


def quadratic_loss(A=((2.0, 0.5), (0.5, 1.0)), b=(1.0, -0.5)) -> SmoothTestLoss:
    return SmoothTestLoss(LossKind.QUADRATIC, np.asarray(A, dtype=float), np.asarray(b, dtype=float))


def logsumexp_loss(A=((1.0, 2.0), (-1.0, 0.5), (0.3, -1.0)), b=(0.0, 0.2, -0.1)) -> SmoothTestLoss:
    return SmoothTestLoss(LossKind.LOGSUMEXP, np.asarray(A, dtype=float), np.asarray(b, dtype=float))


def make_test_loss(name: str) -> SmoothTestLoss:
    try:
        return {"linear": linear_loss, "quadratic": quadratic_loss, "logsumexp": logsumexp_loss}[name.lower()]()
    except KeyError:
        raise ParameterError(f"unknown test loss {name!r}; choose linear, quadratic or logsumexp") from None


def default_atoms(dim: int = 2) -> np.ndarray:
    base = np.array([[0.5, -0.25], [-0.3, 0.6]])
    if dim <= 2:
        return base[:, :dim].copy()
    return np.hstack([base, np.zeros((2, dim - 2))])


def dual_norm(G, norm: Norm):
    G = np.atleast_2d(G)
    return np.abs(G).sum(axis=1) if Norm(norm) is Norm.LINF else np.linalg.norm(G, axis=1)


def ball_covariance(dim: int, norm: Norm) -> float:
    """Second-moment scale of the uniform unit ball: E[b b'] = c * I."""
    return 1.0 / 3.0 if Norm(norm) is Norm.LINF else 1.0 / (dim + 2.0)


# -- OCE of an empirical law --------------------------------------------------------


def golden_section(fun, lo, hi, tol=1e-12, max_iter=200):
    """Minimise a convex (unimodal) function on ``[lo, hi]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def _dual(values, mu, eta, div):
    return mu + float(np.mean(div.scaled_conjugate(values - mu, eta)))


def oce(values, eta, divergence: DivergenceSpec, method: str = "auto") -> float:
    """``inf_mu { mu + mean[ (eta phi)*(X - mu) ] }`` for the sample ``values``.

    ``method="closed"`` (KL only) uses the log-mean-exp; ``"golden"`` runs a
    golden-section search over ``mu`` on a bracket that always contains the
    minimiser.
    """
    X = np.asarray(values, dtype=float).ravel()
    if X.size == 0:
        raise ParameterError("oce needs at least one value")
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    kind = divergence.kind
    if method == "auto":
        method = "closed" if kind is DivergenceKind.KL else "golden"
    if method == "closed":
        if kind is not DivergenceKind.KL:
            raise UnsupportedDivergenceError("closed-form OCE here is for KL only")
        m = X.max()
        return float(m + eta * np.log(np.mean(np.exp((X - m) / eta))))
    lo_x, hi_x = float(X.min()), float(X.max())
    if hi_x == lo_x:
        return hi_x
    if kind in (DivergenceKind.ABSOLUTE, DivergenceKind.HINGE):
        lo = hi_x - eta  # conjugate is +inf below this
    else:
        lo = lo_x - eta
    mu, val = golden_section(lambda m: _dual(X, m, eta, divergence), lo, hi_x)
    # the bracket endpoints are candidates too (the minimiser can sit on them)
    return float(min(val, _dual(X, lo, eta, divergence), _dual(X, hi_x, eta, divergence)))


# -- ball expectations ---------------------------------------------------------------


def _grid_chunks(dim: int, norm: Norm, n: int):
    """Unit-ball grid points in chunks (tensor grid of midpoints, disc-masked for L2)."""
    if dim > 2:
        raise ParameterError("grid quadrature is only used for dim <= 2")
    u = -1.0 + (np.arange(n) + 0.5) * (2.0 / n)
    if dim == 1:
        yield u[:, None]
        return
    rows = max(1, _CHUNK // n)
    for s in range(0, n, rows):
        B = np.stack(np.meshgrid(u[s : s + rows], u, indexing="ij"), axis=-1).reshape(-1, 2)
        if Norm(norm) is Norm.L2:
            B = B[np.einsum("ij,ij->i", B, B) <= 1.0]
        if B.size:
            yield B


class _LSE:
    """Streaming log-mean-exp."""

    def __init__(self):
        self.m = -np.inf
        self.s = 0.0
        self.n = 0

    def add(self, x):
        mx = float(x.max())
        if mx > self.m:
            self.s *= math.exp(self.m - mx) if np.isfinite(self.m) else 0.0
            self.m = mx
        self.s += float(np.exp(x - self.m).sum())
        self.n += x.size

    def value(self):
        return self.m + math.log(self.s / self.n)


def _ball_oce(value_fn, dim, norm, eta, divergence, grid, mc_samples, rng):
    """OCE of ``value_fn(B)`` with ``B ~ uniform unit ball``; returns (value, stderr)."""
    if mc_samples is not None or dim > 2:
        n = DEFAULT_MC if mc_samples is None else int(mc_samples)
        if n < MIN_MC:
            raise ParameterError(f"Monte Carlo budget must be >= {MIN_MC}, got {n}")
        rng = np.random.default_rng(0) if rng is None else rng
        X = value_fn(BallSampler(norm, 1.0, dim).sample(rng, n))
        val = oce(X, eta, divergence)
        if divergence.kind is DivergenceKind.KL:
            w = np.exp((X - X.max()) / eta)
            se = eta * w.std(ddof=1) / (w.mean() * math.sqrt(n))  # delta method
        else:
            se = float("nan")
        return val, se
    if divergence.kind is DivergenceKind.KL:
        acc = _LSE()
        for B in _grid_chunks(dim, norm, grid):
            acc.add(value_fn(B) / eta)
        return eta * acc.value(), 0.0
    X = np.concatenate([value_fn(B) for B in _grid_chunks(dim, norm, grid)])
    return oce(X, eta, divergence), 0.0


def _atoms(loss, atoms):
    atoms = default_atoms(loss.dim) if atoms is None else np.atleast_2d(np.asarray(atoms, dtype=float))
    if atoms.shape[1] != loss.dim:
        raise ParameterError(f"atoms have dim {atoms.shape[1]}, loss expects {loss.dim}")
    return atoms


def _check(rho, eta=None):
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if eta is not None and not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")


def regularizer_gap(loss: SmoothTestLoss, atoms=None, rho=0.1, eta=0.1, divergence=None, norm="linf",
                    grid=DEFAULT_GRID, mc_samples=None, rng=None, return_stderr=False):
    """``eps``: regularized robust loss minus the plain empirical loss."""
    _check(rho, eta)
    div = make_divergence("kl") if divergence is None else divergence
    atoms = _atoms(loss, atoms)
    vals, ses = [], []
    for z in atoms:
        v, se = _ball_oce(lambda B: loss.increment(z, rho * B), loss.dim, Norm(norm), eta, div, grid, mc_samples, rng)
        vals.append(v)
        ses.append(se)
    val = float(np.mean(vals))
    se = float(np.sqrt(np.sum(np.square(ses))) / len(ses))
    return (val, se) if return_stderr else val


def _projected_oce(loss, atoms, rho, level, div, norm, grid, mc_samples, rng):
    vals, ses = [], []
    for g in loss.grad(atoms):
        v, se = _ball_oce(lambda B: B @ g, loss.dim, Norm(norm), level, div, grid, mc_samples, rng)
        vals.append(v)
        ses.append(se)
    return rho * float(np.mean(vals)), rho * float(np.sqrt(np.sum(np.square(ses))) / len(ses))


def surrogate_gap(loss: SmoothTestLoss, atoms=None, rho=0.1, eta=0.1, divergence=None, norm="linf",
                  grid=DEFAULT_GRID, mc_samples=None, rng=None, return_stderr=False):
    """First-order surrogate ``rho * E_z OCE_{eta/rho}(grad f(z).b)``."""
    _check(rho, eta)
    div = make_divergence("kl") if divergence is None else divergence
    out = _projected_oce(loss, _atoms(loss, atoms), rho, eta / rho, div, norm, grid, mc_samples, rng)
    return out if return_stderr else out[0]


def oce_regularizer(loss: SmoothTestLoss, atoms=None, rho=0.1, C=1.0, divergence=None, norm="linf",
                    grid=DEFAULT_GRID, mc_samples=None, rng=None, return_stderr=False):
    """``R1 = rho * E_z OCE_{1/C}(grad f(z).b)``."""
    _check(rho)
    if not C > 0:
        raise ParameterError(f"C must be positive, got {C}")
    div = make_divergence("kl") if divergence is None else divergence
    out = _projected_oce(loss, _atoms(loss, atoms), rho, 1.0 / C, div, norm, grid, mc_samples, rng)
    return out if return_stderr else out[0]


def variation_regularizer(loss: SmoothTestLoss, atoms=None, rho=0.1, norm="linf") -> float:
    """``R2 = rho * E_z ||grad f(z)||_*``."""
    _check(rho)
    return rho * float(np.mean(dual_norm(loss.grad(_atoms(loss, atoms)), Norm(norm))))


def variance_regularizer(loss: SmoothTestLoss, atoms=None, rho=0.1, eta=0.1, divergence=None, norm="linf",
                         mc_samples=None, rng=None) -> float:
    """``R3 = rho**2 / (2 eta phi''(1)) * E_z Var_b(grad f(z).b)``.

    The variance is ``c ||g||_2**2`` with ``c`` the ball's second-moment
    scale (1/3 for the cube, 1/(d+2) for the Euclidean ball) unless a Monte
    Carlo budget is given.
    """
    _check(rho, eta)
    div = make_divergence("kl") if divergence is None else divergence
    curv = div.phi_second_at_one
    if not (np.isfinite(curv) and curv > 0):
        raise UnsupportedDivergenceError(f"{div.name} has no positive phi''(1); the variance regime needs one")
    G = loss.grad(_atoms(loss, atoms))
    if mc_samples is None:
        var = ball_covariance(loss.dim, norm) * np.einsum("ij,ij->i", G, G)
    else:
        if mc_samples < MIN_MC:
            raise ParameterError(f"Monte Carlo budget must be >= {MIN_MC}, got {mc_samples}")
        rng = np.random.default_rng(0) if rng is None else rng
        B = BallSampler(norm, 1.0, loss.dim).sample(rng, int(mc_samples))
        var = np.array([np.var(B @ g, ddof=1) for g in G])
    return rho**2 / (2.0 * eta * curv) * float(np.mean(var))


# -- scaling study ----------------------------------------------------------------


class RegimeKind(str, enum.Enum):
    INTERP = "interp"
    VARIATION = "variation"
    VARIANCE = "variance"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    C: Optional[float] = None

    def eta(self, rho: float) -> float:
        if self.kind is RegimeKind.INTERP:
            return rho / self.C
        if self.kind is RegimeKind.VARIATION:
            return rho**2
        return math.sqrt(rho)

    @property
    def label(self) -> str:
        return f"interp:{self.C:g}" if self.kind is RegimeKind.INTERP else self.kind.value


def parse_regime(text: str) -> Regime:
    text = text.strip().lower()
    if text.startswith("interp"):
        _, _, c = text.partition(":")
        try:
            C = float(c) if c else 1.0
        except ValueError:
            raise ParameterError(f"bad interp constant in {text!r}") from None
        if not C > 0:
            raise ParameterError(f"interp constant must be positive, got {C}")
        return Regime(RegimeKind.INTERP, C)
    try:
        return Regime(RegimeKind(text))
    except ValueError:
        raise ParameterError(f"unknown regime {text!r}; choose interp:C, variation or variance") from None


@dataclass(frozen=True, eq=False)
class ScalingReport:
    regime: Regime
    k: np.ndarray
    rho: np.ndarray
    eta: np.ndarray
    gap: np.ndarray
    reg: np.ndarray
    rel_err: np.ndarray
    stderr: np.ndarray
    surrogate: np.ndarray = field(default=None)

    def rows(self):
        for i in range(len(self.k)):
            yield dict(k=int(self.k[i]), rho=self.rho[i], eta=self.eta[i], gap=self.gap[i],
                       reg=self.reg[i], rel_err=self.rel_err[i], stderr=self.stderr[i])


def run_scaling_study(loss: SmoothTestLoss, regime, steps: int = 8, atoms=None, divergence=None,
                      norm="linf", grid=DEFAULT_GRID, mc_samples=None, rng=None) -> ScalingReport:
    """``rho_k = 2**-k`` for ``k = 1..steps`` with ``eta_k`` set by the regime.

    The regime picks the regularizer: interp -> R1 (with its C), variation
    -> R2, variance -> R3. ``rel_err = |eps - R| / rho``.
    """
    regime = parse_regime(regime) if isinstance(regime, str) else regime
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    div = make_divergence("kl") if divergence is None else divergence
    atoms = _atoms(loss, atoms)
    ks = np.arange(1, steps + 1)
    rhos = 2.0 ** -ks.astype(float)
    etas = np.array([regime.eta(r) for r in rhos])
    gaps, regs, ses, surs = (np.empty(steps) for _ in range(4))
    for i, (rho, eta) in enumerate(zip(rhos, etas)):
        gaps[i], ses[i] = regularizer_gap(loss, atoms, rho, eta, div, norm, grid, mc_samples, rng, return_stderr=True)
        if regime.kind is RegimeKind.INTERP:
            regs[i] = oce_regularizer(loss, atoms, rho, regime.C, div, norm, grid, mc_samples, rng)
        elif regime.kind is RegimeKind.VARIATION:
            regs[i] = variation_regularizer(loss, atoms, rho, norm)
        else:
            regs[i] = variance_regularizer(loss, atoms, rho, eta, div, norm)
        surs[i] = surrogate_gap(loss, atoms, rho, eta, div, norm, grid, mc_samples, rng)
    return ScalingReport(regime, ks, rhos, etas, gaps, regs, np.abs(gaps - regs) / rhos, ses / rhos, surs)
