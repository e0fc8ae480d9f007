"""Worst-case densities on a discretised 1-D perturbation interval.

The continuous reference measure (uniform on ``[z - rho, z + rho]``) is
replaced by equal weights on the midpoints of a regular grid; the discrete
inner problem is solved on the loss values there and its weights are turned
into a per-unit-length density.

Also provides the seeded 1-D toy landscape ``f(z) = g(z)**2`` with ``g`` a
small softplus/sigmoid network acting on the basis expansion
``(z, sqrt|z|, z**2, sin z, cos z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .divergence import DivergenceKind, DivergenceSpec
from .errors import ParameterError, ResolutionError
from .inner import InnerProblem, solve

__all__ = [
    "SplitMix64",
    "Grid1D",
    "ToyLandscape",
    "WorstCaseDensity",
    "make_grid",
    "toy_loss",
    "worst_case_density",
    "density_concentration",
]

DEFAULT_GRID_POINTS = 10_000

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    """SplitMix64 generator with a Box-Muller Gaussian transform.

    Output ``k`` (k = 1, 2, ...) is ``mix(seed + k * 0x9E3779B97F4A7C15 mod 2**64)``
    where ``mix`` is the standard SplitMix64 finaliser (shifts 30/27/31,
    multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).

    Uniforms take the top 53 bits: ``u = (x >> 11) * 2**-53`` in [0, 1).
    Gaussians consume outputs in pairs ``(x1, x2)``:
    ``r = sqrt(-2 log(1 - u1))``, ``n1 = r cos(2 pi u2)``, ``n2 = r sin(2 pi u2)``,
    emitted in that order.
    """

    def __init__(self, seed: int):
        self.state = np.uint64(int(seed) % 2**64)
        self._count = 0

    def next_uint64(self, n: int) -> np.ndarray:
        k = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            z = self.state + k * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        out = np.column_stack([r * np.cos(ang), r * np.sin(ang)]).ravel()
        return out[:n]


@dataclass(frozen=True)
class Grid1D:
    """``n`` cell midpoints of ``[lo, hi]``; every point carries length ``weight``."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (self.n >= 2):
            raise ParameterError(f"grid needs at least 2 points, got {self.n}")
        if not (self.lo < self.hi):
            raise ParameterError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def weight(self) -> float:
        return (self.hi - self.lo) / self.n

    @property
    def points(self) -> np.ndarray:
        return self.lo + (np.arange(self.n) + 0.5) * self.weight


def make_grid(center: float = 0.0, rho: float = 5.0, n: int = DEFAULT_GRID_POINTS) -> Grid1D:
    return Grid1D(center - rho, center + rho, n)


@dataclass(frozen=True, eq=False)
class ToyLandscape:
    """Seeded weights of ``g(z) = w4 . sigmoid(W3 sp(W2 sp(W1 basis(z))))``.

    Shapes: W1 (512, 5) with N(0, 0.25) entries (std 0.5), W2 (512, 512),
    W3 (10, 512) and w4 (10,) with N(0, 1) entries, drawn in that order
    (row-major) from :class:`SplitMix64`.
    """

    seed: int
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    W4: np.ndarray

    @classmethod
    def from_seed(cls, seed: int, hidden: int = 512, width: int = 10) -> "ToyLandscape":
        gen = SplitMix64(seed)
        W1 = 0.5 * gen.normal(hidden * 5).reshape(hidden, 5)
        W2 = gen.normal(hidden * hidden).reshape(hidden, hidden)
        W3 = gen.normal(width * hidden).reshape(width, hidden)
        W4 = gen.normal(width)
        for w in (W1, W2, W3, W4):
            w.setflags(write=False)
        return cls(int(seed), W1, W2, W3, W4)

    def g(self, z):
        z = np.asarray(z, dtype=float)
        flat = z.ravel()
        basis = np.stack([flat, np.sqrt(np.abs(flat)), flat**2, np.sin(flat), np.cos(flat)])
        h = np.logaddexp(0.0, self.W1 @ basis)
        h = np.logaddexp(0.0, self.W2 @ h)
        h = 0.5 * (1.0 + np.tanh(0.5 * (self.W3 @ h)))  # sigmoid
        out = self.W4 @ h
        return out.reshape(z.shape) if z.ndim else float(out[0])

    def __call__(self, z):
        return toy_loss(self, z)


def toy_loss(landscape: ToyLandscape, z):
    """f(z) = g(z)**2 for scalar or array ``z``."""
    g = landscape.g(z)
    return g * g


@dataclass(frozen=True, eq=False)
class WorstCaseDensity:
    grid: Grid1D
    density: np.ndarray
    divergence: DivergenceSpec
    eta: Optional[float]
    alpha: Optional[float]
    loss_values: np.ndarray
    mu: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.density) * self.grid.weight)


def worst_case_density(
    loss: Callable,
    center=0.0,
    rho: float = 5.0,
    divergence: DivergenceSpec = None,
    eta: float = 1.0,
    grid: Optional[Grid1D] = None,
    atom_weights: Optional[Sequence[float]] = None,
    epsilon: float = 1e-12,
) -> WorstCaseDensity:
    """Density of the worst-case distribution around one or several atoms.

    For each atom ``z`` the inner problem is solved on the grid points inside
    ``[z - rho, z + rho]`` and the weights become ``gamma_j / cell_width``.
    Several atoms are mixed with ``atom_weights`` (uniform by default).
    """
    if divergence is None:
        raise ParameterError("a divergence is required")
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho!r}")
    atoms = np.atleast_1d(np.asarray(center, dtype=float))
    if atom_weights is None:
        aw = np.full(atoms.size, 1.0 / atoms.size)
    else:
        aw = np.asarray(atom_weights, dtype=float)
        if aw.shape != atoms.shape or np.any(aw < 0) or not math.isclose(aw.sum(), 1.0, rel_tol=1e-9):
            raise ParameterError("atom weights must be a probability vector matching the atoms")
    if grid is None:
        grid = Grid1D(atoms.min() - rho, atoms.max() + rho, DEFAULT_GRID_POINTS)
    tol = 1e-9 * max(1.0, rho)
    if grid.lo > atoms.min() - rho + tol or grid.hi < atoms.max() + rho - tol:
        raise ParameterError("grid does not cover every perturbation interval")

    pts = grid.points
    values = np.asarray(loss(pts), dtype=float)
    density = np.zeros(grid.n)
    mus = np.empty(atoms.size)
    for a, (z, w) in enumerate(zip(atoms, aw)):
        inside = np.abs(pts - z) <= rho + tol
        m = int(inside.sum())
        if divergence.kind is DivergenceKind.INDICATOR and divergence.alpha * m < 1:
            raise ResolutionError(
                f"alpha*m = {divergence.alpha * m:.3g} < 1: grid too coarse for the indicator boundary"
            )
        sol = solve(InnerProblem(values[inside], eta, divergence), epsilon)
        density[inside] += w * sol.gamma / grid.weight
        mus[a] = sol.mu
    return WorstCaseDensity(
        grid=grid,
        density=density,
        divergence=divergence,
        eta=None if divergence.kind is DivergenceKind.INDICATOR else float(eta),
        alpha=divergence.alpha,
        loss_values=values,
        mu=mus,
    )


def density_concentration(density, loss, rho_neighborhood: float) -> float:
    """Mass of ``density`` within ``rho_neighborhood`` of the grid argmax of ``loss``.

    ``density`` is a :class:`WorstCaseDensity`; ``loss`` is either a callable
    or the loss values on the density grid.
    """
    grid = density.grid
    pts = grid.points
    values = np.asarray(loss(pts) if callable(loss) else loss, dtype=float)
    center = pts[int(np.argmax(values))]
    near = np.abs(pts - center) <= rho_neighborhood
    return float(np.sum(density.density[near]) * grid.weight)
