"""phi-divergence generators: evaluation, convex conjugate and derivative inverse.

Five generators are built in. All of them satisfy ``phi(1) = 0`` and
``phi(x) = inf`` for ``x < 0``:

========== ============================== ==========================================
kind       phi(x), x >= 0                 conjugate phi*(s) = sup_x {s x - phi(x)}
========== ============================== ==========================================
kl         x log x - x + 1                exp(s) - 1
quadratic  (x**2 - 1) / 2                 max(s, 0)**2 / 2 + 1/2
indicator  0 on [0, 1/alpha], inf beyond  max(s, 0) / alpha
absolute   |x - 1|                        max(s, -1) for s <= 1, inf for s > 1
hinge      max(x - 1, 0)                  max(s, 0)  for s <= 1, inf for s > 1
========== ============================== ==========================================

The scaled conjugate used by the dual problems is ``(eta*phi)*(t) = eta *
phi*(t / eta)``; see :meth:`DivergenceSpec.scaled_conjugate`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, UnsupportedDivergenceError

__all__ = [
    "DivergenceKind",
    "DivergenceSpec",
    "make_divergence",
    "parse_divergence",
    "eval_conjugate",
    "eval_inv_phi_prime",
    "DEFAULT_RATIO_RANGE",
]

# Ratio range over which KL is treated as strongly convex: phi''(x) = 1/x >= 1/r_max.
DEFAULT_RATIO_RANGE = (1e-6, 1e6)


class DivergenceKind(str, enum.Enum):
    KL = "kl"
    QUADRATIC = "quadratic"
    INDICATOR = "indicator"
    ABSOLUTE = "absolute"
    HINGE = "hinge"


@dataclass(frozen=True)
class DivergenceSpec:
    """A phi-divergence generator together with the constants solvers need.

    Attributes
    ----------
    kind : DivergenceKind
    alpha : float or None
        Risk level in (0, 1]; only used by the indicator generator.
    """

    kind: DivergenceKind
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind is DivergenceKind.INDICATOR:
            a = self.alpha
            if a is None or not (0.0 < a <= 1.0) or not math.isfinite(a):
                raise ParameterError(f"indicator divergence needs alpha in (0, 1], got {a!r}")
        elif self.alpha is not None:
            raise ParameterError(f"alpha is only meaningful for the indicator divergence, not {self.kind.value}")

    # -- constants -----------------------------------------------------------------

    @property
    def kappa(self) -> float:
        """Global strong-convexity modulus of phi on [0, inf) (0 when there is none)."""
        return 1.0 if self.kind is DivergenceKind.QUADRATIC else 0.0

    @property
    def globally_strongly_convex(self) -> bool:
        return self.kind is DivergenceKind.QUADRATIC

    def effective_kappa(self, ratio_range=DEFAULT_RATIO_RANGE) -> float:
        """Strong-convexity modulus over a bounded likelihood-ratio range.

        KL has ``phi''(x) = 1/x`` so it is ``1/r_max``-strongly convex on
        ``[r_min, r_max]``. Generators without curvature return 0.
        """
        if self.kind is DivergenceKind.KL:
            r_min, r_max = ratio_range
            if not (0 < r_min < r_max):
                raise ParameterError(f"invalid ratio range {ratio_range!r}")
            return 1.0 / r_max
        return self.kappa

    @property
    def K(self) -> float:
        """lim_{s -> 0+} phi'(s); -inf for KL."""
        return {
            DivergenceKind.KL: -math.inf,
            DivergenceKind.QUADRATIC: 0.0,
            DivergenceKind.INDICATOR: 0.0,
            DivergenceKind.ABSOLUTE: -1.0,
            DivergenceKind.HINGE: 0.0,
        }[self.kind]

    @property
    def phi_second_at_one(self) -> float:
        if self.kind in (DivergenceKind.KL, DivergenceKind.QUADRATIC):
            return 1.0
        if self.kind is DivergenceKind.INDICATOR and self.alpha < 1.0:
            return 0.0
        return math.inf

    @property
    def phi_prime_at_one(self) -> float:
        # Only meaningful for the differentiable generators.
        return {DivergenceKind.KL: 0.0, DivergenceKind.QUADRATIC: 1.0}.get(self.kind, math.nan)

    @property
    def differentiable(self) -> bool:
        return self.kind in (DivergenceKind.KL, DivergenceKind.QUADRATIC)

    @property
    def name(self) -> str:
        if self.kind is DivergenceKind.INDICATOR:
            return f"indicator:{self.alpha!r}"
        return self.kind.value

    # -- evaluation ------------------------------------------------------------------

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, np.inf)
        ok = x >= 0
        xs = x[ok]
        k = self.kind
        if k is DivergenceKind.KL:
            with np.errstate(divide="ignore", invalid="ignore"):
                xlogx = np.where(xs > 0, xs * np.log(np.where(xs > 0, xs, 1.0)), 0.0)
            out[ok] = xlogx - xs + 1.0
        elif k is DivergenceKind.QUADRATIC:
            out[ok] = 0.5 * (xs * xs - 1.0)
        elif k is DivergenceKind.INDICATOR:
            out[ok] = np.where(xs <= 1.0 / self.alpha, 0.0, np.inf)
        elif k is DivergenceKind.ABSOLUTE:
            out[ok] = np.abs(xs - 1.0)
        else:
            out[ok] = np.maximum(xs - 1.0, 0.0)
        return out[()] if out.ndim == 0 else out

    def phi_prime(self, x):
        """Derivative of phi on the open domain (right derivative at kinks)."""
        x = np.asarray(x, dtype=float)
        k = self.kind
        with np.errstate(divide="ignore", invalid="ignore"):
            if k is DivergenceKind.KL:
                out = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), -np.inf)
            elif k is DivergenceKind.QUADRATIC:
                out = x.copy()
            elif k is DivergenceKind.INDICATOR:
                out = np.where(x < 1.0 / self.alpha, 0.0, np.inf)
            elif k is DivergenceKind.ABSOLUTE:
                out = np.where(x < 1.0, -1.0, 1.0)
            else:
                out = np.where(x < 1.0, 0.0, 1.0)
        out = np.where(x < 0, np.nan, out)
        return out[()] if out.ndim == 0 else out

    def conjugate(self, s):
        s = np.asarray(s, dtype=float)
        k = self.kind
        if k is DivergenceKind.KL:
            with np.errstate(over="ignore"):
                out = np.expm1(s)
        elif k is DivergenceKind.QUADRATIC:
            sp = np.maximum(s, 0.0)
            out = 0.5 * sp * sp + 0.5
        elif k is DivergenceKind.INDICATOR:
            out = np.maximum(s, 0.0) / self.alpha
        elif k is DivergenceKind.ABSOLUTE:
            out = np.where(s > 1.0, np.inf, np.maximum(s, -1.0))
        else:
            out = np.where(s > 1.0, np.inf, np.maximum(s, 0.0))
        return out[()] if out.ndim == 0 else out

    def scaled_conjugate(self, t, eta):
        """(eta*phi)*(t) = eta * phi*(t / eta)."""
        return eta * self.conjugate(np.asarray(t, dtype=float) / eta)

    def inv_phi_prime(self, s):
        """(phi')^{-1}(s) restricted to x >= 0; arguments at or below K map to 0."""
        if not self.differentiable:
            raise UnsupportedDivergenceError(
                f"(phi')^-1 is not defined for the {self.kind.value} divergence; use the closed form"
            )
        s = np.asarray(s, dtype=float)
        if self.kind is DivergenceKind.KL:
            with np.errstate(over="ignore"):
                out = np.exp(s)
        else:
            out = np.maximum(s, 0.0)
        return out[()] if out.ndim == 0 else out


def make_divergence(kind, alpha: Optional[float] = None) -> DivergenceSpec:
    """Build a :class:`DivergenceSpec` from a kind name (``"kl"``, ...) or enum member."""
    try:
        kind = DivergenceKind(kind.lower() if isinstance(kind, str) else kind)
    except ValueError:
        raise ParameterError(
            f"unknown divergence {kind!r}; expected one of {[k.value for k in DivergenceKind]}"
        ) from None
    if kind is DivergenceKind.INDICATOR and alpha is None:
        alpha = 1.0
    return DivergenceSpec(kind, float(alpha) if alpha is not None else None)


def parse_divergence(text: str) -> DivergenceSpec:
    """Parse ``kl``, ``quadratic``, ``absolute``, ``hinge``, ``indicator:0.5`` or ``indicator:alpha=0.5``."""
    text = text.strip()
    name, _, arg = text.partition(":")
    alpha = None
    if arg:
        arg = arg.strip()
        if arg.startswith("alpha="):
            arg = arg[len("alpha="):]
        try:
            alpha = float(arg)
        except ValueError:
            raise ParameterError(f"cannot parse alpha in divergence {text!r}") from None
    return make_divergence(name.strip(), alpha)


def eval_conjugate(spec: DivergenceSpec, s):
    return spec.conjugate(s)


def eval_inv_phi_prime(spec: DivergenceSpec, s):
    return spec.inv_phi_prime(s)
