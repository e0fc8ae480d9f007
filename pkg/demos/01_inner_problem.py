"""
The penalized inner problem, one divergence at a time
=====================================================

Given losses f_1..f_m at m candidate perturbations, the adversary picks a
distribution gamma on them, paying eta * E[phi(m * gamma)] for straying from
uniform. This script solves that problem for every built-in divergence and
shows how the worst-case value moves between the average (large eta) and
the maximum (small eta).

Run:  python3 demos/01_inner_problem.py
"""

import numpy as np

from phidro.divergence import make_divergence
from phidro.inner import InnerProblem, solve

f = np.array([0.2, 1.0, 1.1, 3.0, 2.4, -0.5])
print(f"losses f = {f}   mean {f.mean():.3f}   max {f.max():.3f}\n")

###############################################################################
# KL gives softmax weights. Shrinking eta sharpens them toward the argmax.

kl = make_divergence("kl")
for eta in (10.0, 1.0, 0.1, 0.01):
    sol = solve(InnerProblem(f, eta, kl))
    print(f"KL  eta={eta:<5}  value {sol.value:7.4f}  gamma {np.round(sol.gamma, 3)}  ({sol.method.value})")

###############################################################################
# The quadratic (chi-square) divergence has no closed form; bisection on the
# dual multiplier finds it. Its weights are exactly zero below the threshold mu.

quad = make_divergence("quadratic")
print()
for eta in (10.0, 1.0, 0.1, 0.01):
    sol = solve(InnerProblem(f, eta, quad))
    print(f"Q   eta={eta:<5}  value {sol.value:7.4f}  mu {sol.mu:7.4f}  support {np.flatnonzero(sol.gamma)}"
          f"  iterations {sol.iterations}")

###############################################################################
# The indicator divergence caps each weight at 1/(alpha m). Its value is the
# average of the worst alpha-fraction (CVaR) and does not depend on eta, so
# it never reaches the maximum for alpha < 1.

print()
for alpha in (1.0, 0.5, 1 / 6):
    div = make_divergence("indicator", alpha)
    vals = [solve(InnerProblem(f, eta, div)).value for eta in (1.0, 1e-6)]
    print(f"indicator alpha={alpha:.3f}  value {vals[0]:.4f} (eta=1)  {vals[1]:.4f} (eta=1e-6)")

###############################################################################
# Absolute and hinge spread mass uniformly over the near-maximal set.

print()
for kind in ("absolute", "hinge"):
    sol = solve(InnerProblem(f, 0.5, make_divergence(kind)))
    print(f"{kind:<8} eta=0.5  value {sol.value:.4f}  gamma {np.round(sol.gamma, 3)}")
