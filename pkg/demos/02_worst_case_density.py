"""
Where does the adversary put its mass?
======================================

A one-dimensional loss landscape (a random 512-unit tanh network, seed 7)
is perturbed within a radius-5 interval around the origin. For each
divergence we compute the worst-case density on a 10^4-point grid. With
matplotlib installed, the figure is written to demos/worst_case_density.png.

Run:  python3 demos/02_worst_case_density.py
"""

import numpy as np

from phidro.density import ToyLandscape, density_concentration, make_grid, worst_case_density
from phidro.divergence import make_divergence

land = ToyLandscape.from_seed(7)
grid = make_grid(0.0, 5.0, 10_000)
x = grid.points
f = land(x)
print(f"landscape: max {f.max():.3f} at omega = {x[np.argmax(f)]:.3f}, min {f.min():.3f}")

###############################################################################
# KL: a Gibbs density exp(f / eta). The mass within +-0.5 of the argmax jumps
# as eta drops from 10 to 1, then stalls near 0.72 and even dips slightly.
# f stays within 0.03 of its maximum on roughly [1.17, 2.04], and the argmax
# (1.91) sits near that stretch's right end. The window [1.41, 2.41] misses its
# left part, and small eta keeps pulling mass there.

curves = {}
for eta in (10.0, 1.0, 0.1, 0.01):
    d = worst_case_density(land, 0.0, 5.0, make_divergence("kl"), eta, grid)
    curves[f"KL eta={eta}"] = d.density
    print(f"KL eta={eta:<5} concentration {density_concentration(d, f, 0.5):.4f}  mass {d.mass:.6f}")

###############################################################################
# Quadratic: sparse. Mass sits only where f exceeds the dual threshold mu.

d = worst_case_density(land, 0.0, 5.0, make_divergence("quadratic"), 0.05, grid)
curves["quadratic eta=0.05"] = d.density
print(f"quadratic: support is {np.mean(d.density > 0):.1%} of the interval, mu = {d.mu[0]:.4f}")

###############################################################################
# Indicator: two flat levels, 1/(alpha * 10) on the top alpha-fraction and 0 elsewhere.

for alpha in (1.0, 0.3):
    d = worst_case_density(land, 0.0, 5.0, make_divergence("indicator", alpha), 1.0, grid)
    curves[f"indicator alpha={alpha}"] = d.density
    print(f"indicator alpha={alpha}: density levels {np.unique(np.round(d.density, 6))[:4]}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping the figure")
else:
    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    axes[0].plot(x, f, color="k", lw=1)
    axes[0].set_ylabel("f(omega)")
    for label, dens in curves.items():
        axes[1].plot(x, dens, lw=1, label=label)
    axes[1].set_yscale("symlog", linthresh=1e-3)
    axes[1].set_xlabel("omega")
    axes[1].set_ylabel("density")
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig("demos/worst_case_density.png", dpi=110)
    print("wrote demos/worst_case_density.png")
