"""
Two small applications: robust Q-learning and contextual pricing
================================================================

1. Q-learning in a 5x5 gridworld. The agent walks from S to G past a row of
   hazards. The robust update replaces max_a' Q(s', a') with a soft minimum
   over next states within one cell of s'. The learned policy then keeps
   its distance from the hazards, and that pays off once the test world
   adds slip, wind or a corridor penalty.

2. Pricing. A random-feature linear price w = theta . phi(x) is learned
   from covariates with noisy demand parameters. The regularized robust fit
   perturbs the covariates inside an L2 ball. J compares its true risk with
   ERM's (J > 0 means better).

Run:  python3 demos/05_applications.py     (about a minute)
"""

import numpy as np

from phidro.apps import (
    BRIDGE,
    PricingConfig,
    evaluate_policy,
    grid_world,
    perturbed_variants,
    run_pricing_trials,
    run_q_learning,
    value_iteration,
)

mdp = grid_world()
print(BRIDGE, "\n")
Qs = value_iteration(mdp)

###############################################################################
# Train both agents for 5e4 environment steps on the nominal world, then
# evaluate their greedy policies on each world.

worlds = {"nominal": mdp, **perturbed_variants()}
agents = {
    "regular": run_q_learning(mdp, 10**9, max_steps=50_000, seed=1).qtable,
    "robust": run_q_learning(mdp, 10**9, max_steps=50_000, robust=True, eta=0.5, rho=1, seed=1).qtable,
    "optimal (VI)": Qs,
}
print(f"{'':14s}" + "".join(f"{w:>18s}" for w in worlds))
for name, q in agents.items():
    cells = [evaluate_policy(q, w, 400, seed=0) for w in worlds.values()]
    print(f"{name:14s}" + "".join(f"{m:>10.4f} ±{se:.4f}" for m, se in cells))

###############################################################################
# Pricing: ten trials here; the acceptance suite runs fifty. The effect is
# small relative to its trial-to-trial spread.

res = run_pricing_trials(10, 100, 50, PricingConfig(rho=0.45, eta=0.9), seed=0)
J = np.array([r.J for r in res if r.J is not None])
print(f"\npricing: J per trial {np.round(J, 4)}")
print(f"mean J {J.mean():+.4f} (SE {J.std(ddof=1) / np.sqrt(J.size):.4f})")
