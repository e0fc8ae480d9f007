"""Desk-scale applications: robust tabular Q-learning and contextual pricing."""

from .pricing import (
    PricingConfig,
    PricingInstance,
    PricingModel,
    PricingResult,
    improvement,
    make_pricing_instance,
    pricing_loss,
    run_pricing_trials,
    solve_pricing,
    true_risk_quadratic,
    trust_region_min,
)
from .rl import (
    BRIDGE,
    CLIFF,
    GridMDP,
    QTable,
    cliff_world,
    evaluate_policy,
    grid_world,
    perturbed_variants,
    robust_q_update,
    run_q_learning,
    soft_target,
    value_iteration,
)

__all__ = [
    "GridMDP",
    "QTable",
    "BRIDGE",
    "CLIFF",
    "grid_world",
    "cliff_world",
    "perturbed_variants",
    "soft_target",
    "robust_q_update",
    "run_q_learning",
    "value_iteration",
    "evaluate_policy",
    "PricingInstance",
    "PricingModel",
    "PricingConfig",
    "PricingResult",
    "make_pricing_instance",
    "pricing_loss",
    "trust_region_min",
    "true_risk_quadratic",
    "improvement",
    "solve_pricing",
    "run_pricing_trials",
]
