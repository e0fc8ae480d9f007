"""Command-line interface: one binary, one subcommand per component.

Every subcommand accepts ``--config FILE`` (flat ``key = value`` lines,
``#`` comments); command-line flags override file values and unknown keys
are rejected. Each output embeds the fully resolved configuration.

Exit codes: 0 success, 2 usage / parameter error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import NumericalError, PhidroError, ResolutionError
from .output import format_value, write_csv, write_json

log = logging.getLogger("phidro")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


# -- argument types ----------------------------------------------------------------


def _positive(kind=float):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {text!r}") from None
        if not v > 0 or (kind is float and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v

    conv.__name__ = f"positive {kind.__name__}"
    return conv


def _nonneg(kind=float):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {text!r}") from None
        if not v >= 0:
            raise argparse.ArgumentTypeError(f"must be >= 0, got {text!r}")
        return v

    conv.__name__ = f"non-negative {kind.__name__}"
    return conv


def _float_list(text):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _divergence(text):
    from .divergence import parse_divergence

    try:
        return parse_divergence(str(text))
    except PhidroError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _div_name(spec) -> str:
    return spec.name


# -- config files ------------------------------------------------------------------


ALIASES = {"dims": "dim"}


def read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{n}: expected 'key = value', got {raw.strip()!r}")
            key = key.strip().replace("-", "_")
            out[ALIASES.get(key, key)] = value.strip()
    return out


# -- subcommand registry -----------------------------------------------------------

COMMANDS: dict = {}


def command(name: str, help: str):
    def deco(fn):
        COMMANDS[name] = (fn, help)
        return fn

    return deco


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat 'key = value' file; flags override its values")
    p.add_argument("--seed", type=int, default=0, help="master seed (integer)")
    p.add_argument("--threads", type=_positive(int), default=None,
                   help="upper bound on BLAS/OpenMP threads (default: library default)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format of --out")
    p.add_argument("--out", default=None, help="output file (default: standard output)")


REQUIRED: dict = {}


def _inner_args(p):
    p.add_argument("--values", type=_float_list, default=None, help="loss values f1,f2,... (required)")
    p.add_argument("--eta", type=_positive(), default=1.0, help="regularization strength eta > 0")
    p.add_argument("--divergence", type=_divergence, default="kl",
                   help="kl | quadratic | indicator:alpha | absolute | hinge")
    p.add_argument("--eps", type=_positive(), default=1e-8, help="bisection tolerance on the dual value")
    p.add_argument("--method", choices=("auto", "bisection", "closed_form"), default="auto",
                   help="solver; auto = closed form where one exists")
    REQUIRED["inner-solve"] = ["values"]


def _density_args(p):
    p.add_argument("--divergence", type=_divergence, default="kl", help="divergence generator")
    p.add_argument("--eta", type=_positive(), default=1.0, help="eta > 0 (ignored by indicator)")
    p.add_argument("--rho", type=_positive(), default=5.0, help="perturbation radius around the atom")
    p.add_argument("--center", type=float, default=0.0, help="atom location")
    p.add_argument("--grid", type=_positive(int), default=10_000, help="number of grid cells")
    p.add_argument("--landscape-out", default=None, help="also write the loss curve (omega,f)")
    p.set_defaults(seed=7)


def _estimator_args(p):
    p.add_argument("--scheme", choices=("sg", "rtmlmc"), default="rtmlmc", help="gradient estimator")
    p.add_argument("--L", type=_nonneg(int), default=5, help="maximal level (2^L samples at the top)")
    p.add_argument("--draws", type=_positive(int), default=100_000, help="independent estimator draws")
    p.add_argument("--level-draws", type=_positive(int), default=20_000,
                   help="draws per level for the per-level moment table")
    p.add_argument("--eta", type=_positive(), default=0.5, help="eta > 0")
    p.add_argument("--rho", type=_positive(), default=0.5, help="ball radius")
    p.add_argument("--norm", choices=("l2", "linf"), default="l2", help="ball norm")
    p.add_argument("--divergence", type=_divergence, default="kl", help="divergence generator")
    p.add_argument("--data", default=None, help="CSV dataset (default: three 1-D points)")
    p.add_argument("--theta", type=_float_list, default=None, help="parameter vector (default 0.3,-0.2)")


def _train_args(p):
    p.add_argument("--model", choices=("linear", "logistic", "mlp1"), default="logistic", help="model kind")
    p.add_argument("--hidden", type=_positive(int), default=16, help="mlp1 hidden width")
    p.add_argument("--classes", type=_positive(int), default=2, help="mlp1 number of classes")
    p.add_argument("--dim", type=_positive(int), default=None, help="input dimension (checked against data)")
    p.add_argument("--data", default="blobs", help="CSV path, or 'blobs' / 'moons' for synthetic data")
    p.add_argument("--n", type=_positive(int), default=400, help="synthetic sample count")
    p.add_argument("--divergence", type=_divergence, default="kl", help="divergence generator")
    p.add_argument("--eta", type=_positive(), default=None, help="eta > 0 (default 2*rho)")
    p.add_argument("--rho", type=_positive(), default=0.1, help="ball radius")
    p.add_argument("--norm", choices=("l2", "linf"), default="l2", help="ball norm")
    p.add_argument("--scheme", choices=("sg", "rtmlmc"), default="rtmlmc", help="gradient estimator")
    p.add_argument("--L", type=_nonneg(int), default=3, help="maximal level")
    p.add_argument("--n-outer", type=_positive(int), default=8, help="estimator draws per iteration")
    p.add_argument("--T", type=_positive(int), default=500, help="iterations")
    p.add_argument("--step", type=_positive(), default=0.1, help="step size")
    p.add_argument("--radius", type=_positive(), default=math.inf, help="projection radius of the parameter ball")
    p.add_argument("--metrics-out", default=None,
                   help="metrics CSV (iter,objective_estimate,grad_norm,samples_cumulative); default --out or metrics.csv")
    p.add_argument("--theta-out", default="theta.json", help="parameter JSON")


def _attack_args(p):
    p.add_argument("--model", choices=("linear", "logistic", "mlp1"), default="logistic", help="model kind")
    p.add_argument("--hidden", type=_positive(int), default=16, help="mlp1 hidden width")
    p.add_argument("--classes", type=_positive(int), default=2, help="mlp1 number of classes")
    p.add_argument("--theta", default=None, help="theta.json written by 'train' (required)")
    p.add_argument("--which", choices=("theta", "theta_avg", "theta_random"), default="theta_avg",
                   help="iterate to evaluate")
    p.add_argument("--data", default="blobs", help="CSV path, or 'blobs' / 'moons'")
    p.add_argument("--n", type=_positive(int), default=2000, help="synthetic sample count")
    p.add_argument("--attack", choices=("pgm", "white_noise"), default="pgm", help="attack kind")
    p.add_argument("--norm", choices=("l2", "linf"), default="linf", help="attack norm")
    p.add_argument("--epsilon", type=_float_list, default=[0.0, 0.1, 0.2, 0.3],
                   help="attack radii (comma-separated)")
    p.add_argument("--steps", type=_positive(int), default=15, help="PGM steps")
    p.add_argument("--step-size", type=_positive(), default=0.1, help="PGM step size")
    REQUIRED["attack-eval"] = ["theta"]


def _regfx_args(p):
    p.add_argument("--loss", choices=("linear", "quadratic", "logsumexp"), default="quadratic", help="test loss")
    p.add_argument("--regime", default="variance", help="interp:C | variation | variance")
    p.add_argument("--steps", type=_positive(int), default=8, help="halvings rho_k = 2^-k, k=1..steps")
    p.add_argument("--divergence", type=_divergence, default="kl", help="divergence generator")
    p.add_argument("--norm", choices=("l2", "linf"), default="linf", help="perturbation ball norm")
    p.add_argument("--grid", type=_positive(int), default=4096, help="grid points per axis")
    p.add_argument("--mc-samples", type=_positive(int), default=None, help="use Monte Carlo with this many samples")


def _rl_args(p):
    p.add_argument("--robust", type=_bool, nargs="?", const=True, default=False, help="robust update")
    p.add_argument("--eta", type=_positive(), default=0.5, help="eta > 0 of the soft target")
    p.add_argument("--rho", type=_nonneg(), default=1.0, help="perturbation radius (cells, Chebyshev)")
    p.add_argument("--episodes", type=_positive(int), default=2000, help="training episodes")
    p.add_argument("--max-steps", type=_positive(int), default=None, help="cap on total environment steps")
    p.add_argument("--gamma", type=_positive(), default=0.5, help="discount in (0,1)")
    p.add_argument("--layout", choices=("bridge", "cliff"), default="bridge", help="gridworld layout")
    p.add_argument("--eval-episodes", type=_positive(int), default=200, help="episodes per evaluation MDP")
    p.add_argument("--eval-out", default=None, help="evaluation summary CSV (variant,mean,stderr)")


def _pricing_args(p):
    p.add_argument("--M", type=_positive(int), default=100, help="training covariates")
    p.add_argument("--m", type=_positive(int), default=50, help="conditional samples per covariate")
    p.add_argument("--rho", type=_positive(), default=0.45, help="covariate ball radius")
    p.add_argument("--eta", type=_positive(), default=0.9, help="eta > 0")
    p.add_argument("--trials", type=_positive(int), default=50, help="independent trials")
    p.add_argument("--radius", type=_positive(), default=1.0, help="parameter ball radius")
    p.add_argument("--T", type=_positive(int), default=500, help="SGD iterations")
    p.add_argument("--step", type=_positive(), default=0.05, help="SGD step size")
    p.add_argument("--L", type=_nonneg(int), default=3, help="maximal MLMC level")
    p.add_argument("--n-outer", type=_positive(int), default=4, help="estimator draws per iteration")
    p.add_argument("--n-truth", type=_positive(int), default=100_000, help="fresh covariates for R and R*")


ARGS: dict = {
    "inner-solve": _inner_args,
    "density": _density_args,
    "estimator-stats": _estimator_args,
    "train": _train_args,
    "attack-eval": _attack_args,
    "regfx": _regfx_args,
    "rl": _rl_args,
    "pricing": _pricing_args,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phidro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        _common(p)
        ARGS[name](p)  # after the common options so per-command set_defaults (e.g. seed) win
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv) -> argparse.Namespace:
    """Parse ``argv``; config-file values become defaults so explicit flags win."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    sp = _subparser(parser, ns.command)
    if ns.config:
        cfg = read_config(ns.config)
        dests = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
        unknown = sorted(set(cfg) - set(dests))
        if unknown:
            sp.error(f"unknown config key(s) in {ns.config}: {', '.join(unknown)}")
        sp.set_defaults(**cfg)  # string defaults go through each option's type converter
        ns = parser.parse_args(argv)
    missing = [k for k in REQUIRED.get(ns.command, []) if getattr(ns, k) is None]
    if missing:
        sp.error(f"missing required key: {', '.join(missing)}")
    # non-string defaults never pass through type converters
    for a in sp._actions:
        v = getattr(ns, a.dest, None)
        if a.type is _divergence and isinstance(v, str):
            setattr(ns, a.dest, _divergence(v))
    return ns


def resolved_config(ns) -> dict:
    """Ordered, printable view of every option (used for output headers)."""
    out = {"command": ns.command, "version": __version__}
    for k, v in sorted(vars(ns).items()):
        if k in ("command", "verbose", "config", "func") or k == "out" or k.endswith("_out"):
            continue  # destinations do not affect results; omitting them keeps reruns byte-identical
        if hasattr(v, "kind"):
            v = _div_name(v)
        elif isinstance(v, list):
            v = ";".join(format_value(x) for x in v)
        out[k] = v
    return out


def _emit_table(ns, columns, rows, extra_meta=None, path=None, payload=None):
    meta = resolved_config(ns)
    if extra_meta:
        meta.update(extra_meta)
    path = ns.out if path is None else path
    if ns.format == "json" and path is ns.out:
        body = {"config": meta, "columns": list(columns), "rows": [list(r) for r in rows]}
        if payload:
            body.update(payload)
        write_json(path, body)
    else:
        write_csv(path, columns, rows, meta)


# -- subcommands -------------------------------------------------------------------


@command("inner-solve", "solve the finite-support penalized inner problem")
def cmd_inner(ns):
    from .inner import InnerProblem, solve, solve_bisection, solve_closed_form

    prob = InnerProblem(np.asarray(ns.values), ns.eta, ns.divergence)
    solver = {"auto": lambda p: solve(p, ns.eps), "bisection": lambda p: solve_bisection(p, ns.eps),
              "closed_form": solve_closed_form}[ns.method]
    sol = solver(prob)
    res = sol.to_dict()
    res["config"] = resolved_config(ns)
    if ns.format == "csv" and ns.out is not None:
        write_csv(ns.out, ["index", "value", "gamma"], [(i, v, g) for i, (v, g) in enumerate(zip(ns.values, sol.gamma))],
                  {**resolved_config(ns), "mu": sol.mu, "objective": sol.value, "iterations": sol.iterations,
                   "method": sol.method.value})
    else:
        write_json(ns.out, res)


@command("density", "worst-case density on the seeded toy landscape")
def cmd_density(ns):
    from .density import ToyLandscape, density_concentration, make_grid, worst_case_density

    land = ToyLandscape.from_seed(ns.seed)
    grid = make_grid(ns.center, ns.rho, ns.grid)
    dens = worst_case_density(land, ns.center, ns.rho, ns.divergence, ns.eta, grid=grid)
    conc = density_concentration(dens, dens.loss_values, 0.5)
    pts = grid.points
    extra = {"mass": dens.mass, "concentration_0.5": conc}
    _emit_table(ns, ["omega", "f", "density"], zip(pts, dens.loss_values, dens.density), extra)
    if ns.landscape_out:
        write_csv(ns.landscape_out, ["omega", "f"], zip(pts, dens.loss_values), resolved_config(ns))


def _toy_estimator_problem(ns):
    from .datasets import Dataset, load_csv
    from .models import LinearModel

    data = load_csv(ns.data) if ns.data else Dataset(np.array([[0.5], [-1.0], [2.0]]), np.array([1, 0, 1]))
    model = LinearModel(data.dim)
    theta = np.asarray(ns.theta if ns.theta is not None else [0.3, -0.2][: model.n_params] + [0.0] * (model.n_params - 2))
    if theta.size != model.n_params:
        raise UsageError(f"theta needs {model.n_params} entries for this data, got {theta.size}")
    return model, data, theta


@command("estimator-stats", "bias / second moment / cost table of the SG and RT-MLMC estimators")
def cmd_estimator(ns):
    from .mlmc import BallSampler, EstimatorConfig, estimator_terms, fixed_level_terms, level_probabilities

    model, data, theta = _toy_estimator_problem(ns)
    cfg = EstimatorConfig(L=ns.L, n_outer=1, scheme=ns.scheme, eta=ns.eta, divergence=ns.divergence)
    sampler = BallSampler(ns.norm, ns.rho, data.dim)
    ss = np.random.SeedSequence(ns.seed)
    base = int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
    terms, levels, queries = estimator_terms(model, theta, cfg, sampler, data, base, ns.draws)
    mean = terms.mean(axis=0)
    se = terms.std(axis=0, ddof=1) / math.sqrt(len(terms)) if len(terms) > 1 else np.full_like(mean, np.nan)
    samples = float(np.mean(2.0**levels))
    probs = level_probabilities(ns.L)
    expected = float(np.sum(probs * 2.0 ** np.arange(ns.L + 1))) if ns.scheme == "rtmlmc" else float(2**ns.L)

    rows = []
    top = fixed_level_terms(model, theta, ns.L, cfg, sampler, data, base + 1, ns.level_draws, antithetic=False).mean(axis=0)
    for lvl in range(ns.L + 1):
        b = base + 2 + lvl
        G = fixed_level_terms(model, theta, lvl, cfg, sampler, data, b, ns.level_draws, antithetic=True)
        g = fixed_level_terms(model, theta, lvl, cfg, sampler, data, b, ns.level_draws, antithetic=False)
        freq = float(np.mean(levels == lvl)) if ns.scheme == "rtmlmc" else float(lvl == ns.L)
        rows.append((lvl, probs[lvl] if ns.scheme == "rtmlmc" else float(lvl == ns.L), freq, 2**lvl,
                     float(np.mean(np.sum(G**2, axis=1))), float(np.linalg.norm(g.mean(axis=0) - top))))
    extra = {"estimate": ";".join(map(format_value, mean)), "stderr": ";".join(map(format_value, se)),
             "samples_per_draw": samples, "expected_samples_per_draw": expected, "inner_queries": queries}
    payload = {"summary": {"estimate": mean, "stderr": se, "samples_per_draw": samples,
                           "expected_samples_per_draw": expected, "inner_queries": queries}}
    _emit_table(ns, ["level", "probability", "frequency", "samples", "second_moment", "bias_vs_top"], rows, extra,
                payload=payload)


def _load_data(spec, n, seed):
    from .datasets import gaussian_blobs, load_csv, two_moons

    rng = np.random.default_rng([seed, 0xDA7A])
    if spec == "blobs":
        return gaussian_blobs(n, [[-1.0, -0.15], [1.0, 0.15]], [[0.4, 0.03], [0.4, 0.03]], rng)
    if spec == "moons":
        return two_moons(n, 0.1, rng)
    if not os.path.exists(spec):
        raise UsageError(f"data file not found: {spec}")
    return load_csv(spec)


@command("train", "projected SGD on the regularized robust objective")
def cmd_train(ns):
    from .mlmc import EstimatorConfig
    from .models import make_model
    from .train import TrainConfig, projected_sgd

    data = _load_data(ns.data, ns.n, ns.seed)
    if ns.dim is not None and ns.dim != data.dim:
        raise UsageError(f"dim={ns.dim} but the data has {data.dim} features")
    model = make_model(ns.model, data.dim, ns.hidden, max(ns.classes, data.n_classes))
    est = EstimatorConfig(L=ns.L, n_outer=ns.n_outer, scheme=ns.scheme, divergence=ns.divergence,
                          eta=ns.eta if ns.eta is not None else 2 * ns.rho)
    cfg = TrainConfig(T=ns.T, step=ns.step, projection_radius=ns.radius, estimator=est, rho=ns.rho, eta=ns.eta,
                      norm=ns.norm, seed=ns.seed, keep_trajectory=False)
    res = projected_sgd(model, data, cfg)
    metrics_path = ns.metrics_out or ns.out or "metrics.csv"
    write_csv(metrics_path, ["iter", "objective_estimate", "grad_norm", "samples_cumulative"], res.metrics,
              resolved_config(ns))
    if ns.theta_out:
        write_json(ns.theta_out, {"config": resolved_config(ns), "model": ns.model, "dim": data.dim,
                                  "theta": res.theta, "theta_avg": res.theta_avg, "theta_random": res.theta_random,
                                  "random_index": res.random_index})


@command("attack-eval", "misclassification rate under PGM or white-noise attacks")
def cmd_attack(ns):
    import json

    from .models import make_model
    from .train import AttackConfig, evaluate

    with open(ns.theta, encoding="utf-8") as fh:
        saved = json.load(fh)
    data = _load_data(ns.data, ns.n, ns.seed + 1)
    model = make_model(saved.get("model", ns.model), data.dim, ns.hidden, max(ns.classes, data.n_classes))
    theta = np.asarray(saved[ns.which], dtype=float)
    if theta.size != model.n_params:
        raise UsageError(f"theta has {theta.size} entries, model needs {model.n_params}")
    rows = []
    for i, eps in enumerate(ns.epsilon):
        if eps < 0:
            raise UsageError(f"epsilon must be >= 0, got {eps}")
        att = AttackConfig(norm=ns.norm, epsilon_adv=eps, steps=ns.steps, step_size=ns.step_size, kind=ns.attack)
        rows.append((eps, evaluate(model, theta, data, att, np.random.default_rng([ns.seed, i]))))
    _emit_table(ns, ["epsilon", "misclassification"], rows)


@command("regfx", "regularization-effect scaling study")
def cmd_regfx(ns):
    from .regfx import make_test_loss, parse_regime, run_scaling_study

    rep = run_scaling_study(make_test_loss(ns.loss), parse_regime(ns.regime), ns.steps, divergence=ns.divergence,
                            norm=ns.norm, grid=ns.grid, mc_samples=ns.mc_samples,
                            rng=np.random.default_rng(ns.seed))
    cols = ["k", "rho", "eta", "gap", "reg", "rel_err", "stderr"]
    _emit_table(ns, cols, [tuple(r[c] for c in cols) for r in rep.rows()])


@command("rl", "robust / regular tabular Q-learning on the gridworld")
def cmd_rl(ns):
    from .apps.rl import BRIDGE, CLIFF, evaluate_policy, grid_world, perturbed_variants, run_q_learning

    if not ns.gamma < 1:
        raise UsageError(f"gamma must lie in (0, 1), got {ns.gamma}")
    layout = BRIDGE if ns.layout == "bridge" else CLIFF
    mdp = grid_world(layout, gamma=ns.gamma)
    res = run_q_learning(mdp, ns.episodes, robust=ns.robust, eta=ns.eta, rho=ns.rho, seed=ns.seed,
                         max_steps=ns.max_steps)
    rows = [(i + 1, r, int(n)) for i, (r, n) in enumerate(zip(res.returns, res.lengths))]
    _emit_table(ns, ["episode", "return", "length"], rows, {"steps": res.steps})
    if ns.eval_out:
        worlds = {"nominal": mdp, **perturbed_variants(layout, ns.gamma)}
        ev = [(k, *evaluate_policy(res.qtable, m, ns.eval_episodes, seed=ns.seed)) for k, m in worlds.items()]
        write_csv(ns.eval_out, ["variant", "mean_return", "stderr"], ev, resolved_config(ns))


@command("pricing", "contextual pricing: regularized robust vs ERM improvement J")
def cmd_pricing(ns):
    from .apps.pricing import PricingConfig, run_pricing_trials

    cfg = PricingConfig(rho=ns.rho, eta=ns.eta, radius=ns.radius, T=ns.T, step=ns.step, L=ns.L, n_outer=ns.n_outer,
                        n_truth=ns.n_truth)
    res = run_pricing_trials(ns.trials, ns.M, ns.m, cfg, seed=ns.seed)
    rows = [(i, r.seed, r.J, r.risk, r.risk_erm, r.risk_star) for i, r in enumerate(res)]
    J = np.array([r.J for r in res if r.J is not None], dtype=float)
    extra = {"mean_J": float(J.mean()) if J.size else None,
             "stderr_J": float(J.std(ddof=1) / math.sqrt(J.size)) if J.size > 1 else None,
             "undefined_J": sum(r.J is None for r in res)}
    _emit_table(ns, ["trial", "seed", "J", "risk", "risk_erm", "risk_star"], rows, extra)


# -- entry point -------------------------------------------------------------------


def _limit_threads(n: Optional[int]):
    if n is None:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit with 2, --help/--version with 0
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"phidro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(name)s: %(message)s")
    fn: Callable = COMMANDS[ns.command][0]
    limiter = _limit_threads(ns.threads)
    try:
        with np.errstate(over="ignore"):
            fn(ns)
    except (NumericalError, ResolutionError, FloatingPointError) as exc:
        print(f"phidro: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PhidroError, UsageError, OSError, KeyError) as exc:
        print(f"phidro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if limiter is not None:
            limiter.unregister() if hasattr(limiter, "unregister") else limiter.restore_original_limits()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
