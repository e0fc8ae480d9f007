"""Robust tabular Q-learning with entropic adversarial state perturbation.

The regular update bootstraps from ``max_a Q(s', a)``. The robust update
replaces ``Q(s', a)`` by the soft minimum over the perturbation neighborhood
``N(s')`` (all states within Chebyshev distance ``ceil(rho)`` on the grid,
uniformly weighted, summed exactly)::

    soft_a(s') = -eta * log mean_{s^ in N(s')} exp(-Q(s^, a) / eta)

which is evaluated as ``m - eta * log mean exp(-(Q - m) / eta)`` with
``m = min Q`` so that a one-state neighborhood returns ``Q(s', a)`` exactly.

Terminal states are absorbing and end the episode; entering one pays its
terminal value as reward and nothing is bootstrapped from it (terminal Q
rows stay zero). The perturbation therefore acts only on continuing states,
where a neighboring cliff cell (Q = 0) drags the soft value down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ParameterError

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
]

# action order: up, right, down, left (row, col deltas)
MOVES = np.array([[-1, 0], [0, 1], [1, 0], [0, -1]])


@dataclass(frozen=True, eq=False)
class GridMDP:
    """Finite MDP whose states are the cells of a ``height x width`` grid (row-major)."""

    width: int
    height: int
    P: np.ndarray  # (S, A, S)
    R: np.ndarray  # (S, A)
    gamma: float
    terminal_values: np.ndarray  # (S,) payoff for entering a terminal state, NaN elsewhere
    start: int = 0
    _nbhd: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        S = self.width * self.height
        if self.P.shape[0] != S or self.P.shape[2] != S or self.R.shape != self.P.shape[:2]:
            raise ParameterError("transition/reward shapes do not match the grid")
        if not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12) or np.any(self.P < 0):
            raise ParameterError("every P(.|s,a) must be a probability vector")
        if not 0 < self.gamma < 1:
            raise ParameterError(f"discount must lie in (0, 1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return ~np.isnan(self.terminal_values)

    def cell(self, s):
        return divmod(int(s), self.width)

    def neighborhood(self, s: int, rho: float) -> np.ndarray:
        """States within Chebyshev distance ``ceil(rho)`` of ``s`` (including ``s``)."""
        r = int(math.ceil(rho))
        key = (int(s), r)
        if key not in self._nbhd:
            i, j = self.cell(s)
            rows = np.arange(max(0, i - r), min(self.height, i + r + 1))
            cols = np.arange(max(0, j - r), min(self.width, j + r + 1))
            self._nbhd[key] = (rows[:, None] * self.width + cols[None, :]).ravel()
        return self._nbhd[key]


def _move(height, width, i, j, a):
    di, dj = MOVES[a]
    return min(max(i + di, 0), height - 1), min(max(j + dj, 0), width - 1)


BRIDGE = """
.....
.....
S...G
.HHH.
.....
"""

CLIFF = """
.....
.....
.....
.....
SHHHG
"""


def grid_world(layout: str = BRIDGE, gamma: float = 0.5, slip: float = 0.0, wind: float = 0.0,
               corridor_penalty: float = 0.0, goal_value: float = 1.0, hazard_value: float = -3.0) -> GridMDP:
    """Gridworld from a text map: ``S`` start, ``G`` goal, ``H`` hazard, ``.`` free.

    Goal and hazard cells are terminal; entering them pays ``goal_value`` /
    ``hazard_value``. ``slip``: probability that the action is replaced by a
    uniformly random one. ``wind``: probability of an extra push one cell down
    after moving. ``corridor_penalty``: reward for entering a free cell that
    lies directly above a hazard.
    """
    rows = [r.strip() for r in layout.strip().splitlines() if r.strip()]
    height, width = len(rows), len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParameterError("layout rows must have equal length")
    if not 0 <= slip <= 1 or not 0 <= wind <= 1:
        raise ParameterError("slip and wind must lie in [0, 1]")
    S, A = width * height, 4
    tv = np.full(S, np.nan)
    starts = []
    for i, row in enumerate(rows):
        for j, c in enumerate(row):
            if c not in "SGH.":
                raise ParameterError(f"unknown layout symbol {c!r}")
            if c == "S":
                starts.append(i * width + j)
            elif c == "G":
                tv[i * width + j] = goal_value
            elif c == "H":
                tv[i * width + j] = hazard_value
    if len(starts) != 1:
        raise ParameterError("layout needs exactly one start cell")
    det = np.zeros((S, A, S))
    for s in range(S):
        i, j = divmod(s, width)
        for a in range(A):
            if not np.isnan(tv[s]):
                det[s, a, s] = 1.0
                continue
            ni, nj = _move(height, width, i, j, a)
            det[s, a, ni * width + nj] = 1.0
    P = (1 - slip) * det + slip * det.mean(axis=1, keepdims=True)
    if wind > 0:
        push = np.zeros((S, S))
        for s in range(S):
            i, j = divmod(s, width)
            if np.isnan(tv[s]):
                push[s, min(i + 1, height - 1) * width + j] += wind
                push[s, s] += 1 - wind
            else:
                push[s, s] = 1.0
        P = P @ push
    enter = np.zeros(S)
    if corridor_penalty:
        for s in range(S - width):
            below = s + width
            if np.isnan(tv[s]) and tv[below] < 0:
                enter[s] = corridor_penalty
    enter[~np.isnan(tv)] = tv[~np.isnan(tv)]
    R = P @ enter
    R[~np.isnan(tv)] = 0.0
    return GridMDP(width, height, P, R, gamma, tv, starts[0])


def cliff_world(gamma: float = 0.5, **kw) -> GridMDP:
    """Classic cliff layout (goal inside the hazard row); see :func:`grid_world`."""
    return grid_world(CLIFF, gamma=gamma, **kw)


def perturbed_variants(layout: str = BRIDGE, gamma: float = 0.5, **kw) -> dict:
    """Evaluation MDPs: slip (+0.2 random action), corridor (-0.1 next to hazards), wind (0.2 toward hazards)."""
    return {
        "slip": grid_world(layout, gamma=gamma, slip=0.2, **kw),
        "corridor": grid_world(layout, gamma=gamma, corridor_penalty=-0.1, **kw),
        "wind": grid_world(layout, gamma=gamma, wind=0.2, **kw),
    }


@dataclass
class QTable:
    Q: np.ndarray
    visits: np.ndarray

    @classmethod
    def for_mdp(cls, mdp: GridMDP) -> "QTable":
        Q = np.zeros((mdp.n_states, mdp.n_actions))
        return cls(Q, np.zeros(Q.shape, dtype=np.int64))

    def copy(self) -> "QTable":
        return QTable(self.Q.copy(), self.visits.copy())

    def greedy(self) -> np.ndarray:
        return np.argmax(self.Q, axis=1)


def soft_target(Q, states, eta):
    """Per-action ``-eta log mean_{s in states} exp(-Q(s, a) / eta)`` (vectorized form)."""
    block = np.asarray(Q)[states]
    m = block.min(axis=0)
    return m - eta * np.log(np.mean(np.exp(-(block - m) / eta), axis=0))


def _bootstrap(rows, eta):
    """max_a of the soft neighborhood value; ``rows`` is a list of per-state Q lists.

    Plain-Python kernel shared by :func:`robust_q_update` and the training
    loop. ``eta=None`` gives the regular ``max_a Q(s', a)``.
    """
    if eta is None:
        return max(rows[0])
    k = len(rows)
    best = -math.inf
    for a in range(len(rows[0])):
        m = min(r[a] for r in rows)
        acc = 0.0
        for r in rows:
            acc += math.exp(-(r[a] - m) / eta)
        v = m - eta * math.log(acc / k)
        if v > best:
            best = v
    return best


def _update(Q, visits, s, a, r, s2, gamma, nbhd, eta, done=False):
    # Q / visits: nested lists; nbhd: neighborhood of s2 (or [s2] for the regular update)
    alpha = 1.0 / (1.0 + visits[s][a])
    boot = 0.0 if done else _bootstrap([Q[j] for j in nbhd], eta)
    Q[s][a] = (1 - alpha) * Q[s][a] + alpha * (r + gamma * boot)
    visits[s][a] += 1


def robust_q_update(qtable: QTable, mdp: GridMDP, transition, eta: Optional[float] = None, rho: float = 0.0,
                    n_samples=None, rng=None, robust: bool = True) -> QTable:
    """One in-place Q-update with learning rate ``1 / (1 + visits)``.

    ``robust=False`` performs the regular update. ``n_samples`` and ``rng``
    are accepted for interface symmetry; the neighborhood expectation is an
    exact finite sum.
    """
    s, a, r, s2 = transition
    if robust and (eta is None or not eta > 0):
        raise ParameterError(f"eta must be positive, got {eta}")
    nbhd = mdp.neighborhood(s2, rho) if robust else [s2]
    rows = {int(j): qtable.Q[j].tolist() for j in nbhd}
    rows.setdefault(int(s), qtable.Q[s].tolist())
    vis = {int(s): qtable.visits[s].tolist()}
    _update(rows, vis, int(s), int(a), float(r), int(s2), mdp.gamma, [int(j) for j in nbhd], eta if robust else None,
            done=bool(mdp.terminal[s2]))
    qtable.Q[s, a] = rows[int(s)][a]
    qtable.visits[s, a] += 1
    return qtable


class _Sim:
    """Fast sampler for ``P(.|s,a)``: one uniform per step, cumulative tables as lists."""

    def __init__(self, mdp: GridMDP, rng, block=8192):
        self.cum = [[np.cumsum(mdp.P[s, a]).tolist() for a in range(mdp.n_actions)] for s in range(mdp.n_states)]
        self.sup = [[np.flatnonzero(mdp.P[s, a]).tolist() for a in range(mdp.n_actions)] for s in range(mdp.n_states)]
        self.R = mdp.R.tolist()
        self.rng = rng
        self.block = block
        self._buf, self._i = [], 0

    def uniform(self) -> float:
        if self._i >= len(self._buf):
            self._buf, self._i = self.rng.random(self.block).tolist(), 0
        u = self._buf[self._i]
        self._i += 1
        return u

    def step(self, s, a):
        sup = self.sup[s][a]
        u = self.uniform()
        if len(sup) == 1:
            return sup[0], self.R[s][a]
        cum = self.cum[s][a]
        for j in sup:
            if u < cum[j]:
                return j, self.R[s][a]
        return sup[-1], self.R[s][a]


def _argmax(row):
    best, arg = row[0], 0
    for i in range(1, len(row)):
        if row[i] > best:
            best, arg = row[i], i
    return arg


@dataclass(frozen=True, eq=False)
class QLearningResult:
    qtable: QTable
    returns: np.ndarray  # discounted return per episode
    lengths: np.ndarray
    steps: int


def run_q_learning(mdp: GridMDP, episodes: int = 10_000, robust: bool = False, eta: float = 0.5, rho: float = 0.0,
                   seed: int = 0, max_steps: Optional[int] = None, episode_cap: int = 100,
                   eps_start: float = 1.0, eps_end: float = 0.05, decay_fraction: float = 1.0,
                   exploring_starts: bool = True) -> QLearningResult:
    """epsilon-greedy Q-learning; epsilon decays linearly over ``decay_fraction`` of the budget.

    The budget is ``max_steps`` environment steps when given, else ``episodes``.
    ``exploring_starts`` begins every episode in a uniformly random
    non-terminal state (coverage of cells the start rarely reaches).
    Each step consumes exactly one exploration uniform, one action uniform and
    one transition uniform, so runs are reproducible per seed.
    """
    if episodes < 1 or episode_cap < 1:
        raise ParameterError("episodes and episode_cap must be >= 1")
    if robust and not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    sim = _Sim(mdp, np.random.default_rng(seed))
    qt = QTable.for_mdp(mdp)
    Q, visits = qt.Q.tolist(), qt.visits.tolist()
    term = mdp.terminal.tolist()
    nb = [mdp.neighborhood(s, rho).tolist() if robust else [s] for s in range(mdp.n_states)]
    kappa = eta if robust else None
    A, gamma = mdp.n_actions, mdp.gamma
    rets, lens = [], []
    total, ep = 0, 0
    horizon = decay_fraction * (max_steps if max_steps is not None else episodes)
    live = np.flatnonzero(~mdp.terminal).tolist()
    while ep < episodes and (max_steps is None or total < max_steps):
        s = live[min(int(sim.uniform() * len(live)), len(live) - 1)] if exploring_starts else mdp.start
        g, disc = 0.0, 1.0
        for t in range(episode_cap):
            progress = min(1.0, (total if max_steps is not None else ep) / horizon)
            eps = eps_start + (eps_end - eps_start) * progress
            explore = sim.uniform() < eps
            u = sim.uniform()
            a = min(int(u * A), A - 1) if explore else _argmax(Q[s])
            s2, r = sim.step(s, a)
            _update(Q, visits, s, a, r, s2, gamma, nb[s2], kappa, term[s2])
            total += 1
            g += disc * r
            disc *= gamma
            s = s2
            if term[s]:
                break
            if max_steps is not None and total >= max_steps:
                break
        rets.append(g)
        lens.append(t + 1)
        ep += 1
    qt.Q[:] = Q
    qt.visits[:] = visits
    return QLearningResult(qt, np.array(rets), np.array(lens), total)


def value_iteration(mdp: GridMDP, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Optimal Q table under the same episodic convention (terminal rows zero)."""
    Q = QTable.for_mdp(mdp).Q
    live = ~mdp.terminal
    for _ in range(max_iter):
        V = np.where(mdp.terminal, 0.0, Q.max(axis=1))
        newQ = Q.copy()
        newQ[live] = mdp.R[live] + mdp.gamma * mdp.P[live] @ V
        if np.max(np.abs(newQ - Q)) <= tol:
            return newQ
        Q = newQ
    return Q


def evaluate_policy(qtable, mdp_eval: GridMDP, episodes: int = 200, seed: int = 0, max_steps: int = 500):
    """Mean discounted return of the greedy policy, and its standard error.

    ``qtable`` may be a :class:`QTable`, a Q matrix, or ``None`` for the
    uniformly random policy. Episode ``e`` uses its own stream
    ``default_rng([seed, e])``.
    """
    if episodes < 1:
        raise ParameterError("episodes must be >= 1")
    if qtable is None:
        policy = None
    else:
        policy = (qtable.greedy() if isinstance(qtable, QTable) else np.argmax(np.asarray(qtable), axis=1)).tolist()
    term = mdp_eval.terminal.tolist()
    A = mdp_eval.n_actions
    sim = _Sim(mdp_eval, None)
    out = np.empty(episodes)
    for e in range(episodes):
        sim.rng, sim._buf, sim._i = np.random.default_rng([seed, e]), [], 0
        sim.block = min(2 * max_steps, 1024)
        s = mdp_eval.start
        g, disc = 0.0, 1.0
        for _ in range(max_steps):
            if term[s]:
                break
            a = policy[s] if policy is not None else min(int(sim.uniform() * A), A - 1)
            s, r = sim.step(s, a)
            g += disc * r
            disc *= mdp_eval.gamma
        out[e] = g
    se = out.std(ddof=1) / math.sqrt(episodes) if episodes > 1 else float("nan")
    return float(out.mean()), float(se)
