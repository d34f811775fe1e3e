"""Finite discounted Markov game model and generative simulator.

A game is the tuple (players, states, per-player action sets, transition
kernel, per-player cost tables, discount).  States and actions are dense
0-based indices.  Joint actions are enumerated in row-major order over
players with player 0 slowest, so for two players with 2 actions each the
joint order is (0,0), (0,1), (1,0), (1,1).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

KERNEL_TOL = 1e-12


@dataclass(frozen=True)
class GameSpec:
    """Markov game: kernel has shape (S, A_joint, S), costs (I, S, A_joint).

    Immutable after construction; safe to share across threads.  RNG streams
    are owned by callers.
    """

    num_players: int
    num_states: int
    num_actions: tuple[int, ...]
    kernel: np.ndarray
    costs: np.ndarray
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "kernel", np.asarray(self.kernel, dtype=float))
        object.__setattr__(self, "costs", np.asarray(self.costs, dtype=float))
        self.kernel.setflags(write=False)
        self.costs.setflags(write=False)

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.num_actions))

    def joint_action_index(self, actions) -> int:
        """Row-major index of a per-player action tuple (player 0 slowest)."""
        idx = 0
        for n, a in zip(self.num_actions, actions):
            idx = idx * n + a
        return idx

    def joint_action_tuple(self, index: int) -> tuple[int, ...]:
        out = []
        for n in reversed(self.num_actions):
            out.append(index % n)
            index //= n
        return tuple(reversed(out))

    def cost_bound(self) -> float:
        return float(np.max(np.abs(self.costs)))

    def value_bound(self) -> float:
        """Sup-norm bound c_max / (1 - gamma) on any discounted value."""
        return self.cost_bound() / (1.0 - self.discount)

    def kernel_cdfs(self) -> np.ndarray:
        """Cumulative kernel rows, shape (S, A_joint, S); used for sampling."""
        return np.cumsum(self.kernel, axis=-1)


def validate(game: GameSpec) -> list[str]:
    """Return a list of invariant violations; empty iff the game is valid."""
    report = []
    if game.num_players < 1:
        report.append("num_players must be positive")
    if game.num_states < 1:
        report.append("num_states must be positive")
    if any(n < 1 for n in game.num_actions):
        report.append("every player needs at least one action")
    if not (0.0 < game.discount < 1.0):
        report.append(f"discount {game.discount} outside (0, 1)")

    A = game.num_joint_actions
    if game.kernel.shape != (game.num_states, A, game.num_states):
        report.append(
            f"kernel shape {game.kernel.shape} != {(game.num_states, A, game.num_states)}"
        )
        return report
    if game.costs.shape != (game.num_players, game.num_states, A):
        report.append(
            f"costs shape {game.costs.shape} != {(game.num_players, game.num_states, A)}"
        )
        return report

    if not np.all(np.isfinite(game.costs)):
        bad = np.argwhere(~np.isfinite(game.costs))[0]
        report.append(f"non-finite cost at (player={bad[0]}, s={bad[1]}, a={bad[2]})")
    if np.any(game.kernel < 0):
        s, a, k = np.argwhere(game.kernel < 0)[0]
        report.append(f"negative kernel entry at (s={s}, a={a}, k={k})")
    sums = game.kernel.sum(axis=-1)
    off = np.argwhere(np.abs(sums - 1.0) > KERNEL_TOL)
    for s, a in off:
        report.append(f"kernel row (s={s}, a={a}) sums to {sums[s, a]:.15g}, not 1")
    return report


@dataclass
class MultiStrategy:
    """Stationary mixed strategy: one (S, A_i) stochastic matrix per player."""

    probs: list[np.ndarray]

    def __post_init__(self):
        self.probs = [np.asarray(p, dtype=float) for p in self.probs]

    @classmethod
    def uniform(cls, game: GameSpec) -> "MultiStrategy":
        return cls([np.full((game.num_states, n), 1.0 / n) for n in game.num_actions])

    @classmethod
    def pure(cls, game: GameSpec, actions) -> "MultiStrategy":
        """actions[i][s] (or a constant per player) gives the action played."""
        probs = []
        for i, n in enumerate(game.num_actions):
            m = np.zeros((game.num_states, n))
            sel = actions[i]
            for s in range(game.num_states):
                m[s, sel if np.isscalar(sel) else sel[s]] = 1.0
            probs.append(m)
        return cls(probs)

    def validate(self) -> list[str]:
        report = []
        for i, p in enumerate(self.probs):
            if np.any(p < 0):
                report.append(f"player {i} has a negative strategy weight")
            off = np.argwhere(np.abs(p.sum(axis=1) - 1.0) > KERNEL_TOL)
            for (s,) in off:
                report.append(f"player {i} strategy at state {s} sums to {p[s].sum():.15g}")
        return report

    def copy(self) -> "MultiStrategy":
        return MultiStrategy([p.copy() for p in self.probs])


@dataclass
class JointDistribution:
    """Distribution over (joint action, next state) pairs at one state."""

    state: int
    matrix: np.ndarray  # (A_joint, S)

    @property
    def action_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def total_mass(self) -> float:
        return float(self.matrix.sum())


def joint_action_probs(
    game: GameSpec,
    x: MultiStrategy,
    s: int,
    override: tuple[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Product-form probabilities over joint actions at state s.

    ``override=(i, u)`` replaces player i's mixed action with the vector u.
    """
    dists = []
    for i in range(game.num_players):
        if override is not None and override[0] == i:
            u = np.asarray(override[1], dtype=float)
            if u.shape != (game.num_actions[i],):
                raise ValueError(
                    f"override for player {i} has shape {u.shape}, "
                    f"expected ({game.num_actions[i]},)"
                )
            dists.append(u)
        else:
            p = x.probs[i][s]
            if p.shape != (game.num_actions[i],):
                raise ValueError(
                    f"strategy for player {i} has {p.shape[0]} actions, "
                    f"game has {game.num_actions[i]}"
                )
            dists.append(p)
    out = dists[0]
    for d in dists[1:]:
        out = np.multiply.outer(out, d)
    return out.reshape(-1)


def joint_distribution(
    game: GameSpec,
    x: MultiStrategy,
    s: int,
    override: tuple[int, np.ndarray] | None = None,
) -> JointDistribution:
    """Joint (action, next state) distribution induced by x at state s."""
    pi = joint_action_probs(game, x, s, override)
    return JointDistribution(state=s, matrix=pi[:, None] * game.kernel[s])


def sample_transition(game: GameSpec, s: int, a: int, rng) -> tuple[np.ndarray, int]:
    """Draw one next state from P(.|s,a); costs are the exact table entries."""
    row = game.kernel[s, a]
    cdf = np.cumsum(row)
    k = int(np.searchsorted(cdf, rng.random(), side="right"))
    k = min(k, game.num_states - 1)
    return game.costs[:, s, a].copy(), k


class TransitionSampler:
    """Prebuilt CDF tables for tight sampling loops (learner, Monte Carlo).

    Sampling consumes exactly one uniform per draw, so streams are
    reproducible and cheap to reason about.
    """

    def __init__(self, game: GameSpec):
        self.game = game
        self._cdfs = [
            [list(np.cumsum(game.kernel[s, a])) for a in range(game.num_joint_actions)]
            for s in range(game.num_states)
        ]
        self._costs = [
            [tuple(float(game.costs[i, s, a]) for i in range(game.num_players))
             for a in range(game.num_joint_actions)]
            for s in range(game.num_states)
        ]

    def draw(self, s: int, a: int, u: float) -> int:
        """Next state for uniform draw u in [0, 1)."""
        cdf = self._cdfs[s][a]
        k = bisect_right(cdf, u)
        return min(k, self.game.num_states - 1)

    def costs(self, s: int, a: int) -> tuple[float, ...]:
        return self._costs[s][a]


# --- structured config-file schema -----------------------------------------
#
# {
#   "schema_version": 1,
#   "players": 2,
#   "states": 3,
#   "actions": [2, 2],
#   "discount": 0.1,
#   "kernel": [[[..S floats..] for each joint action] for each state],
#   "costs":  [[[..A floats..] for each state] for each player]
# }

def game_from_config(cfg: dict) -> GameSpec:
    """Build a GameSpec from the documented dict schema.

    Raises ValueError naming the offending key path on schema violations.
    """
    def need(key, typ):
        if key not in cfg:
            raise ValueError(f"missing key: {key}")
        val = cfg[key]
        if typ is float and isinstance(val, int):
            val = float(val)
        if not isinstance(val, typ):
            raise ValueError(f"bad type at {key}: expected {typ.__name__}")
        return val

    version = need("schema_version", int)
    if version != 1:
        raise ValueError(f"schema_version: unsupported version {version}")
    players = need("players", int)
    states = need("states", int)
    actions = need("actions", list)
    if len(actions) != players:
        raise ValueError(f"actions: expected {players} entries, got {len(actions)}")
    discount = need("discount", float)

    A = int(np.prod(actions))
    kernel = np.asarray(need("kernel", list), dtype=float)
    if kernel.shape != (states, A, states):
        raise ValueError(f"kernel: shape {kernel.shape} != {(states, A, states)}")
    costs = np.asarray(need("costs", list), dtype=float)
    if costs.shape != (players, states, A):
        raise ValueError(f"costs: shape {costs.shape} != {(players, states, A)}")

    game = GameSpec(
        num_players=players,
        num_states=states,
        num_actions=tuple(int(n) for n in actions),
        kernel=kernel,
        costs=costs,
        discount=discount,
    )
    problems = validate(game)
    if problems:
        raise ValueError("; ".join(problems))
    return game


def game_to_config(game: GameSpec) -> dict:
    return {
        "schema_version": 1,
        "players": game.num_players,
        "states": game.num_states,
        "actions": list(game.num_actions),
        "discount": game.discount,
        "kernel": game.kernel.tolist(),
        "costs": game.costs.tolist(),
    }
