"""Exact model-based evaluation of risk-aware values and equilibria.

The one-step risk of the cost-to-go c^i(s, A) + gamma v^i(S') is a CVaR whose
envelope acts either on the joint (action, next state) distribution (scope
"joint") or on the next-state distribution per joint action (scope
"transition"); see risk.RiskModel.  In both cases the risk is a minimum of
functions affine in the player's own mixed action, hence concave in it, so
the best response over the own simplex is attained at a vertex.  Value
iteration inherits the discount-factor contraction, and the stopping rule
uses the gamma/(1-gamma) bound so reported tolerances are true sup-norm
guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .game import GameSpec, MultiStrategy, joint_action_probs
from .risk import JOINT, TRANSITION, DiscreteDistribution, RiskModel, cvar_exact
from .stage import LOWEST_TOTAL_COST, MixedProfile, StageGame, nash_value, pick_equilibrium


class ConvergenceFailure(RuntimeError):
    """Value iteration exceeded its cap; carries the achieved gap."""

    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


def transition_tails(game: GameSpec, risk: RiskModel, v_i: np.ndarray) -> np.ndarray:
    """Per (s, a) CVaR of v_i(S') under P(.|s,a); expectation when neutral."""
    if risk.is_neutral:
        return game.kernel @ v_i
    out = np.empty((game.num_states, game.num_joint_actions))
    for s in range(game.num_states):
        for a in range(game.num_joint_actions):
            row = game.kernel[s, a]
            nz = row > 0
            out[s, a] = cvar_exact(
                DiscreteDistribution(v_i[nz], row[nz]), risk.alpha
            )
    return out


def stage_risk(
    game: GameSpec,
    risks: Sequence[RiskModel],
    x: MultiStrategy,
    v: np.ndarray,
    s: int,
    i: int,
    override: np.ndarray | None = None,
) -> float:
    """One-step risk psi_s^i of the cost-to-go, at x with optional override
    of player i's own mixed action."""
    ov = None if override is None else (i, override)
    pi = joint_action_probs(game, x, s, ov)
    risk = risks[i]
    gamma = game.discount
    if risk.scope == TRANSITION and not risk.is_neutral:
        tails = np.array(
            [
                cvar_exact(
                    DiscreteDistribution(
                        v[i][game.kernel[s, a] > 0],
                        game.kernel[s, a][game.kernel[s, a] > 0],
                    ),
                    risk.alpha,
                )
                for a in range(game.num_joint_actions)
            ]
        )
        return float(pi @ (game.costs[i, s] + gamma * tails))
    atoms = (game.costs[i, s][:, None] + gamma * v[i][None, :]).reshape(-1)
    probs = (pi[:, None] * game.kernel[s]).reshape(-1)
    if risk.is_neutral:
        return float(atoms @ probs)
    nz = probs > 0
    return cvar_exact(DiscreteDistribution(atoms[nz], probs[nz]), risk.alpha)


def _pure_action_risks(game, risk, x, v_i, s, i, tails=None) -> np.ndarray:
    """psi at each pure own action; the building block of the vertex minimum."""
    gamma = game.discount
    n_own = game.num_actions[i]
    out = np.empty(n_own)
    if risk.scope == TRANSITION and not risk.is_neutral:
        q = game.costs[i, s] + gamma * tails[s]
        for h in range(n_own):
            e = np.zeros(n_own)
            e[h] = 1.0
            out[h] = joint_action_probs(game, x, s, (i, e)) @ q
        return out
    for h in range(n_own):
        e = np.zeros(n_own)
        e[h] = 1.0
        pi = joint_action_probs(game, x, s, (i, e))
        atoms = (game.costs[i, s][:, None] + gamma * v_i[None, :]).reshape(-1)
        probs = (pi[:, None] * game.kernel[s]).reshape(-1)
        if risk.is_neutral:
            out[h] = atoms @ probs
        else:
            nz = probs > 0
            out[h] = cvar_exact(DiscreteDistribution(atoms[nz], probs[nz]), risk.alpha)
    return out


def bellman_min(
    game: GameSpec,
    risks: Sequence[RiskModel],
    x: MultiStrategy,
    v: np.ndarray,
    i: int,
    return_argmin: bool = False,
):
    """One application of the best-response operator [T_x(v)]^i.

    The objective is a minimum of eta-indexed affine functions of the own
    mixed action, hence concave; the minimum over the simplex is attained at
    a pure action, so vertex enumeration is exact.  Ties break to the lowest
    action index for reproducibility.
    """
    risk = risks[i]
    tails = None
    if risk.scope == TRANSITION and not risk.is_neutral:
        tails = transition_tails(game, risk, v[i])
    out = np.empty(game.num_states)
    arg = np.zeros((game.num_states, game.num_actions[i])) if return_argmin else None
    for s in range(game.num_states):
        vals = _pure_action_risks(game, risk, x, v[i], s, i, tails)
        h = int(np.argmin(vals))  # argmin takes the lowest index on ties
        out[s] = vals[h]
        if return_argmin:
            arg[s, h] = 1.0
    if return_argmin:
        return out, arg
    return out


def _iterate_values(game, step, tol, max_iters, what):
    """Run v <- step(v) until the contraction bound certifies sup-norm tol."""
    gamma = game.discount
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else tol
    v = np.zeros(game.num_states)
    for _ in range(max_iters):
        v_new = step(v)
        gap = float(np.max(np.abs(v_new - v)))
        v = v_new
        if gap < threshold:
            return v
    raise ConvergenceFailure(f"{what}: iteration cap {max_iters} exceeded (gap {gap:.3g})", gap)


def best_response_value(
    game: GameSpec,
    risks: Sequence[RiskModel],
    x: MultiStrategy,
    i: int,
    tol: float = 1e-8,
    max_iters: int = 10**5,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed point of the best-response operator given the others frozen.

    Returns (v_i, u) where u holds the per-state argmin distributions
    (one-hot rows, since the vertex minimum is exact).
    """
    def step(v_i):
        stacked = _as_stacked(game, v_i, i)
        return bellman_min(game, risks, x, stacked, i)

    v_i = _iterate_values(game, step, tol, max_iters, f"best response, player {i}")
    _, u = bellman_min(game, risks, x, _as_stacked(game, v_i, i), i, return_argmin=True)
    return v_i, u


def evaluate_fixed(
    game: GameSpec,
    risks: Sequence[RiskModel],
    x: MultiStrategy,
    i: int,
    tol: float = 1e-8,
    max_iters: int = 10**5,
) -> np.ndarray:
    """Discounted risk J_s^i(x) of playing x itself (no minimization)."""
    def step(v_i):
        stacked = _as_stacked(game, v_i, i)
        return np.array(
            [stage_risk(game, risks, x, stacked, s, i) for s in range(game.num_states)]
        )

    return _iterate_values(game, step, tol, max_iters, f"policy evaluation, player {i}")


def _as_stacked(game, v_i, i):
    stacked = np.zeros((game.num_players, game.num_states))
    stacked[i] = v_i
    return stacked


@dataclass
class VerifyReport:
    """Per-player equilibrium gaps max_s [J_s^i(x) - min_u J_s^i(u, x^-i)]."""

    gaps: np.ndarray  # (I, S)
    max_gaps: np.ndarray  # (I,)
    tol: float
    passed: bool
    values_fixed: np.ndarray  # (I, S)
    values_best: np.ndarray  # (I, S)

    def to_dict(self) -> dict:
        return {
            "pass": bool(self.passed),
            "tol": self.tol,
            "max_gaps": [float(g) for g in self.max_gaps],
            "gaps": self.gaps.tolist(),
        }


def verify_equilibrium(
    game: GameSpec,
    risks: Sequence[RiskModel],
    x: MultiStrategy,
    tol: float = 1e-6,
) -> VerifyReport:
    """Definition-level check: no player can reduce its discounted risk."""
    inner = max(tol / 100.0, 1e-10)
    S = game.num_states
    fixed = np.zeros((game.num_players, S))
    best = np.zeros((game.num_players, S))
    for i in range(game.num_players):
        fixed[i] = evaluate_fixed(game, risks, x, i, tol=inner)
        best[i], _ = best_response_value(game, risks, x, i, tol=inner)
    gaps = fixed - best
    max_gaps = gaps.max(axis=1)
    return VerifyReport(
        gaps=gaps,
        max_gaps=max_gaps,
        tol=tol,
        passed=bool(np.all(max_gaps < tol)),
        values_fixed=fixed,
        values_best=best,
    )


@dataclass
class SearchResult:
    strategy: MultiStrategy
    report: VerifyReport
    rounds: int


def fixed_point_search(
    game: GameSpec,
    risks: Sequence[RiskModel],
    x0: MultiStrategy,
    damping: float = 0.5,
    max_rounds: int = 200,
    tol: float = 1e-6,
) -> SearchResult:
    """Damped best-response iteration x <- (1-theta) x + theta BR(x).

    A heuristic: equilibria exist but no algorithm with guarantees is
    available, so the returned verify report is the only certificate and it
    may be a fail.  Non-convergence is an outcome, not an error.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    x = x0.copy()
    report = verify_equilibrium(game, risks, x, tol)
    rounds = 1
    while not report.passed and rounds < max_rounds:
        for i in range(game.num_players):
            _, u = best_response_value(game, risks, x, i, tol=max(tol / 100.0, 1e-10))
            x.probs[i] = (1.0 - damping) * x.probs[i] + damping * u
        report = verify_equilibrium(game, risks, x, tol)
        rounds += 1
    return SearchResult(strategy=x, report=report, rounds=rounds)


def stage_costs_from_values(
    game: GameSpec, risks: Sequence[RiskModel], v: np.ndarray
) -> np.ndarray:
    """Risk-adjusted stage costs K^i(s,a) = c^i(s,a) + gamma CVaR_a(v^i(S')).

    Only meaningful for transition-scope risk (or neutral), where the
    equilibrium objective is linear in every player's own strategy and the
    per-state problem is an ordinary bimatrix game.
    """
    K = np.empty_like(game.costs)
    for i in range(game.num_players):
        K[i] = game.costs[i] + game.discount * transition_tails(game, risks[i], v[i])
    return K


def nash_value_iteration(
    game: GameSpec,
    risks: Sequence[RiskModel],
    policy: str = LOWEST_TOTAL_COST,
    tol: float = 1e-10,
    max_iters: int = 5000,
) -> tuple[np.ndarray, MultiStrategy, bool]:
    """Equilibrium values by iterating the stage-game Nash backup.

    For transition-scope risk this computes the fixed point the Q-learner
    targets: per state, solve the stage game on the risk-adjusted costs,
    back up each player's Nash value.  Selection discontinuities can stall
    convergence; the returned flag reports whether the sup-norm change fell
    below tol.
    """
    for r in risks:
        if r.scope == JOINT and not r.is_neutral:
            raise ValueError("nash_value_iteration requires transition-scope or neutral risk")
    if game.num_players != 2:
        raise ValueError("stage-game solving is implemented for two players")
    shape = tuple(game.num_actions)
    v = np.zeros((game.num_players, game.num_states))
    converged = False
    for _ in range(max_iters):
        K = stage_costs_from_values(game, risks, v)
        v_new = np.empty_like(v)
        profiles = []
        for s in range(game.num_states):
            sg = StageGame([K[i, s].reshape(shape) for i in range(game.num_players)])
            prof = pick_equilibrium(sg, policy)
            profiles.append(prof)
            for i in range(game.num_players):
                v_new[i, s] = nash_value(sg, prof, i)
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            converged = True
            break
    x = MultiStrategy(
        [
            np.vstack([profiles[s].dists[i] for s in range(game.num_states)])
            for i in range(game.num_players)
        ]
    )
    return v, x, converged
