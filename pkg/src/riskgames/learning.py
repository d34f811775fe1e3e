"""Simulation-based risk-aware Nash Q-learning.

Outer loop: epsilon-greedy self-play on stage-game equilibria of the current
Q-values, one asynchronous Q update per iteration.  Inner loop: projected
subgradient descent-ascent (the stochastic saddle-point scheme) refining the
per-(state, action) risk threshold with fresh generative samples; the Q
target is the risk integrand evaluated at the suffix-averaged saddle
iterate.  One learner process maintains the Q tables of every player
(self-play), and the saddle iterates carry across outer iterations per
state-action pair.

With the risk-neutral spec (g(x) = x) the update law collapses to classical
Nash Q-learning, bit for bit.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .game import GameSpec, MultiStrategy, TransitionSampler
from .risk import SaddleRiskSpec, half_window
from .stage import FIRST_LEMKE_HOWSON, MixedProfile, StageGame, nash_value, pick_equilibrium


@dataclass
class LearnerConfig:
    outer_iters: int = 100_000
    inner_iters: int = 10
    epsilon: float = 0.2
    beta: float = 0.5
    sasp_constant: float | None = None  # default: max diameter / Lipschitz bound
    sasp_exponent: float = 0.75
    h_y: float = 1.0
    h_z: float = 1.0
    window_rule: Callable[[int], int] = half_window
    equilibrium_policy: str = FIRST_LEMKE_HOWSON
    initial_state: int = 0
    trace_every: int = 1000
    seed: int = 0

    def validate(self) -> list[str]:
        report = []
        if self.outer_iters < 0:
            report.append("outer_iters must be >= 0")
        if self.inner_iters < 1:
            report.append("inner_iters must be >= 1")
        if not 0.0 <= self.epsilon <= 1.0:
            report.append(f"epsilon {self.epsilon} outside [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            report.append(f"beta {self.beta} outside (0, 1]")
        if not 0.5 < self.sasp_exponent <= 1.0:
            report.append(f"sasp_exponent {self.sasp_exponent} outside (1/2, 1]")
        if self.h_y <= 0 or self.h_z <= 0:
            report.append("h_y and h_z must be positive")
        return report


@dataclass
class LearnerState:
    """Mutable internals of one learner run (plain lists: hot-loop friendly)."""

    state: int
    q: list  # q[i][s][a] -> float
    visits: list  # visits[s][a] -> int, number of updates so far
    y: list  # y[i][s][a] -> float saddle iterate (threshold)
    z: list  # z[i][s][a] -> float (degenerate for the shipped specs)
    n: int = 0


@dataclass
class TraceRow:
    n: int
    dq_sup: tuple[float, ...]  # per player, max |Q change| since previous row
    wall_clock: float


@dataclass
class LearnerResult:
    qtables: np.ndarray  # (I, S, A)
    visits: np.ndarray  # (S, A)
    strategy: MultiStrategy
    trace: list[TraceRow]
    saddle_y: np.ndarray  # (I, S, A)
    saddle_z: np.ndarray
    final_state: int


def default_eta_bounds(game: GameSpec) -> tuple[float, float]:
    """Threshold box covering every possible cost-to-go value."""
    bound = math.ceil(game.value_bound()) + 1.0
    return -bound, bound


def choose_action(
    state: int,
    qtables: Sequence[np.ndarray],
    game: GameSpec,
    config: LearnerConfig,
    rng,
    equilibrium: MixedProfile | None = None,
) -> tuple[int, ...]:
    """Per-player epsilon-greedy over the stage-game equilibrium at `state`.

    Each player independently explores uniformly with probability epsilon,
    otherwise samples its own equilibrium mixture, so every joint action has
    probability at least (epsilon/|A^i|) per player.  Consumes exactly two
    uniforms per player.
    """
    if equilibrium is None:
        shape = tuple(game.num_actions)
        sg = StageGame([np.asarray(q[state]).reshape(shape) for q in qtables])
        equilibrium = pick_equilibrium(sg, config.equilibrium_policy)
    actions = []
    for i, n_i in enumerate(game.num_actions):
        explore = rng.random() < config.epsilon
        u = rng.random()
        if explore:
            actions.append(min(int(u * n_i), n_i - 1))
        else:
            cdf = np.cumsum(equilibrium.dists[i])
            actions.append(min(int(np.searchsorted(cdf, u, side="right")), n_i - 1))
    return tuple(actions)


def q_hat(
    cost: float,
    next_value: float,
    discount: float,
    y,
    z,
    spec: SaddleRiskSpec,
) -> float:
    """Estimated Q target: the risk integrand at the averaged saddle iterate,
    applied to the sampled cost-to-go."""
    return float(spec.g(cost + discount * next_value, np.atleast_1d(y), np.atleast_1d(z)))


def q_update(
    qtable: np.ndarray, s: int, a: int, target: float, visit_count: int, beta: float
) -> np.ndarray:
    """Asynchronous update of a single entry with step 1/visit_count^beta.

    visit_count is one plus the number of earlier visits, so the first visit
    overwrites the entry with the target.  Returns a copy; every other entry
    is bit-identical.
    """
    if visit_count < 1:
        raise ValueError("visit_count counts the current visit and is >= 1")
    theta = visit_count ** (-beta)
    out = qtable.copy()
    out[s, a] = (1.0 - theta) * out[s, a] + theta * target
    return out


def sasp_inner_step(
    cost: float,
    next_value: float,
    discount: float,
    y,
    z,
    spec: SaddleRiskSpec,
    lam: float,
    h_y: float = 1.0,
    h_z: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """One projected subgradient step (descent in y, ascent in z) at the
    sampled cost-to-go x = cost + discount * next_value."""
    x = cost + discount * next_value
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    gy = h_y * np.asarray(spec.g_sub_y(x, y, z), dtype=float)
    gz = h_z * np.asarray(spec.g_sub_z(x, y, z), dtype=float)
    if not (np.all(np.isfinite(gy)) and np.all(np.isfinite(gz))):
        raise ValueError("non-finite subgradient in saddle step")
    y_new = np.clip(y - lam * gy, spec.y_domain.lo, spec.y_domain.hi)
    z_new = np.clip(z + lam * gz, spec.z_domain.lo, spec.z_domain.hi)
    return y_new, z_new


def extract_equilibrium(
    game: GameSpec, qtables: Sequence[np.ndarray], policy: str = FIRST_LEMKE_HOWSON
) -> MultiStrategy:
    """Per state, the picked stage-game equilibrium of the Q tables."""
    shape = tuple(game.num_actions)
    per_player = [np.zeros((game.num_states, n)) for n in game.num_actions]
    for s in range(game.num_states):
        sg = StageGame([np.asarray(q[s]).reshape(shape) for q in qtables])
        prof = pick_equilibrium(sg, policy)
        for i in range(game.num_players):
            per_player[i][s] = prof.dists[i]
    return MultiStrategy(per_player)


def complexity_bound(
    states: int, actions: int, delta: float, epsilon: float, beta: float
) -> float:
    """Sample-complexity estimate

        (S A ln(S A / (delta eps)) / eps^2)^(1/beta) + (ln(sqrt(S A)/eps))^(1/(1-beta)),

    where `actions` should already be the joint-action count.  beta = 1
    leaves the second term undefined.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if beta == 1.0:
        raise ValueError("beta = 1 makes the exponent 1/(1-beta) undefined")
    sa = float(states * actions)
    log1 = math.log(sa / (delta * epsilon))
    log2 = math.log(math.sqrt(sa) / epsilon)
    if log1 < 0 or log2 < 0:
        raise ValueError("log arguments must be >= 1 for the bound to apply")
    return (sa * log1 / epsilon**2) ** (1.0 / beta) + log2 ** (1.0 / (1.0 - beta))


def run(
    game: GameSpec,
    specs: Sequence[SaddleRiskSpec],
    config: LearnerConfig,
    rng=None,
) -> LearnerResult:
    """Execute the outer-inner learning loop on a generative simulator.

    Each outer iteration chooses a joint action at the current state, draws
    the step-1 transition (which also advances the chain), then runs T inner
    iterations; inner iterations past the first draw fresh transitions from
    the same state-action pair.  Q bootstraps against the previous outer
    iterate's stage-game Nash values throughout the inner loop, and exactly
    one (s, a) entry per player changes per outer iteration.
    """
    problems = config.validate()
    if problems:
        raise ValueError("; ".join(problems))
    if game.num_players != 2:
        raise ValueError("the learner's stage-game solving is two-player")
    for spec in specs:
        if spec.y_domain.dim != 1 or spec.z_domain.diameter() > 0.0:
            raise NotImplementedError(
                "learner supports scalar-threshold risk specs with point z"
            )
    if rng is None:
        rng = np.random.default_rng(config.seed)

    I = game.num_players
    S = game.num_states
    A = game.num_joint_actions
    n1, n2 = game.num_actions
    gamma = game.discount
    sampler = TransitionSampler(game)
    shape = tuple(game.num_actions)

    step_c = [
        config.sasp_constant if config.sasp_constant is not None else sp.default_step_constant()
        for sp in specs
    ]
    y_lo = [float(sp.y_domain.lo[0]) for sp in specs]
    y_hi = [float(sp.y_domain.hi[0]) for sp in specs]
    y0 = [0.5 * (lo + hi) for lo, hi in zip(y_lo, y_hi)]
    g = [sp.g for sp in specs]
    g_sub = [sp.g_sub_y for sp in specs]
    zero = np.zeros(1)

    state = LearnerState(
        state=config.initial_state,
        q=[[[0.0] * A for _ in range(S)] for _ in range(I)],
        visits=[[0] * A for _ in range(S)],
        y=[[[y0[i]] * A for _ in range(S)] for i in range(I)],
        z=[[[0.0] * A for _ in range(S)] for i in range(I)],
    )

    # Stage-game equilibria of the current Q, memoized per state; an entry
    # is dropped when that state's Q row changes.
    eq_cache: dict[int, tuple] = {}

    def stage_eq(s):
        hit = eq_cache.get(s)
        if hit is not None:
            return hit
        sg = StageGame(
            [np.array(state.q[i][s], dtype=float).reshape(shape) for i in range(I)]
        )
        prof = pick_equilibrium(sg, config.equilibrium_policy)
        values = tuple(nash_value(sg, prof, i) for i in range(I))
        cdfs = tuple(list(np.cumsum(prof.dists[i])) for i in range(I))
        entry = (cdfs, prof, values)
        eq_cache[s] = entry
        return entry

    exponent = config.sasp_exponent
    T = config.inner_iters
    win_start = max(1, min(config.window_rule(T), T))
    eps = config.epsilon
    beta = config.beta
    trace: list[TraceRow] = []
    dq_running = [0.0] * I
    t0 = time.perf_counter()

    s = state.state
    for n in range(1, config.outer_iters + 1):
        cdfs, _, _ = stage_eq(s)
        # Step 1: epsilon-greedy action per player (two uniforms each).
        if rng.random() < eps:
            a1 = min(int(rng.random() * n1), n1 - 1)
        else:
            a1 = min(bisect_right(cdfs[0], rng.random()), n1 - 1)
        if rng.random() < eps:
            a2 = min(int(rng.random() * n2), n2 - 1)
        else:
            a2 = min(bisect_right(cdfs[1], rng.random()), n2 - 1)
        a = a1 * n2 + a2

        costs = sampler.costs(s, a)
        s_next = sampler.draw(s, a, rng.random())

        state.visits[s][a] += 1
        theta = state.visits[s][a] ** (-beta)

        boot: dict[int, tuple] = {}

        def boot_values(k):
            got = boot.get(k)
            if got is None:
                got = stage_eq(k)[2]
                boot[k] = got
            return got

        y_cur = [state.y[i][s][a] for i in range(I)]
        windows = [[] for _ in range(I)]
        targets = [0.0] * I
        sample_state = s_next
        for t in range(1, T + 1):
            if t > 1:
                sample_state = sampler.draw(s, a, rng.random())
            v_boot = boot_values(sample_state)
            lam = None
            for i in range(I):
                x = costs[i] + gamma * v_boot[i]
                windows[i].append(y_cur[i])
                if t == T:
                    span = windows[i][win_start - 1 :]
                    y_avg = math.fsum(span) / len(span)
                    targets[i] = float(g[i](x, np.array([y_avg]), zero))
                if lam is None:
                    lam = t ** (-exponent)
                sub = float(g_sub[i](x, np.array([y_cur[i]]), zero)[0])
                y_new = y_cur[i] - step_c[i] * lam * config.h_y * sub
                if y_new < y_lo[i]:
                    y_new = y_lo[i]
                elif y_new > y_hi[i]:
                    y_new = y_hi[i]
                y_cur[i] = y_new

        # Step 3, final inner write: mixes the previous outer iterate with
        # the last target (earlier inner writes are overwritten by design).
        for i in range(I):
            state.y[i][s][a] = y_cur[i]
            prev = state.q[i][s][a]
            new = (1.0 - theta) * prev + theta * targets[i]
            state.q[i][s][a] = new
            d = abs(new - prev)
            if d > dq_running[i]:
                dq_running[i] = d
        eq_cache.pop(s, None)

        if n % config.trace_every == 0 or n == config.outer_iters:
            trace.append(
                TraceRow(
                    n=n,
                    dq_sup=tuple(dq_running),
                    wall_clock=time.perf_counter() - t0,
                )
            )
            dq_running = [0.0] * I

        s = s_next
        state.n = n
        state.state = s

    qtables = np.array([[row[:] for row in state.q[i]] for i in range(I)], dtype=float)
    strategy = extract_equilibrium(game, qtables, config.equilibrium_policy)
    return LearnerResult(
        qtables=qtables,
        visits=np.array(state.visits, dtype=int),
        strategy=strategy,
        trace=trace,
        saddle_y=np.array(state.y, dtype=float),
        saddle_z=np.array(state.z, dtype=float),
        final_state=state.state,
    )


def save_checkpoint(path, result: LearnerResult) -> None:
    """Flat binary checkpoint: per-player Q tables, visit counts, saddle
    iterates (numpy .npz archive with named arrays)."""
    np.savez(
        path,
        qtables=result.qtables,
        visits=result.visits,
        saddle_y=result.saddle_y,
        saddle_z=result.saddle_z,
        final_state=np.array([result.final_state]),
    )


def load_checkpoint(path) -> dict:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}
