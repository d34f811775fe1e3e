"""One-shot stage games on cost tensors: solving, certifying, classifying.

Everything is in minimization convention.  Lemke-Howson runs on negated,
positively shifted matrices (the standard form expects positive payoffs)
with lexicographic pivoting so degenerate games do not cycle; a bounded
pivot count turns pathological instances into a typed failure that callers
handle by falling back to the enumeration oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

GAIN_TOL = 1e-8


class LemkeHowsonFailure(RuntimeError):
    """Pivoting exceeded its bound or hit a ray; fall back to enumeration."""


@dataclass
class StageGame:
    """Per-player cost tensor over joint actions, player axes in order."""

    costs: list[np.ndarray]

    def __post_init__(self):
        self.costs = [np.asarray(c, dtype=float) for c in self.costs]
        shape = self.costs[0].shape
        if any(c.shape != shape for c in self.costs):
            raise ValueError("players disagree on the joint action shape")
        if len(shape) != len(self.costs):
            raise ValueError(
                f"{len(self.costs)} players but cost tensors have {len(shape)} axes"
            )
        if not all(np.all(np.isfinite(c)) for c in self.costs):
            raise ValueError("non-finite stage cost")

    @property
    def num_players(self) -> int:
        return len(self.costs)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.costs[0].shape

    @classmethod
    def bimatrix(cls, a, b) -> "StageGame":
        return cls([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])


@dataclass
class MixedProfile:
    """One probability vector over own actions per player."""

    dists: list[np.ndarray]

    def __post_init__(self):
        self.dists = [np.asarray(d, dtype=float) for d in self.dists]

    @classmethod
    def pure(cls, shape, actions) -> "MixedProfile":
        dists = []
        for n, a in zip(shape, actions):
            v = np.zeros(n)
            v[a] = 1.0
            dists.append(v)
        return cls(dists)

    def key(self) -> tuple:
        """Rounded concatenation; used for dedup and lexicographic order."""
        return tuple(round(float(v), 9) for d in self.dists for v in d)


@dataclass
class EquilibriumClassification:
    kind: str  # global_optimal | saddle | mixed_point | plain_nash
    players: tuple[int, ...]  # the subset for mixed_point, else empty
    tol: float


def nash_value(game: StageGame, profile: MixedProfile, player: int) -> float:
    """Expected cost sum_a (prod_j x^j(a^j)) Q^player(a)."""
    arr = game.costs[player]
    for d in profile.dists:
        arr = np.tensordot(d, arr, axes=([0], [0]))
    return float(arr)


def _own_action_costs(game: StageGame, profile: MixedProfile, player: int) -> np.ndarray:
    """Expected cost per own action, others mixing per the profile."""
    arr = np.moveaxis(game.costs[player], player, 0)
    for j in range(game.num_players):
        if j == player:
            continue
        arr = np.tensordot(arr, profile.dists[j], axes=([1], [0]))
    return arr


def _others_deviation_costs(game: StageGame, profile: MixedProfile, player: int) -> np.ndarray:
    """Expected cost per pure joint deviation of the other players."""
    arr = np.tensordot(profile.dists[player], np.moveaxis(game.costs[player], player, 0),
                       axes=([0], [0]))
    return arr.reshape(-1)


def best_unilateral_gain(game: StageGame, profile: MixedProfile) -> float:
    """Max over players of (current cost - best deviation cost).

    Nonpositive up to tolerance iff the profile is an epsilon-Nash point;
    pure deviations suffice because expected cost is linear in own strategy.
    """
    worst = -np.inf
    for i in range(game.num_players):
        costs = _own_action_costs(game, profile, i)
        current = float(profile.dists[i] @ costs)
        worst = max(worst, current - float(costs.min()))
    return worst


def lemke_howson(game: StageGame, initial_label: int = 0) -> MixedProfile:
    """First equilibrium reached by complementary pivoting from a label.

    Deterministic for a fixed initial label, which is what defines "the
    first equilibrium generated".  Raises LemkeHowsonFailure when pivoting
    exceeds its bound or the entering column has no positive entry.
    """
    if game.num_players != 2:
        raise ValueError("Lemke-Howson applies to two-player games")
    a, b = game.costs
    m, n = a.shape
    if not 0 <= initial_label < m + n:
        raise ValueError(f"initial label {initial_label} outside [0, {m + n})")

    # Costs -> positive payoffs, normalized so tableau entries stay O(1).
    top = max(a.max(), b.max())
    pay1 = (top + 1.0) - a
    pay2 = (top + 1.0) - b
    scale = max(pay1.max(), pay2.max())
    pay1 = pay1 / scale
    pay2 = pay2 / scale

    width = m + n + 1
    # TX: rows are P2's payoff constraints over x; basis starts at slack
    # labels m..m+n-1.  TY: P1's constraints over y; basis labels 0..m-1.
    tx = [[float(pay2[i][j]) for i in range(m)]
          + [1.0 if c == j else 0.0 for c in range(n)] + [1.0]
          for j in range(n)]
    ty = [[1.0 if c == i else 0.0 for c in range(m)]
          + [float(pay1[i][j]) for j in range(n)] + [1.0]
          for i in range(m)]
    basis_x = list(range(m, m + n))
    basis_y = list(range(m))

    def pivot(tab, basis, entering):
        best_row = -1
        best_key = None
        for r in range(len(tab)):
            coef = tab[r][entering]
            if coef <= 1e-11:
                continue
            key = [tab[r][width - 1] / coef]
            if best_row >= 0 and key[0] > best_key[0] + 1e-11:
                continue
            # Lexicographic tie-break over all columns prevents cycling.
            key += [tab[r][c] / coef for c in range(width - 1)]
            if best_row < 0 or key < best_key:
                best_row, best_key = r, key
        if best_row < 0:
            raise LemkeHowsonFailure(f"no positive pivot in column {entering}")
        row = tab[best_row]
        coef = row[entering]
        for c in range(width):
            row[c] /= coef
        for r in range(len(tab)):
            if r == best_row:
                continue
            f = tab[r][entering]
            if f != 0.0:
                other = tab[r]
                for c in range(width):
                    other[c] -= f * row[c]
        leaving = basis[best_row]
        basis[best_row] = entering
        return leaving

    max_pivots = 2 * comb(m + n, min(m, n)) + 16
    label = initial_label
    in_x = initial_label < m  # x variables live in TX, y variables in TY
    for _ in range(max_pivots):
        if in_x:
            label = pivot(tx, basis_x, label)
        else:
            label = pivot(ty, basis_y, label)
        if label == initial_label:
            break
        in_x = label < m
    else:
        raise LemkeHowsonFailure(f"pivot bound {max_pivots} exceeded")

    x = np.zeros(m)
    for r, lbl in enumerate(basis_x):
        if lbl < m:
            x[lbl] = max(tx[r][width - 1], 0.0)
    y = np.zeros(n)
    for r, lbl in enumerate(basis_y):
        if lbl >= m:
            y[lbl - m] = max(ty[r][width - 1], 0.0)
    if x.sum() <= 0 or y.sum() <= 0:
        raise LemkeHowsonFailure("degenerate terminal basis (zero strategy)")
    return MixedProfile([x / x.sum(), y / y.sum()])


def enumerate_equilibria(game: StageGame, tol: float = GAIN_TOL) -> list[MixedProfile]:
    """All equilibria of a small bimatrix game by support enumeration.

    Solves the indifference systems for every equal-size support pair and
    keeps solutions that certify as epsilon-Nash.  Singular systems are
    attempted by least squares, so continuum (degenerate) equilibria yield
    representative vertices.  Output is sorted lexicographically.
    """
    if game.num_players != 2:
        raise ValueError("support enumeration applies to two-player games")
    a, b = game.costs
    m, n = a.shape
    if max(m, n) > 5:
        raise ValueError("support enumeration is limited to 5 actions per player")

    found: dict[tuple, MixedProfile] = {}
    for k in range(1, min(m, n) + 1):
        rhs = np.zeros(k + 1)
        rhs[-1] = 1.0
        for sup1 in itertools.combinations(range(m), k):
            for sup2 in itertools.combinations(range(n), k):
                x = _solve_indifference(b.T, sup2, sup1, rhs)
                if x is None:
                    continue
                y = _solve_indifference(a, sup1, sup2, rhs)
                if y is None:
                    continue
                xf = np.zeros(m)
                xf[list(sup1)] = x
                yf = np.zeros(n)
                yf[list(sup2)] = y
                prof = MixedProfile([xf, yf])
                if best_unilateral_gain(game, prof) < tol:
                    found.setdefault(prof.key(), prof)
    return [found[k] for k in sorted(found)]


def _solve_indifference(cost, own_support, other_support, rhs):
    """Mixed vector for `other` making `own` indifferent on its support.

    cost is the own-player cost matrix with own actions on rows.  Returns
    the probability vector over other_support, or None if infeasible.
    """
    k = len(other_support)
    sys = np.zeros((k + 1, k + 1))
    sys[:k, :k] = cost[np.ix_(own_support, other_support)]
    sys[:k, k] = -1.0  # common indifference value
    sys[k, :k] = 1.0
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError:
        sol, residual, rank, _ = np.linalg.lstsq(sys, rhs, rcond=None)
        if rank < k + 1 and np.linalg.norm(sys @ sol - rhs) > 1e-9:
            return None
    probs = sol[:k]
    if np.any(probs < -1e-9):
        return None
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if total <= 0:
        return None
    return probs / total


def classify(game: StageGame, profile: MixedProfile, tol: float = 1e-9) -> EquilibriumClassification:
    """Classify an equilibrium: global optimal, saddle, mixed point, or plain.

    * global_optimal: every player attains its global minimum expected cost
      (checked at pure joint actions, which is sufficient by multilinearity).
    * saddle: every player's cost weakly decreases whenever the others
      deviate (checked at the others' pure joint deviations).
    * mixed_point(I'): the players in I' behave saddle-like and the rest
      never benefit from the others' deviations; I' nonempty and proper.
    """
    gain = best_unilateral_gain(game, profile)
    if gain > tol:
        raise ValueError(f"profile is not an equilibrium at tol {tol} (gain {gain:.3g})")

    current = [nash_value(game, profile, i) for i in range(game.num_players)]
    if all(current[i] <= float(game.costs[i].min()) + tol for i in range(game.num_players)):
        return EquilibriumClassification("global_optimal", (), tol)

    saddle_like = []
    global_like = []
    for i in range(game.num_players):
        devs = _others_deviation_costs(game, profile, i)
        saddle_like.append(bool(devs.max() <= current[i] + tol))
        global_like.append(bool(devs.min() >= current[i] - tol))
    if all(saddle_like):
        return EquilibriumClassification("saddle", (), tol)
    subset = tuple(i for i in range(game.num_players) if saddle_like[i])
    rest_ok = all(global_like[i] for i in range(game.num_players) if i not in subset)
    if subset and len(subset) < game.num_players and rest_ok:
        return EquilibriumClassification("mixed_point", subset, tol)
    return EquilibriumClassification("plain_nash", (), tol)


FIRST_LEMKE_HOWSON = "first_lemke_howson"
LOWEST_TOTAL_COST = "lowest_total_cost"


def pick_equilibrium(game: StageGame, policy: str = FIRST_LEMKE_HOWSON) -> MixedProfile:
    """Deterministic equilibrium selection.

    first_lemke_howson pivots from label 0 and falls back to enumeration
    order on failure; lowest_total_cost enumerates and takes the profile
    with the smallest summed expected cost (lexicographic first on ties).
    """
    if policy == FIRST_LEMKE_HOWSON:
        try:
            return lemke_howson(game, initial_label=0)
        except LemkeHowsonFailure:
            candidates = enumerate_equilibria(game)
            if not candidates:
                raise LemkeHowsonFailure("no equilibrium found by either route")
            return candidates[0]
    if policy == LOWEST_TOTAL_COST:
        candidates = enumerate_equilibria(game)
        if not candidates:
            raise LemkeHowsonFailure("no equilibrium found by enumeration")
        totals = [
            sum(nash_value(game, p, i) for i in range(game.num_players))
            for p in candidates
        ]
        return candidates[int(np.argmin(np.round(totals, 12)))]
    raise ValueError(f"unknown selection policy {policy!r}")
