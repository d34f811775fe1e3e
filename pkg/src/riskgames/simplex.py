"""Self-contained dense two-phase simplex for the small LPs used here.

Problems are tiny (tens of variables), so the tableau is dense and pivoting
uses Bland's rule, which cannot cycle.  Minimization convention:

    min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-10

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    value: float | None


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    rhs = []
    n_slack = 0
    if A_ub is not None:
        A_ub = np.asarray(A_ub, dtype=float)
        b_ub = np.asarray(b_ub, dtype=float)
        n_slack = A_ub.shape[0]
    if A_eq is not None:
        A_eq = np.asarray(A_eq, dtype=float)
        b_eq = np.asarray(b_eq, dtype=float)

    m_ub = 0 if A_ub is None else A_ub.shape[0]
    m_eq = 0 if A_eq is None else A_eq.shape[0]
    m = m_ub + m_eq
    if m == 0:
        raise ValueError("no constraints")

    ncols = n + n_slack
    A = np.zeros((m, ncols))
    b = np.zeros(m)
    if m_ub:
        A[:m_ub, :n] = A_ub
        A[:m_ub, n : n + n_slack] = np.eye(n_slack)
        b[:m_ub] = b_ub
    if m_eq:
        A[m_ub:, :n] = A_eq
        b[m_ub:] = b_eq

    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Phase 1: artificials for every row; minimize their sum.
    art = np.arange(ncols, ncols + m)
    T = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(art)
    cost1 = np.zeros(ncols + m)
    cost1[art] = 1.0
    status = _run_simplex(T, basis, cost1)
    if status != OPTIMAL:
        return LPResult(status=INFEASIBLE, x=None, value=None)
    if float(cost1[basis] @ T[:, -1]) > 1e-7:
        return LPResult(status=INFEASIBLE, x=None, value=None)

    # Drive leftover artificials out of the basis, dropping redundant rows.
    keep = []
    for r in range(m):
        if basis[r] >= ncols:
            piv = next((j for j in range(ncols) if abs(T[r, j]) > EPS), None)
            if piv is None:
                continue  # redundant row
            _pivot(T, r, piv)
            basis[r] = piv
        keep.append(r)
    T = T[keep][:, list(range(ncols)) + [-1]]
    basis = [basis[r] for r in keep]

    cost2 = np.zeros(ncols)
    cost2[:n] = c
    status = _run_simplex(T, basis, cost2)
    if status != OPTIMAL:
        return LPResult(status=status, x=None, value=None)
    x = np.zeros(ncols)
    for r, col in enumerate(basis):
        x[col] = T[r, -1]
    return LPResult(status=OPTIMAL, x=x[:n], value=float(c @ x[:n]))


def _run_simplex(T, basis, cost) -> str:
    m = T.shape[0]
    while True:
        # Reduced costs under the current basis.
        lam = cost[basis] @ T[:, :-1]
        reduced = cost[: T.shape[1] - 1] - lam
        entering = -1
        for j in range(reduced.size):  # Bland: lowest eligible index
            if reduced[j] < -EPS:
                entering = j
                break
        if entering < 0:
            return OPTIMAL
        ratios = []
        for r in range(m):
            if T[r, entering] > EPS:
                ratios.append((T[r, -1] / T[r, entering], basis[r], r))
        if not ratios:
            return UNBOUNDED
        _, _, row = min(ratios)  # ties: smallest basis index leaves (Bland)
        _pivot(T, row, entering)
        basis[row] = entering


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
