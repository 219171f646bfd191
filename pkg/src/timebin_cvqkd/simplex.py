"""Dense two-phase simplex for the small decoy-estimation programs.

Problem sizes here are tiny (about a dozen variables, two dozen rows), and
determinism matters more than speed: Bland's rule fixes the pivot order by
variable index, which also prevents cycling.  Rows are equilibrated before
solving because Poisson coefficients span many orders of magnitude.

Unlike general-purpose solvers, no matrix coefficient is ever dropped; the
near-degenerate constraints produced by very weak decoy intensities are
resolved exactly as given.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TimebinCvqkdError

_REDCOST_TOL = 1e-13
_PIVOT_TOL = 1e-13
_PHASE1_TOL = 1e-8


class LPError(TimebinCvqkdError, RuntimeError):
    """The simplex failed (unbounded objective or iteration limit)."""


class LPInfeasible(LPError):
    """The constraint system admits no feasible point."""


@dataclass(frozen=True, slots=True)
class LPSolution:
    x: np.ndarray          # primal solution (original variables)
    objective: float
    duals: np.ndarray      # one multiplier per <= row, non-negative


def solve(c, a_ub, b_ub, maximize: bool = False, max_iter: int = 100000) -> LPSolution:
    """min (or max) c.x subject to a_ub x <= b_ub and x >= 0.

    Returns the optimum together with the dual multipliers y >= 0 of the
    rows, satisfying strong duality y.b = objective (for the minimization
    form) and dual feasibility a_ub^T y >= -c elementwise... in the sign
    convention used by :mod:`timebin_cvqkd.decoy` certificate extraction:
    for ``min c.x``, the returned ``duals`` obey

        objective = duals . b_ub      and      c + a_ub^T (-duals) >= 0.

    Raises:
        LPInfeasible: if no feasible point exists.
        LPError: if the problem is unbounded or the iteration limit is hit.
    """
    c = np.asarray(c, dtype=float)
    a = np.array(a_ub, dtype=float)
    b = np.array(b_ub, dtype=float)
    if maximize:
        sol = solve(-c, a, b, maximize=False, max_iter=max_iter)
        return LPSolution(x=sol.x, objective=-sol.objective, duals=-sol.duals)
    m, n = a.shape
    scale = np.max(np.abs(a), axis=1)
    scale[scale == 0.0] = 1.0
    a = a / scale[:, None]
    b = b / scale

    tableau = np.zeros((m, n + m))
    tableau[:, :n] = a
    tableau[:, n:] = np.eye(m)
    rhs = b.copy()
    basis = list(range(n, n + m))
    negative = [i for i in range(m) if rhs[i] < 0.0]
    if negative:
        nart = len(negative)
        t1 = np.zeros((m, n + m + nart))
        t1[:, :n + m] = tableau
        for j, i in enumerate(negative):
            t1[i, :] *= -1.0
            rhs[i] *= -1.0
            t1[i, n + m + j] = 1.0
            basis[i] = n + m + j
        cost1 = np.zeros(n + m + nart)
        cost1[n + m:] = 1.0
        t1, rhs, basis, obj1 = _iterate(t1, rhs, basis, cost1, max_iter)
        if obj1 > _PHASE1_TOL:
            raise LPInfeasible(f"phase-1 residual {obj1:.3e}")
        for i in range(m):
            if basis[i] >= n + m:  # drive zero-level artificials out
                for j in range(n + m):
                    if abs(t1[i, j]) > 1e-9:
                        _pivot(t1, rhs, i, j)
                        basis[i] = j
                        break
        tableau = t1[:, :n + m]

    cost = np.zeros(n + m)
    cost[:n] = c
    tableau, rhs, basis, objective = _iterate(tableau, rhs, basis, cost, max_iter)
    x = np.zeros(n + m)
    for i, bi in enumerate(basis):
        if bi < n + m:
            x[bi] = rhs[i]
    reduced = cost - cost[basis] @ tableau
    duals = -reduced[n:] / scale
    return LPSolution(x=x[:n], objective=float(objective), duals=duals)


def _pivot(tableau, rhs, row, col):
    piv = tableau[row, col]
    tableau[row, :] /= piv
    rhs[row] /= piv
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= factors[:, None] * tableau[row, :][None, :]
    rhs -= factors * rhs[row]


def _iterate(tableau, rhs, basis, cost, max_iter):
    m = tableau.shape[0]
    for _ in range(max_iter):
        reduced = cost - cost[basis] @ tableau
        enter = -1
        for j in range(tableau.shape[1]):  # Bland: smallest entering index
            if reduced[j] < -_REDCOST_TOL:
                enter = j
                break
        if enter < 0:
            return tableau, rhs, basis, float(cost[basis] @ rhs)
        leave = -1
        best = np.inf
        for i in range(m):
            coef = tableau[i, enter]
            if coef > _PIVOT_TOL:
                ratio = rhs[i] / coef
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15
                                            and (leave < 0 or basis[i] < basis[leave])):
                    best = ratio
                    leave = i
        if leave < 0:
            raise LPError("objective unbounded below")
        _pivot(tableau, rhs, leave, enter)
        basis[leave] = enter
    raise LPError(f"no optimum within {max_iter} pivots")
