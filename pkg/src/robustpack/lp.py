"""Dense two-phase simplex for the small LPs of the robust operators.

Solves ``min c@x  s.t.  A_ub@x <= b_ub, A_eq@x == b_eq, x >= 0`` with
optional free variables. Bland's rule keeps it cycle-free; problems here
have at most a few dozen variables, so a full tableau is fine.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

TOL = 1e-11


class LPError(RuntimeError):
    pass


class LPInfeasible(LPError):
    pass


class LPUnbounded(LPError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    iterations: int


def _pivot(T, row, col):
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])


def _run(T, basis, n_enter, max_iter, tol):
    """Bland-rule simplex on tableau ``T`` whose last row holds reduced costs."""
    m = T.shape[0] - 1
    for it in range(max_iter):
        cost = T[-1, :n_enter]
        neg = np.flatnonzero(cost < -tol)
        if len(neg) == 0:
            return it
        col = int(neg[0])
        a = T[:m, col]
        pos = np.flatnonzero(a > tol)
        if len(pos) == 0:
            raise LPUnbounded("objective is unbounded below")
        ratios = T[pos, -1] / a[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, row, col)
        basis[row] = col
    raise LPError(f"simplex did not finish in {max_iter} pivots")


def linprog(
    c: Sequence[float],
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    free: Optional[Sequence[int]] = None,
    max_iter: int = 10_000,
    tol: float = TOL,
) -> LPResult:
    """Minimise ``c @ x``; variables listed in ``free`` may be negative."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.empty((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.empty(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.empty((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.empty(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    free = sorted(set(free or ()))

    # split free variables into x+ - x-
    c_full = np.concatenate([c, -c[free]])
    A_ub = np.hstack([A_ub, -A_ub[:, free]])
    A_eq = np.hstack([A_eq, -A_eq[:, free]])
    nv = len(c_full)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq

    # rows: inequalities get a slack each; every row gets an artificial
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = A_ub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b = b * sign
    ncol = nv + m_ub

    T = np.zeros((m + 1, ncol + m + 1))
    T[:m, :ncol] = A
    T[:m, ncol : ncol + m] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(ncol, ncol + m)
    # phase 1: minimise the sum of artificials
    T[-1, :ncol] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    iters = _run(T, basis, ncol + m, max_iter, tol)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    if -T[-1, -1] > 1e-9 * scale:
        raise LPInfeasible(f"no feasible point (phase-1 residual {-T[-1, -1]:.3e})")

    # drive remaining artificials out of the basis, dropping redundant rows
    keep = np.ones(m, dtype=bool)
    for row in range(m):
        if basis[row] >= ncol:
            nz = np.flatnonzero(np.abs(T[row, :ncol]) > 1e-9)
            if len(nz):
                _pivot(T, row, int(nz[0]))
                basis[row] = int(nz[0])
            else:
                keep[row] = False
    T = np.vstack([T[:m][keep], T[-1:]])
    basis = basis[keep]
    T = np.hstack([T[:, :ncol], T[:, -1:]])

    # phase 2
    cost = np.concatenate([c_full, np.zeros(m_ub)])
    T[-1, :] = 0.0
    T[-1, :ncol] = cost
    for row, j in enumerate(basis):
        T[-1] -= cost[j] * T[row]
    iters += _run(T, basis, ncol, max_iter, tol)

    sol = np.zeros(ncol)
    sol[basis] = T[:-1, -1]
    x = sol[:n].copy()
    x[free] -= sol[n : n + len(free)]
    return LPResult(x=x, fun=float(c @ x), iterations=iters)
