"""Dense two-phase revised simplex for equality-form linear programs.

Solves  min c'x  s.t.  Ax = b, x >= 0.  Small and deliberately boring: the
restricted master problems this package builds stay in the hundreds of rows,
where a dense basis inverse with periodic refactorization is plenty.  Entering
variables follow Dantzig's rule until degeneracy stalls progress, then Bland's
rule takes over to guarantee termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LimitError, UnboundedError

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
REFACTOR_EVERY = 64

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: str
    objective: float
    x: np.ndarray
    duals: np.ndarray
    basis: list[int]
    iterations: int


class _Tableau:
    """Basis bookkeeping: inverse maintained by eta updates + refactoring."""

    def __init__(self, A: np.ndarray, basis: list[int]):
        self.A = A
        self.basis = list(basis)
        self._pivots = 0
        self.refactor()

    def refactor(self) -> None:
        self.b_inv = np.linalg.inv(self.A[:, self.basis])
        self._pivots = 0

    def replace(self, row: int, col: int, direction: np.ndarray) -> None:
        self.basis[row] = col
        if self._pivots >= REFACTOR_EVERY:
            self.refactor()
            return
        m = len(self.basis)
        eta = np.eye(m)
        eta[:, row] = -direction / direction[row]
        eta[row, row] = 1.0 / direction[row]
        self.b_inv = eta @ self.b_inv
        self._pivots += 1


def _primal(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    basis: list[int],
    blocked: set[int] | None = None,
    maxiter: int | None = None,
):
    """Primal simplex from a feasible basis.

    Returns (status, tableau, iterations).  ``blocked`` columns may leave the
    basis but never enter (used to keep phase-1 artificials out).
    """
    m, n = A.shape
    tab = _Tableau(A, basis)
    if maxiter is None:
        maxiter = 500 * (m + n + 10)
    bland_after = 10 * (m + n)
    degenerate_run = 0
    bland = False
    it = 0
    while True:
        it += 1
        if it > maxiter:
            raise LimitError("simplex iteration limit exceeded")
        xb = tab.b_inv @ b
        y = c[tab.basis] @ tab.b_inv
        rc = c - y @ A
        rc[tab.basis] = 0.0
        # reduced-cost noise scales with the costs in the basis (think huge
        # artificial penalties): an absolute epsilon would chase phantom
        # pivots whose true reduced cost is zero, and even Bland's rule
        # cannot break a cycle driven by wrong signs
        tol_entry = max(OPT_TOL, 1e-11 * (1.0 + float(np.abs(c[tab.basis]).max())))
        candidates = np.flatnonzero(rc < -tol_entry)
        if blocked:
            candidates = candidates[~np.isin(candidates, list(blocked))]
        if candidates.size == 0:
            return OPTIMAL, tab, it
        if bland:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmin(rc[candidates])])
        d = tab.b_inv @ A[:, enter]
        pos = np.flatnonzero(d > PIVOT_TOL)
        if pos.size == 0:
            return UNBOUNDED, tab, it
        # warm bases may carry slightly negative entries (validated down to
        # -1e-7); stepping by a negative theta would leave the feasible region
        ratios = np.maximum(xb[pos], 0.0) / d[pos]
        theta = ratios.min()
        ties = pos[np.flatnonzero(ratios <= theta + FEAS_TOL)]
        if bland:
            # leave the basic variable with the smallest index
            leave = int(ties[np.argmin(np.asarray(tab.basis)[ties])])
        else:
            leave = int(ties[np.argmax(d[ties])])
        if theta <= FEAS_TOL:
            degenerate_run += 1
            if degenerate_run > bland_after:
                bland = True
        else:
            degenerate_run = 0
        tab.replace(leave, enter, d)


def _phase1(A: np.ndarray, b: np.ndarray, maxiter: int | None):
    """Find a feasible basis with artificials; None when infeasible."""
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = np.hstack([A * sign[:, None], np.eye(m)])
    b1 = b * sign
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    # artificials may leave but never re-enter, so artificial n+i can only
    # ever be basic at position i -- which makes dropping row i sound below
    status, tab, its = _primal(
        c1, A1, b1, basis, blocked=set(range(n, n + m)), maxiter=maxiter
    )
    if status != OPTIMAL:  # pragma: no cover - phase 1 is always bounded
        raise UnboundedError("phase 1 cannot be unbounded")
    xb = tab.b_inv @ b1
    if c1[tab.basis] @ xb > 1e-7:
        return None, its
    # pivot artificials out; rows where that fails are redundant
    drop_rows: list[int] = []
    for row, col in enumerate(tab.basis):
        if col < n:
            continue
        assert col == n + row
        pivot_row = tab.b_inv[row] @ A1[:, :n]
        j = int(np.argmax(np.abs(pivot_row)))
        if abs(pivot_row[j]) > 1e-7:
            tab.replace(row, j, tab.b_inv @ A1[:, j])
        else:
            drop_rows.append(row)
    keep = [i for i in range(m) if i not in drop_rows]
    basis = [tab.basis[i] for i in keep if tab.basis[i] < n]
    if len(basis) != len(keep):  # pragma: no cover - defensive
        raise UnboundedError("failed to purge artificial variables")
    return (keep, sign, basis, its), its


def solve_lp(
    c,
    A,
    b,
    basis: list[int] | None = None,
    maxiter: int | None = None,
) -> LpResult:
    """Minimize c'x subject to Ax = b, x >= 0.

    ``basis`` warm-starts phase 2 when it is primal feasible; otherwise a
    phase-1 run builds one.  Duals come back in the original row order (zero
    for rows detected as redundant).
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float).ravel()
    c = np.array(c, dtype=float).ravel()
    m, n = A.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent LP dimensions")

    iterations = 0
    if basis is not None:
        basis = list(basis)
        ok = len(basis) == m and len(set(basis)) == m
        if ok:
            try:
                xb = np.linalg.solve(A[:, basis], b)
            except np.linalg.LinAlgError:
                ok = False
            else:
                ok = bool(xb.min() >= -1e-7)
        if ok:
            res = _finish(c, A, b, basis, maxiter, np.arange(m), np.ones(m), m)
            if res is not None:
                return res
        basis = None

    found, its = _phase1(A, b, maxiter)
    iterations += its
    if found is None:
        return LpResult(INFEASIBLE, float("nan"), np.zeros(n), np.zeros(m), [], iterations)
    keep, sign, basis, _ = found
    res = _finish(
        c,
        A[keep] * sign[keep, None],
        b[keep] * sign[keep],
        basis,
        maxiter,
        np.asarray(keep),
        sign[keep],
        m,
    )
    if res is None:  # pragma: no cover - phase-1 basis is feasible
        raise UnboundedError("lost feasibility between phases")
    res.iterations += iterations
    return res


def _finish(c, A, b, basis, maxiter, row_map, row_sign, m_total):
    """Phase 2 from a feasible basis; None when the start basis is unusable."""
    try:
        status, tab, its = _primal(c, A, b, basis, maxiter=maxiter)
    except np.linalg.LinAlgError:
        return None
    n = A.shape[1]
    xb = tab.b_inv @ b
    if xb.min() < -1e-6:
        return None  # numerically lost: let the caller cold-start
    x = np.zeros(n)
    x[tab.basis] = np.maximum(xb, 0.0)
    duals = np.zeros(m_total)
    y = c[tab.basis] @ tab.b_inv
    duals[row_map] = y * row_sign
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, -float("inf"), x, duals, list(tab.basis), its)
    return LpResult(OPTIMAL, float(c @ x), x, duals, list(tab.basis), its)
