"""Small dense linear programming: two-phase tableau simplex with Bland's rule.

Problems are tiny here (a few dozen variables), so a dense tableau that is
periodically rebuilt from the original data is both simple and accurate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-9
REFACTOR_EVERY = 50


@dataclass
class LpProblem:
    """minimize c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= lb.

    ``lb`` defaults to zero; an entry of ``-inf`` marks a free variable.
    """

    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "equality")
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n, "inequality")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        if self.lb.size != n:
            raise ValueError("lower-bound vector has wrong length")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")
        if np.any(np.isnan(self.lb)) or np.any(self.lb == np.inf):
            raise ValueError("lower bounds must be finite or -inf")

    @property
    def n_vars(self) -> int:
        return self.c.size


def _block(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise ValueError(f"{what} constraint dimensions inconsistent: A{A.shape}, b{b.shape}, n={n}")
    return A, b


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    value: float | None
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class StandardForm:
    """min c.z, A z = b, z >= 0, b >= 0, plus the map back to original variables."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    const: float
    # x = shift + P @ z
    P: np.ndarray
    shift: np.ndarray

    def recover(self, z):
        return self.shift + self.P @ z


def to_standard(problem: LpProblem) -> StandardForm:
    n = problem.n_vars
    lb = problem.lb
    free = np.isneginf(lb)
    shift = np.where(free, 0.0, lb)
    # columns: one per variable, a second (negated) one for free variables
    cols = [np.eye(n)[:, k] for k in range(n)] + [-np.eye(n)[:, k] for k in np.flatnonzero(free)]
    P = np.column_stack(cols) if cols else np.zeros((n, 0))
    m_eq, m_ub = problem.A_eq.shape[0], problem.A_ub.shape[0]
    n_z = P.shape[1]
    A = np.zeros((m_eq + m_ub, n_z + m_ub))
    A[:m_eq, :n_z] = problem.A_eq @ P
    A[m_eq:, :n_z] = problem.A_ub @ P
    A[m_eq:, n_z:] = np.eye(m_ub)
    b = np.concatenate([problem.b_eq - problem.A_eq @ shift, problem.b_ub - problem.A_ub @ shift])
    c = np.concatenate([P.T @ problem.c, np.zeros(m_ub)])
    Pfull = np.hstack([P, np.zeros((n, m_ub))])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    return StandardForm(A, b, c, float(problem.c @ shift), Pfull, shift)


class Tableau:
    """Dense simplex tableau over ``A z = b`` with an explicit basis list."""

    def __init__(self, A, b, basis):
        self.A0 = A
        self.b0 = b
        self.basis = list(basis)
        self.since_refactor = 0
        self.refactor()

    def refactor(self):
        B = self.A0[:, self.basis]
        self.T = np.linalg.solve(B, self.A0)
        self.rhs = np.linalg.solve(B, self.b0)
        self.rhs[np.abs(self.rhs) < 1e-13] = 0.0
        self.since_refactor = 0

    def pivot(self, row, col):
        T, rhs = self.T, self.rhs
        p = T[row, col]
        T[row] /= p
        rhs[row] /= p
        for r in range(T.shape[0]):
            if r != row and T[r, col] != 0.0:
                f = T[r, col]
                T[r] -= f * T[row]
                rhs[r] -= f * rhs[row]
        self.basis[row] = col
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def solution(self):
        z = np.zeros(self.A0.shape[1])
        z[self.basis] = np.maximum(self.rhs, 0.0)
        return z

    def ratio_rows(self, col):
        """Rows achieving the minimum ratio for entering column ``col``."""
        d = self.T[:, col]
        rows = np.flatnonzero(d > _PIVOT_TOL)
        if rows.size == 0:
            return []
        ratios = np.maximum(self.rhs[rows], 0.0) / d[rows]
        best = ratios.min()
        return [int(r) for r, q in zip(rows, ratios) if q <= best + 1e-12 * max(1.0, best)]


def _bland(tab: Tableau, c, allowed, max_iter):
    """Run primal simplex with Bland's rule. Returns (status, iterations)."""
    for it in range(max_iter):
        cb = c[tab.basis]
        reduced = c - cb @ tab.T
        entering = -1
        for j in np.flatnonzero(allowed):
            if reduced[j] < -1e-10 and j not in tab.basis:
                entering = int(j)
                break
        if entering < 0:
            return OPTIMAL, it
        rows = tab.ratio_rows(entering)
        if not rows:
            return UNBOUNDED, it
        leave = min(rows, key=lambda r: tab.basis[r])
        tab.pivot(leave, entering)
    raise RuntimeError("simplex iteration limit reached")


def _phase_one(sf: StandardForm, max_iter):
    """Find a feasible basis for ``A z = b``; redundant rows are dropped.

    Returns (tableau, kept_rows) or (None, None) when infeasible.
    """
    m, n = sf.A.shape
    A = np.hstack([sf.A, np.eye(m)])
    c = np.concatenate([np.zeros(n), np.ones(m)])
    tab = Tableau(A, sf.b, range(n, n + m))
    allowed = np.ones(n + m, dtype=bool)
    _bland(tab, c, allowed, max_iter)
    tab.refactor()
    infeas = float(np.sum(np.maximum(tab.rhs[[k for k, v in enumerate(tab.basis) if v >= n]], 0.0)))
    if infeas > _FEAS_TOL * max(1.0, float(np.abs(sf.b).max(initial=0.0))):
        return None, None
    # drive artificial variables out of the basis
    drop = []
    for r in range(m):
        if tab.basis[r] < n:
            continue
        cand = [j for j in range(n) if abs(tab.T[r, j]) > 1e-9 and j not in tab.basis]
        if cand:
            tab.pivot(r, cand[0])
        else:
            drop.append(r)
    basis = [tab.basis[r] for r in range(m) if r not in drop]
    kept = _independent_rows(sf.A, basis, m, drop)
    return Tableau(sf.A[kept], sf.b[kept], basis), kept


def _independent_rows(A, basis, m, drop):
    if not drop:
        return list(range(m))
    # pick rows so that A[rows][:, basis] is nonsingular
    Ab = A[:, basis]
    rows = []
    for r in range(m):
        trial = rows + [r]
        if np.linalg.matrix_rank(Ab[trial]) == len(trial):
            rows = trial
        if len(rows) == len(basis):
            break
    return rows


def lp_solve(problem: LpProblem, max_iter: int = 10_000) -> LpResult:
    """Solve an LP; the returned ``x`` is a basic (vertex) solution."""
    sf = to_standard(problem)
    if sf.A.shape[0] == 0:
        if np.any(sf.c < -1e-12):
            return LpResult(UNBOUNDED, None, None)
        x = sf.recover(np.zeros(sf.A.shape[1]))
        return LpResult(OPTIMAL, x, float(problem.c @ x))
    tab, _ = _phase_one(sf, max_iter)
    if tab is None:
        return LpResult(INFEASIBLE, None, None)
    allowed = np.ones(sf.A.shape[1], dtype=bool)
    status, iters = _bland(tab, sf.c, allowed, max_iter)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, None, None, iters)
    tab.refactor()
    x = sf.recover(tab.solution())
    return LpResult(OPTIMAL, x, float(problem.c @ x), iters)


def search_vertices(problem: LpProblem, accept, cap: int = 1000):
    """Breadth-first walk over feasible bases of the LP's feasible region.

    Every basis reachable through (possibly degenerate) pivots is visited until
    ``accept(x)`` is true for its vertex ``x`` or ``cap`` bases were inspected.
    Returns (x or None, number of bases inspected).
    """
    sf = to_standard(problem)
    tab, _ = _phase_one(sf, 10_000)
    if tab is None:
        return None, 0
    A, b = tab.A0, tab.b0
    start = tuple(sorted(tab.basis))
    seen = {start}
    queue = deque([start])
    inspected = 0
    while queue and inspected < cap:
        basis = list(queue.popleft())
        t = Tableau(A, b, basis)
        inspected += 1
        x = sf.recover(t.solution())
        if accept(x):
            return x, inspected
        for col in range(A.shape[1]):
            if col in basis:
                continue
            for row in t.ratio_rows(col):
                nb = basis.copy()
                nb[row] = col
                key = tuple(sorted(nb))
                if key in seen:
                    continue
                if abs(np.linalg.det(A[:, list(key)])) < 1e-12:
                    continue
                seen.add(key)
                queue.append(key)
    return None, inspected
