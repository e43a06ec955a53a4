"""Balance solves on the basic tree.

Given per-class totals ``a`` and per-pool totals ``b`` with equal sums, there is a
unique matrix supported on the tree edges with those row and column sums. It is
found by peeling leaves: a leaf's remaining total must flow through its single
edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LpProblem, lp_solve

SUM_TOL = 1e-9


class BalanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TreeSolver:
    n_cls: int
    n_pools: int
    edges: tuple[tuple[int, int], ...]
    # (leaf vertex, neighbour vertex, edge index); vertices 0..I-1 classes, I.. pools
    schedule: tuple[tuple[int, int, int], ...]
    # phi_edges = coef @ concat(a, b); entries are 0 or +-1
    coef: np.ndarray

    @classmethod
    def from_edges(cls, n_cls: int, n_pools: int, edges) -> "TreeSolver":
        edges = tuple(sorted(tuple(e) for e in edges))
        n = n_cls + n_pools
        if len(edges) != n - 1:
            raise BalanceError("edge set is not a spanning tree")
        incident = {v: set() for v in range(n)}
        for k, (i, j) in enumerate(edges):
            incident[i].add(k)
            incident[n_cls + j].add(k)
        schedule = []
        alive = set(range(n))
        while len(alive) > 1:
            leaves = sorted(v for v in alive if len(incident[v]) == 1)
            if not leaves:
                raise BalanceError("edge set contains a cycle")
            v = leaves[0]
            (k,) = incident[v]
            i, j = edges[k]
            u = n_cls + j if v == i else i
            schedule.append((v, u, k))
            incident[v].discard(k)
            incident[u].discard(k)
            alive.discard(v)
        if len(schedule) != n - 1:
            raise BalanceError("edge set is not connected")
        coef = np.zeros((n - 1, n))
        rem = np.eye(n)
        for v, u, k in schedule:
            coef[k] = rem[v]
            rem[u] -= rem[v]
        return cls(n_cls, n_pools, edges, tuple(schedule), coef)

    def _to_matrix(self, phi_edges, dtype):
        out = np.zeros((self.n_cls, self.n_pools), dtype=dtype)
        for (i, j), v in zip(self.edges, phi_edges):
            out[i, j] = v
        return out

    def solve(self, a, b) -> np.ndarray:
        """Float solve. A small mismatch of sums is absorbed by the last pool."""
        a = np.asarray(a, dtype=float)
        b = np.array(b, dtype=float)
        gap = a.sum() - b.sum()
        scale = max(1.0, float(np.abs(a).sum()), float(np.abs(b).sum()))
        if abs(gap) > SUM_TOL * scale:
            raise BalanceError(f"class and pool totals differ by {gap:.3g}")
        b[-1] += gap
        return self._to_matrix(self.coef @ np.concatenate([a, b]), float)

    def solve_int(self, a, b) -> list[list[int]]:
        """Exact solve for integer totals (plain Python ints, nested lists)."""
        rem = [int(x) for x in a] + [int(x) for x in b]
        if sum(rem[: self.n_cls]) != sum(rem[self.n_cls:]):
            raise BalanceError("integer class and pool totals differ")
        out = [[0] * self.n_pools for _ in range(self.n_cls)]
        edges = self.edges
        for v, u, k in self.schedule:
            x = rem[v]
            rem[u] -= x
            i, j = edges[k]
            out[i][j] = x
        return out

    def edge_functional(self, k: int):
        """(class coefficients, pool coefficients) of the k-th edge value."""
        return self.coef[k, : self.n_cls], self.coef[k, self.n_cls:]


def solve_tree_system(solver: TreeSolver, a, b) -> np.ndarray:
    return solver.solve(a, b)


def _max_functional(ca, cb) -> float:
    """max ca.a + cb.b over ||a||_1 <= 1, ||b||_1 <= 1, sum(a) = sum(b)."""
    n_a, n_b = ca.size, cb.size
    # variables: a+, a-, b+, b-  (all >= 0)
    c = -np.concatenate([ca, -ca, cb, -cb])
    A_ub = np.zeros((2, 2 * (n_a + n_b)))
    A_ub[0, : 2 * n_a] = 1.0
    A_ub[1, 2 * n_a:] = 1.0
    A_eq = np.concatenate([np.ones(n_a), -np.ones(n_a), -np.ones(n_b), np.ones(n_b)])[None, :]
    res = lp_solve(LpProblem(c, A_eq, [0.0], A_ub, [1.0, 1.0]))
    return -res.value


def compute_CG(solver: TreeSolver) -> float:
    """Largest edge value of the balance solve over unit l1 balls of totals."""
    best = 0.0
    for k in range(len(solver.edges)):
        ca, cb = solver.edge_functional(k)
        best = max(best, _max_functional(ca, cb), _max_functional(-ca, -cb))
    return best


def h_map(solver: TreeSolver, mu, x, j0: int = 0) -> np.ndarray:
    """Drift of the deviation from x* during hold intervals (without theta terms)."""
    x = np.asarray(x, dtype=float)
    b = np.zeros(solver.n_pools)
    b[j0] = x.sum()
    return -(np.asarray(mu) * solver.solve(x, b)).sum(axis=1)


def h_theta(solver: TreeSolver, mu, theta, i0: int = 0, j0: int = 0) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    te = theta.sum()
    ea = np.zeros(solver.n_cls)
    ea[i0] = te
    eb = np.zeros(solver.n_pools)
    eb[j0] = te
    g = solver.solve(-ea, -eb) + solver.solve(ea, theta)
    return -(np.asarray(mu) * g).sum(axis=1)


def first_l1_crossing(w, d, level: float, s_max: float):
    """Smallest s in [0, s_max] with ||w + s d||_1 >= level, or None."""
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.abs(w).sum() >= level:
        return 0.0
    if s_max <= 0:
        return None
    nz = d != 0
    roots = -w[nz] / d[nz]
    cuts = np.sort(roots[(roots > 0) & (roots < s_max)])
    lo = 0.0
    f_lo = np.abs(w).sum()
    for hi in list(cuts) + [s_max]:
        f_hi = np.abs(w + hi * d).sum()
        if f_hi >= level:
            # f is linear on [lo, hi]
            return lo + (level - f_lo) * (hi - lo) / (f_hi - f_lo)
        lo, f_lo = hi, f_hi
    return None
