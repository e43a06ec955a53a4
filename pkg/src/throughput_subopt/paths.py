"""Throughput (sub)optimality: signed simple paths on the basic tree and the M_max LP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lp import LpProblem, lp_solve
from .network import NetworkSpec
from .static import StaticAllocation

TOL_VERDICT = 1e-9


class ConsistencyError(RuntimeError):
    """Path enumeration and the LP disagree: always a bug."""


@dataclass(frozen=True)
class SimplePath:
    """A basic tree path from class ``vertices[0]`` to pool ``vertices[-1]``.

    ``vertices`` alternates class, pool, class, ... as (i0, j0, i1, ..., ik, jk).
    The pair (i0, jk) closes the path; it is an edge of the path only when it is
    an activity (``kind == "closed"``).
    """

    vertices: tuple[int, ...]
    kind: str
    signs: dict = field(hash=False, compare=False)
    weight: float = field(compare=False)

    @property
    def closure(self) -> tuple[int, int]:
        return self.vertices[0], self.vertices[-1]

    @property
    def k(self) -> int:
        return len(self.vertices) // 2 - 1

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(self.signs)

    @property
    def basic_edges(self) -> list[tuple[int, int]]:
        v = self.vertices
        out = []
        for m in range(self.k + 1):
            out.append((v[2 * m], v[2 * m + 1]))
            if m >= 1:
                out.append((v[2 * m], v[2 * m - 1]))
        return out

    def to_dict(self) -> dict:
        return {
            "classes": [c + 1 for c in self.vertices[0::2]],
            "pools": [p + 1 for p in self.vertices[1::2]],
            "kind": self.kind,
            "closure": [self.closure[0] + 1, self.closure[1] + 1],
            "signs": [[i + 1, j + 1, s] for (i, j), s in self.signs.items()],
            "weight": self.weight,
        }


def _tree_path(alloc: StaticAllocation, i: int, j: int):
    """Vertices on the unique tree path from class i to pool j (inclusive)."""
    adj = alloc.tree_adjacency
    start, goal = ("c", i), ("p", j)
    parent = {start: None}
    stack = [start]
    while stack:
        v = stack.pop()
        if v == goal:
            break
        for u in adj[v]:
            if u not in parent:
                parent[u] = v
                stack.append(u)
    path = []
    v = goal
    while v is not None:
        path.append(v[1])
        v = parent[v]
    return path[::-1]


def path_signs(vertices, closed: bool) -> dict:
    """Sign map for a path: pool->class traversal is +1, class->pool is -1.

    Traversal runs from the pool end jk back to i0; the closure i0 -> jk is -1.
    """
    k = len(vertices) // 2 - 1
    signs = {}
    for m in range(k + 1):
        signs[(vertices[2 * m], vertices[2 * m + 1])] = 1  # j_m -> i_m
        if m >= 1:
            signs[(vertices[2 * m], vertices[2 * m - 1])] = -1  # i_m -> j_{m-1}
    if closed:
        signs[(vertices[0], vertices[-1])] = -1
    return signs


def path_signed_weight(path: SimplePath, spec: NetworkSpec) -> float:
    return float(sum(s * spec.mu[i, j] for (i, j), s in path.signs.items()))


def enumerate_simple_paths(alloc: StaticAllocation, spec: NetworkSpec) -> list[SimplePath]:
    """One path per class-pool pair at tree distance >= 3."""
    basic = set(alloc.basic_edges)
    paths = []
    for i in range(spec.n_classes):
        for j in range(spec.n_pools):
            if (i, j) in basic:
                continue
            verts = tuple(_tree_path(alloc, i, j))
            closed = bool(spec.mu[i, j] > 0)
            signs = path_signs(verts, closed)
            weight = float(sum(s * spec.mu[a, b] for (a, b), s in signs.items()))
            paths.append(SimplePath(verts, "closed" if closed else "open", signs, weight))
    return paths


def path_perturbation(path: SimplePath, alloc: StaticAllocation) -> np.ndarray:
    """psi* shifted along the path by the smallest basic mass on it.

    For a path of negative weight the result keeps class and pool totals below
    their static values while strictly raising the total processing rate.
    """
    step = min(alloc.psi_star[e] for e in path.basic_edges)
    psi = alloc.psi_star.copy()
    for e, s in path.signs.items():
        psi[e] -= step * s
    return psi


def check_perturbation(psi, alloc: StaticAllocation, spec: NetworkSpec, tol: float = 1e-12) -> dict:
    """Conditions for ``psi`` to certify suboptimality; each value is a bool."""
    return {
        "nonnegative": bool(np.all(psi >= -tol)),
        "pool_capacity": bool(np.all(psi.sum(axis=0) <= spec.nu + tol)),
        "class_mass": bool(np.all(psi.sum(axis=1) <= alloc.x_star + tol)),
        "rate_gain": bool((spec.mu * psi).sum() > spec.lam.sum() + tol),
    }


def solve_mmax(alloc: StaticAllocation, spec: NetworkSpec):
    """Maximise sum mu*sigma over admissible reallocations sigma of psi*.

    Returns (m_max, sigma) where sigma is an I x J optimiser.
    """
    acts = spec.activity_list()
    n_cls, n_pools = spec.n_classes, spec.n_pools
    k = len(acts)
    A_ub = np.zeros((n_cls + n_pools, k))
    c = np.zeros(k)
    lb = np.zeros(k)
    for col, (i, j) in enumerate(acts):
        A_ub[i, col] = 1.0
        A_ub[n_cls + j, col] = 1.0
        c[col] = -spec.mu[i, j]
        lb[col] = -alloc.psi_star[i, j]
    res = lp_solve(LpProblem(c, A_ub=A_ub, b_ub=np.zeros(n_cls + n_pools), lb=lb))
    if not res.ok:
        raise ConsistencyError(f"M_max LP returned status {res.status}")
    sigma = np.zeros((n_cls, n_pools))
    for (i, j), v in zip(acts, res.x):
        sigma[i, j] = v
    m_max = -res.value
    if abs(m_max) < 1e-13:
        m_max = 0.0
    return m_max, sigma


@dataclass
class SuboptimalityVerdict:
    verdict: str
    witness_path: SimplePath | None
    all_paths: list
    m_max: float
    sigma_opt: np.ndarray

    @property
    def suboptimal(self) -> bool:
        return self.verdict == "suboptimal"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "witness": None if self.witness_path is None else self.witness_path.to_dict(),
            "paths": [p.to_dict() for p in self.all_paths],
            "m_max": self.m_max,
            "sigma": self.sigma_opt.tolist(),
        }


def classify(alloc: StaticAllocation, spec: NetworkSpec) -> SuboptimalityVerdict:
    """Decide suboptimality by path enumeration and by the LP; they must agree."""
    paths = enumerate_simple_paths(alloc, spec)
    m_max, sigma = solve_mmax(alloc, spec)
    witness = None
    if paths:
        best = min(paths, key=lambda p: (p.weight, p.vertices))
        if best.weight < -TOL_VERDICT:
            witness = best
    by_lp = m_max > TOL_VERDICT
    if by_lp != (witness is not None):
        raise ConsistencyError(
            f"path enumeration ({'negative path' if witness else 'no negative path'}) "
            f"disagrees with M_max = {m_max:.3g}"
        )
    return SuboptimalityVerdict("suboptimal" if by_lp else "optimal", witness, paths, m_max, sigma)
