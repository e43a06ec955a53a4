"""Static fluid allocation: the min-load LP, full-utilization check and the basic tree."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LpProblem, lp_solve, search_vertices
from .network import NetworkSpec

TOL_BASIC = 1e-9
TOL_RHO = 1e-9
VERTEX_SEARCH_CAP = 1000


class AssumptionError(ValueError):
    """The network is not critically loaded with a tree-supported optimum."""

    def __init__(self, assumption: str, message: str):
        super().__init__(message)
        self.assumption = assumption


@dataclass(frozen=True, eq=False)
class StaticAllocation:
    xi_star: np.ndarray
    rho_star: float
    psi_star: np.ndarray
    x_star: np.ndarray
    basic_edges: tuple[tuple[int, int], ...]
    # vertex -> neighbours; classes are ("c", i), pools ("p", j)
    tree_adjacency: dict

    @property
    def basic_mask(self) -> np.ndarray:
        m = np.zeros(self.psi_star.shape, dtype=bool)
        for i, j in self.basic_edges:
            m[i, j] = True
        return m


def tree_adjacency(n_cls: int, n_pools: int, edges) -> dict:
    adj = {("c", i): [] for i in range(n_cls)}
    adj.update({("p", j): [] for j in range(n_pools)})
    for i, j in edges:
        adj[("c", i)].append(("p", j))
        adj[("p", j)].append(("c", i))
    return adj


def is_spanning_tree(n_cls: int, n_pools: int, edges) -> bool:
    """Exact check: |E| = I + J - 1 and connected."""
    edges = list(edges)
    if len(edges) != n_cls + n_pools - 1:
        return False
    adj = tree_adjacency(n_cls, n_pools, edges)
    start = ("c", 0)
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n_cls + n_pools


def _support(xi):
    return [tuple(e) for e in np.argwhere(xi > TOL_BASIC).tolist()]


def _min_load_lp(spec: NetworkSpec):
    """Variables: xi on activities (row-major) then rho."""
    acts = spec.activity_list()
    n_cls, n_pools = spec.n_classes, spec.n_pools
    k = len(acts)
    A_eq = np.zeros((n_cls, k + 1))
    A_ub = np.zeros((n_pools, k + 1))
    for col, (i, j) in enumerate(acts):
        A_eq[i, col] = spec.mu[i, j] * spec.nu[j]
        A_ub[j, col] = 1.0
    A_ub[:, k] = -1.0
    c = np.zeros(k + 1)
    c[k] = 1.0
    return acts, LpProblem(c, A_eq, spec.lam, A_ub, np.zeros(n_pools))


def _full_face_lp(spec: NetworkSpec, objective):
    """Allocations meeting arrival rates with every pool fully utilised."""
    acts = spec.activity_list()
    n_cls, n_pools = spec.n_classes, spec.n_pools
    A_eq = np.zeros((n_cls + n_pools, len(acts)))
    for col, (i, j) in enumerate(acts):
        A_eq[i, col] = spec.mu[i, j] * spec.nu[j]
        A_eq[n_cls + j, col] = 1.0
    b = np.concatenate([spec.lam, np.ones(n_pools)])
    return LpProblem(objective, A_eq, b)


def _scatter(spec, acts, values):
    xi = np.zeros((spec.n_classes, spec.n_pools))
    for (i, j), v in zip(acts, values):
        xi[i, j] = v
    xi[xi < TOL_BASIC] = 0.0
    return xi


def allocation_from_xi(spec: NetworkSpec, xi, rho_star: float = 1.0) -> StaticAllocation:
    """Validate a candidate optimal allocation and derive the fluid quantities."""
    xi = np.array(xi, dtype=float)
    n_cls, n_pools = spec.n_classes, spec.n_pools
    if xi.shape != (n_cls, n_pools):
        raise AssumptionError("input", f"allocation must be {n_cls} x {n_pools}")
    if np.any(xi < -TOL_BASIC):
        raise AssumptionError("assumption 1", "allocation has negative entries")
    if np.any(xi[~spec.activities] > TOL_BASIC):
        raise AssumptionError("assumption 1", "allocation uses a non-activity")
    xi = np.where(xi > TOL_BASIC, xi, 0.0)
    rates = (spec.mu * spec.nu * xi).sum(axis=1)
    if np.max(np.abs(rates - spec.lam)) > 1e-9 * max(1.0, spec.lam.max()):
        raise AssumptionError("assumption 1", "allocation does not meet the arrival rates")
    if np.max(np.abs(xi.sum(axis=0) - 1.0)) > 1e-9:
        raise AssumptionError("assumption 1", "partial utilization: some pool is not fully used")
    edges = tuple(_support(xi))
    if not is_spanning_tree(n_cls, n_pools, edges):
        raise AssumptionError("assumption 2", "basic graph not a tree")
    psi = xi * spec.nu
    return StaticAllocation(
        xi_star=xi,
        rho_star=float(rho_star),
        psi_star=psi,
        x_star=psi.sum(axis=1),
        basic_edges=edges,
        tree_adjacency=tree_adjacency(n_cls, n_pools, edges),
    )


def solve_static(spec: NetworkSpec, xi_override=None) -> StaticAllocation:
    """Solve the static LP, check full utilization and the tree property."""
    acts, lp = _min_load_lp(spec)
    res = lp_solve(lp)
    if res.status != "optimal":
        raise AssumptionError("assumption 1", "LP infeasible: no allocation meets the arrival rates")
    rho = float(res.x[-1])
    if abs(rho - 1.0) > TOL_RHO:
        kind = "subcritical" if rho < 1 else "supercritical"
        raise AssumptionError("assumption 1", f"not critically loaded: {kind}, rho* = {rho:.6g}")
    if xi_override is not None:
        return allocation_from_xi(spec, xi_override, rho)

    # maximise total utilisation over allocations with every pool load <= 1
    k = len(acts)
    A_eq = lp.A_eq[:, :k]
    A_ub = np.zeros((spec.n_pools, k))
    for col, (_, j) in enumerate(acts):
        A_ub[j, col] = 1.0
    second = lp_solve(LpProblem(-np.ones(k), A_eq, spec.lam, A_ub, np.ones(spec.n_pools)))
    util = -second.value
    if util < spec.n_pools - 1e-9:
        raise AssumptionError(
            "assumption 1", f"partial utilization: best total utilization {util:.6g} < {spec.n_pools}"
        )
    xi = _scatter(spec, acts, second.x)
    if is_spanning_tree(spec.n_classes, spec.n_pools, _support(xi)):
        return allocation_from_xi(spec, xi, rho)

    def is_tree(values):
        return is_spanning_tree(spec.n_classes, spec.n_pools, _support(_scatter(spec, acts, values)))

    found, inspected = search_vertices(_full_face_lp(spec, np.zeros(k)), is_tree, VERTEX_SEARCH_CAP)
    if found is None:
        raise AssumptionError(
            "assumption 2",
            f"basic graph not a tree: no tree-supported optimal vertex found "
            f"({inspected} bases inspected, cap {VERTEX_SEARCH_CAP})",
        )
    return allocation_from_xi(spec, _scatter(spec, acts, found), rho)
