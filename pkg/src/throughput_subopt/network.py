"""Network data model, built-in example networks and the n-scaling of parameters."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SpecError(ValueError):
    """Raised when a network document violates the data model."""


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Static description of a parallel-server network.

    ``mu[i, j]`` is the per-server rate at which a pool-``j`` server works on a
    class-``i`` customer; a zero entry means pool ``j`` cannot serve class ``i``.
    The activity set is always derived from ``mu``.
    """

    lam: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    # spanning-tree witness allocation when the network came from the generator
    witness_psi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        nu = np.array(self.nu, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if lam.ndim != 1 or nu.ndim != 1:
            raise SpecError("dimension mismatch: lambda and nu must be vectors")
        if mu.ndim != 2 or mu.shape != (lam.size, nu.size):
            raise SpecError(
                f"dimension mismatch: mu has shape {mu.shape}, expected {(lam.size, nu.size)}"
            )
        if lam.size == 0 or nu.size == 0:
            raise SpecError("dimension mismatch: need at least one class and one pool")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(nu)) and np.all(np.isfinite(mu))):
            raise SpecError("non-finite parameter")
        if np.any(lam <= 0):
            raise SpecError("non-positive arrival rate")
        if np.any(nu <= 0):
            raise SpecError("non-positive pool capacity")
        if np.any(mu < 0):
            raise SpecError("negative service rate")
        idle = [i + 1 for i in range(lam.size) if not np.any(mu[i] > 0)]
        if idle:
            raise SpecError(f"class with no activity: {idle}")
        for arr in (lam, nu, mu):
            arr.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "mu", mu)
        if self.witness_psi is not None:
            w = np.array(self.witness_psi, dtype=float)
            w.setflags(write=False)
            object.__setattr__(self, "witness_psi", w)

    @property
    def n_classes(self) -> int:
        return self.lam.size

    @property
    def n_pools(self) -> int:
        return self.nu.size

    @property
    def activities(self) -> np.ndarray:
        """Boolean I x J mask of activities (pairs with positive rate)."""
        return self.mu > 0

    def activity_list(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in np.argwhere(self.activities).tolist()]

    def to_dict(self) -> dict:
        return {
            "classes": self.n_classes,
            "pools": self.n_pools,
            "lambda": self.lam.tolist(),
            "nu": self.nu.tolist(),
            "mu": self.mu.tolist(),
        }

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return (
            np.array_equal(self.lam, other.lam)
            and np.array_equal(self.nu, other.nu)
            and np.array_equal(self.mu, other.mu)
        )

    __hash__ = None


def spec_from_dict(doc: dict) -> NetworkSpec:
    """Build a spec from the JSON document layout (keys classes, pools, lambda, nu, mu)."""
    missing = [k for k in ("classes", "pools", "lambda", "nu", "mu") if k not in doc]
    if missing:
        raise SpecError(f"missing keys: {missing}")
    n_cls, n_pools = int(doc["classes"]), int(doc["pools"])
    lam, nu, mu = doc["lambda"], doc["nu"], doc["mu"]
    if len(lam) != n_cls:
        raise SpecError(f"dimension mismatch: lambda has {len(lam)} entries, classes={n_cls}")
    if len(nu) != n_pools:
        raise SpecError(f"dimension mismatch: nu has {len(nu)} entries, pools={n_pools}")
    if len(mu) != n_cls or any(len(row) != n_pools for row in mu):
        raise SpecError(f"dimension mismatch: mu must be {n_cls} x {n_pools}")
    return NetworkSpec(lam, nu, mu)


def load_spec(source) -> NetworkSpec:
    """Load a network from a path, a JSON string, or an already parsed dict."""
    if isinstance(source, dict):
        return spec_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    return spec_from_dict(json.loads(text))


def dump_spec(spec: NetworkSpec) -> str:
    return json.dumps(spec.to_dict())


_EXAMPLES = {
    1: dict(lam=[8, 4], nu=[1, 1, 1], mu=[[3, 10, 1], [1, 4, 2]]),
    2: dict(lam=[8, 4], nu=[1, 1, 1], mu=[[3, 10, 1], [0, 4, 2]]),
    3: dict(lam=[4, 1, 2], nu=[1, 1, 1], mu=[[2, 4, 0.5], [0.3, 1, 1], [0.1, 0.5, 4]]),
}


def builtin_example(example_id: int) -> NetworkSpec:
    """Return one of the three worked example networks (ids 1, 2, 3)."""
    try:
        data = _EXAMPLES[int(example_id)]
    except (KeyError, ValueError):
        raise SpecError(f"unknown example id {example_id!r}; choose 1, 2 or 3") from None
    return NetworkSpec(**data)


def _uniform_spanning_tree(n_cls: int, n_pools: int, rng: np.random.Generator):
    """Wilson's algorithm on the complete bipartite graph K_{I,J}.

    Vertices 0..I-1 are classes, I..I+J-1 are pools.
    """
    n = n_cls + n_pools
    in_tree = [False] * n
    nxt = [-1] * n
    root = int(rng.integers(n))
    in_tree[root] = True

    def neighbour(v):
        if v < n_cls:
            return n_cls + int(rng.integers(n_pools))
        return int(rng.integers(n_cls))

    for start in range(n):
        v = start
        while not in_tree[v]:
            nxt[v] = neighbour(v)
            v = nxt[v]
        v = start
        while not in_tree[v]:
            in_tree[v] = True
            v = nxt[v]
    edges = []
    for v in range(n):
        if v == root:
            continue
        u = nxt[v]
        i, j = (v, u - n_cls) if v < n_cls else (u, v - n_cls)
        edges.append((i, j))
    return sorted(edges)


def random_critical_network(n_cls: int, n_pools: int, seed=None, p_offtree: float = 0.5) -> NetworkSpec:
    """Draw a critically loaded network whose optimal static allocation is tree supported.

    A uniform spanning tree of K_{I,J} carries the witness allocation. Off-tree rates
    are drawn strictly below the dual-price bound of that tree so the tree allocation
    is the unique optimum of the static LP with full utilization.
    """
    if n_cls < 1 or n_pools < 1:
        raise SpecError("need at least one class and one pool")
    rng = np.random.default_rng(seed)
    edges = _uniform_spanning_tree(n_cls, n_pools, rng)
    nu = rng.uniform(0.5, 2.0, size=n_pools)
    psi = np.zeros((n_cls, n_pools))
    mu = np.zeros((n_cls, n_pools))
    for i, j in edges:
        psi[i, j] = rng.uniform(0.2, 1.0)
        mu[i, j] = rng.uniform(0.5, 10.0)
    psi *= nu / psi.sum(axis=0)

    # Tree prices: y_i * mu_ij * nu_j = w_j on tree edges; y_0 = 1 then normalise.
    y = np.full(n_cls, np.nan)
    w = np.full(n_pools, np.nan)
    y[0] = 1.0
    pending = list(edges)
    while pending:
        rest = []
        for i, j in pending:
            if not np.isnan(y[i]) and np.isnan(w[j]):
                w[j] = y[i] * mu[i, j] * nu[j]
            elif np.isnan(y[i]) and not np.isnan(w[j]):
                y[i] = w[j] / (mu[i, j] * nu[j])
            elif np.isnan(y[i]) and np.isnan(w[j]):
                rest.append((i, j))
        pending = rest
    tree = set(edges)
    for i in range(n_cls):
        for j in range(n_pools):
            if (i, j) in tree or rng.random() >= p_offtree:
                continue
            bound = w[j] / (y[i] * nu[j])
            mu[i, j] = bound * rng.uniform(0.05, 0.95)
    lam = (mu * psi).sum(axis=1)
    return NetworkSpec(lam, nu, mu, witness_psi=psi)


@dataclass(frozen=True, eq=False)
class ScaledSystem:
    """Parameters of the n-th queueing system."""

    n: int
    lam_n: np.ndarray
    N_n: np.ndarray
    mu_n: np.ndarray
    X0_n: np.ndarray
    spec: NetworkSpec
    x_star: np.ndarray
    c: float = 1.0

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise SpecError("scale n must be a positive integer")
        if np.any((self.mu_n > 0) != (self.spec.mu > 0)):
            raise SpecError("activity set of the scaled system differs from the base network")
        bound = self.c * n ** -0.5 + 1e-12
        checks = {
            "arrival rate": np.abs(self.lam_n / n - self.spec.lam),
            "service rate": np.abs(self.mu_n - self.spec.mu),
            "server count": np.abs(self.N_n / n - self.spec.nu),
            "initial state": np.abs(self.X0_n / n - self.x_star),
        }
        for name, dev in checks.items():
            if np.max(dev) > bound:
                raise SpecError(
                    f"second-order condition violated for {name}: "
                    f"deviation {np.max(dev):.3g} > c n^-1/2 = {bound:.3g}"
                )


def scale_system(spec: NetworkSpec, x_star, n: int, rate_jitter: float = 0.0, seed=None) -> ScaledSystem:
    """Scale arrival rates and pool sizes by ``n`` and round the initial state.

    ``rate_jitter`` > 0 perturbs the positive service rates by at most
    ``rate_jitter * n**-0.5`` (for robustness experiments); the default keeps them exact.
    """
    n = int(n)
    if n < 1:
        raise SpecError("scale n must be a positive integer")
    x_star = np.asarray(x_star, dtype=float)
    lam_n = n * spec.lam
    N_n = np.maximum(1, np.rint(n * spec.nu)).astype(np.int64)
    mu_n = spec.mu.copy()
    if rate_jitter:
        rng = np.random.default_rng(seed)
        delta = rate_jitter * n ** -0.5 * rng.uniform(-1, 1, size=mu_n.shape)
        mu_n = np.where(mu_n > 0, np.maximum(mu_n + delta, 0.5 * mu_n), 0.0)
    X0 = np.rint(n * x_star).astype(np.int64)
    c = max(1.0, rate_jitter)
    # rounding up to one server for tiny n*nu can exceed c n^-1/2 only when n*nu < 1
    if np.any(n * spec.nu < 1):
        c = max(c, float(np.max(np.abs(N_n / n - spec.nu))) * math.sqrt(n))
    return ScaledSystem(n, lam_n, N_n, mu_n, X0, spec, x_star, c)
