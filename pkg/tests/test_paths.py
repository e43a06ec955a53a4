import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from throughput_subopt.network import NetworkSpec, random_critical_network
from throughput_subopt.paths import (
    TOL_VERDICT,
    check_perturbation,
    classify,
    enumerate_simple_paths,
    path_perturbation,
    path_signed_weight,
    path_signs,
    solve_mmax,
)
from throughput_subopt.static import solve_static


def mmax_by_vertices(spec, psi_star):
    """Largest sum mu*sigma over the vertices of the admissible sigma polytope (small networks only)."""
    acts = spec.activity_list()
    k = len(acts)
    I, J = spec.n_classes, spec.n_pools
    G = np.zeros((I + J + k, k))
    h = np.zeros(I + J + k)
    for col, (i, j) in enumerate(acts):
        G[i, col] = 1.0
        G[I + j, col] = 1.0
        G[I + J + col, col] = -1.0
        h[I + J + col] = psi_star[i, j]
    c = np.array([spec.mu[e] for e in acts])
    best = -np.inf
    for rows in itertools.combinations(range(G.shape[0]), k):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = max(best, float(c @ x))
    return best


def mmax_by_scipy(spec, psi_star):
    acts = spec.activity_list()
    I, J = spec.n_classes, spec.n_pools
    A = np.zeros((I + J, len(acts)))
    for col, (i, j) in enumerate(acts):
        A[i, col] = 1.0
        A[I + j, col] = 1.0
    res = linprog([-spec.mu[e] for e in acts], A_ub=A, b_ub=np.zeros(I + J),
                  bounds=[(-psi_star[e], None) for e in acts], method="highs")
    assert res.status == 0
    return -res.fun


def test_example_one(example):
    spec, alloc, verdict = example(1)
    assert verdict.suboptimal
    assert verdict.witness_path.weight == pytest.approx(-4.0, abs=1e-9)
    assert verdict.witness_path.kind == "closed"
    assert verdict.m_max == pytest.approx(mmax_by_vertices(spec, alloc.psi_star), abs=1e-9)
    assert verdict.m_max == pytest.approx(2.0, abs=1e-9)


def test_example_two_open_witness(example):
    spec, alloc, verdict = example(2)
    assert verdict.witness_path.kind == "open"
    assert verdict.witness_path.weight == pytest.approx(-3.0, abs=1e-9)
    assert verdict.m_max == pytest.approx(mmax_by_vertices(spec, alloc.psi_star), abs=1e-9)


def test_example_three_has_a_negative_path(example):
    # class 2 -> pool 2 -> class 1 -> pool 1, closed by (2,1): 1.4 + 1.0 - 3.0 - 0.7 < 0
    spec, alloc, verdict = example(3)
    assert verdict.suboptimal
    w = verdict.witness_path
    assert w.vertices == (1, 1, 0, 0)
    assert w.weight == pytest.approx(spec.mu[1, 1] + spec.mu[0, 0] - spec.mu[0, 1] - spec.mu[1, 0])
    assert w.weight == pytest.approx(-1.3, abs=1e-9)
    assert verdict.m_max == pytest.approx(mmax_by_vertices(spec, alloc.psi_star), abs=1e-9)
    assert verdict.m_max == pytest.approx(0.65, abs=1e-9)


def test_signs_alternate_and_close():
    signs = path_signs((0, 1, 1, 2), closed=True)
    assert signs == {(0, 1): 1, (1, 2): 1, (1, 1): -1, (0, 2): -1}
    assert sum(signs.values()) == 0
    open_signs = path_signs((0, 1, 1, 2), closed=False)
    assert sum(open_signs.values()) == 1


def test_optimal_network():
    # one class, two pools: no pair at distance three, so nothing to reallocate
    spec = NetworkSpec([2.0], [1.0, 1.0], [[1.0, 1.0]])
    alloc = solve_static(spec)
    verdict = classify(alloc, spec)
    assert not verdict.suboptimal
    assert verdict.m_max == 0.0
    assert verdict.witness_path is None


@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_path_signs_sum(n_cls, n_pools, seed):
    spec = random_critical_network(n_cls, n_pools, seed=seed)
    alloc = solve_static(spec)
    for p in enumerate_simple_paths(alloc, spec):
        total = sum(p.signs.values())
        # closed paths balance; open paths leave one extra pool->class step
        assert total == (0 if p.kind == "closed" else 1)
        assert path_signed_weight(p, spec) == pytest.approx(p.weight)
        assert len(p.vertices) >= 4


def test_equivalence_on_random_networks():
    """Path verdict and LP verdict agree, and every witness yields a valid perturbation."""
    rng = np.random.default_rng(20240611)
    suboptimal = 0
    for _ in range(220):
        I, J = (int(v) for v in rng.integers(1, 6, size=2))
        spec = random_critical_network(I, J, seed=int(rng.integers(2**32)), p_offtree=0.6)
        alloc = solve_static(spec)
        verdict = classify(alloc, spec)
        min_weight = min((p.weight for p in verdict.all_paths), default=np.inf)
        assert (verdict.m_max > TOL_VERDICT) == (min_weight < -TOL_VERDICT)
        assert verdict.m_max == pytest.approx(mmax_by_scipy(spec, alloc.psi_star), abs=1e-7)
        if verdict.suboptimal:
            suboptimal += 1
            psi = path_perturbation(verdict.witness_path, alloc)
            assert all(check_perturbation(psi, alloc, spec).values())
    assert 20 < suboptimal < 220


def test_sigma_is_admissible(example):
    spec, alloc, verdict = example(1)
    m, sigma = solve_mmax(alloc, spec)
    assert np.all(sigma.sum(axis=1) <= 1e-12)
    assert np.all(sigma.sum(axis=0) <= 1e-12)
    assert np.all(alloc.psi_star + sigma >= -1e-12)
    assert np.all(sigma[spec.mu == 0] == 0)
    assert (spec.mu * sigma).sum() == pytest.approx(m)
