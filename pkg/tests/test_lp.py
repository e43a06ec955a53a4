import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from throughput_subopt.lp import INFEASIBLE, UNBOUNDED, LpProblem, lp_solve, search_vertices


def brute_force_min(c, A_ub, b_ub):
    """Enumerate every vertex of {A x <= b, x >= 0} and return the best objective (or None)."""
    n = c.size
    G = np.vstack([A_ub, -np.eye(n)])
    h = np.concatenate([b_ub, np.zeros(n)])
    best = None
    for rows in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            v = float(c @ x)
            best = v if best is None else min(best, v)
    return best


@st.composite
def bounded_lp(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 3))
    ints = st.integers(-5, 5)
    c = np.array(draw(st.lists(ints, min_size=n, max_size=n)), dtype=float)
    A = np.array(draw(st.lists(st.lists(ints, min_size=n, max_size=n), min_size=m, max_size=m)), dtype=float)
    b = np.array(draw(st.lists(st.integers(-3, 8), min_size=m, max_size=m)), dtype=float)
    # box rows keep the region bounded so the vertex oracle is complete
    A = np.vstack([A, np.eye(n)])
    b = np.concatenate([b, np.full(n, 4.0)])
    return c, A, b


@given(bounded_lp())
def test_matches_vertex_enumeration(data):
    c, A, b = data
    res = lp_solve(LpProblem(c, A_ub=A, b_ub=b))
    best = brute_force_min(c, A, b)
    if best is None:
        assert res.status == INFEASIBLE
    else:
        assert res.ok
        assert res.value == pytest.approx(best, abs=1e-7)
        assert np.all(A @ res.x <= b + 1e-8)
        assert np.all(res.x >= -1e-9)


@given(bounded_lp(), st.integers(0, 3))
def test_equality_rows_via_split(data, k):
    c, A, b = data
    # turn one row into an equality and check against the two-inequality encoding
    k = k % A.shape[0]
    eq = lp_solve(LpProblem(c, A_eq=A[[k]], b_eq=b[[k]], A_ub=np.delete(A, k, 0), b_ub=np.delete(b, k)))
    A2 = np.vstack([A, -A[[k]]])
    b2 = np.concatenate([b, -b[[k]]])
    best = brute_force_min(c, A2, b2)
    if best is None:
        assert eq.status == INFEASIBLE
    else:
        assert eq.value == pytest.approx(best, abs=1e-7)


def test_unbounded():
    res = lp_solve(LpProblem([-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0]))
    assert res.status == UNBOUNDED


def test_free_and_shifted_variables():
    # min x + y, x free, y >= -2, x - y >= 1: optimum at y = -2, x = -1
    res = lp_solve(LpProblem([1.0, 1.0], A_ub=[[-1.0, 1.0]], b_ub=[-1.0], lb=[-np.inf, -2.0]))
    assert res.value == pytest.approx(-3.0)
    assert np.allclose(res.x, [-1.0, -2.0])
    # dropping the bound on y makes it unbounded
    res = lp_solve(LpProblem([1.0, 1.0], A_ub=[[-1.0, 1.0]], b_ub=[-1.0], lb=[-np.inf, -np.inf]))
    assert res.status == UNBOUNDED
    # min x, x free, x >= 3 written as -x <= -3
    res = lp_solve(LpProblem([1.0], A_ub=[[-1.0]], b_ub=[-3.0], lb=[-np.inf]))
    assert res.value == pytest.approx(3.0)


def test_redundant_equalities():
    A = [[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]]
    res = lp_solve(LpProblem([1.0, 2.0, 3.0], A_eq=A, b_eq=[1.0, 2.0, 1.0]))
    assert res.ok
    # objective 4 - 2 x2 on the feasible segment, best at x2 = 1
    assert res.value == pytest.approx(2.0)
    assert np.allclose(np.asarray(A) @ res.x, [1, 2, 1])


def test_degenerate_problem_terminates():
    # classic cycling example for the largest-coefficient rule
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    res = lp_solve(LpProblem(c, A_ub=A, b_ub=[0.0, 0.0, 1.0]))
    assert res.ok
    assert res.value == pytest.approx(-0.05)


def test_search_vertices_finds_all_vertices_of_square():
    prob = LpProblem([0.0, 0.0], A_ub=[[1.0, 0.0], [0.0, 1.0]], b_ub=[1.0, 1.0])
    seen = []

    def accept(x):
        seen.append(tuple(np.round(x, 9)))
        return False

    found, inspected = search_vertices(prob, accept, cap=100)
    assert found is None
    assert set(seen) == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)}
    x, _ = search_vertices(prob, lambda v: v[0] > 0.5 and v[1] > 0.5)
    assert np.allclose(x, [1, 1])


def test_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])
    with pytest.raises(ValueError):
        LpProblem([np.nan])
