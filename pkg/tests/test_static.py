import numpy as np
import pytest

from throughput_subopt.network import NetworkSpec, builtin_example, random_critical_network
from throughput_subopt.static import AssumptionError, allocation_from_xi, is_spanning_tree, solve_static

PSI_12 = np.array([[1.0, 0.5, 0.0], [0.0, 0.5, 1.0]])


@pytest.mark.parametrize("k", [1, 2])
def test_examples_one_two(k):
    alloc = solve_static(builtin_example(k))
    assert np.allclose(alloc.psi_star, PSI_12, atol=1e-9)
    assert np.allclose(alloc.x_star, [1.5, 1.5], atol=1e-9)
    assert alloc.rho_star == pytest.approx(1.0, abs=1e-9)
    assert set(alloc.basic_edges) == {(0, 0), (0, 1), (1, 1), (1, 2)}


def test_example_three():
    alloc = solve_static(builtin_example(3))
    expected = np.array([[1.0, 0.5, 0.0], [0.0, 0.5, 0.5], [0.0, 0.0, 0.5]])
    assert np.allclose(alloc.psi_star, expected, atol=1e-9)
    assert np.allclose(alloc.x_star, [1.5, 1.0, 0.5], atol=1e-9)


def test_rates_met_and_pools_full():
    spec = builtin_example(3)
    alloc = solve_static(spec)
    assert np.allclose((spec.mu * alloc.psi_star).sum(axis=1), spec.lam)
    assert np.allclose(alloc.psi_star.sum(axis=0), spec.nu)


def test_subcritical():
    with pytest.raises(AssumptionError, match="not critically loaded: subcritical") as err:
        solve_static(NetworkSpec([0.4, 0.4], [1.0], [[1.0], [1.0]]))
    assert err.value.assumption == "assumption 1"


def test_supercritical():
    with pytest.raises(AssumptionError, match="supercritical"):
        solve_static(NetworkSpec([3.0], [1.0], [[1.0]]))


def test_infeasible_rates_are_supercritical():
    # any positive arrival rate is servable after scaling, so infeasibility shows up as rho* > 1
    with pytest.raises(AssumptionError):
        solve_static(NetworkSpec([1.0, 5.0], [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]]))


def test_partial_utilization():
    # pool 2 serves only class 2 and is not needed once pool 1 is saturated
    spec = NetworkSpec([1.0, 1.0], [1.0, 1.0], [[2.0, 0.0], [2.0, 100.0]])
    with pytest.raises(AssumptionError) as err:
        solve_static(spec)
    assert err.value.assumption == "assumption 1"


def test_non_tree_basic_graph():
    # two classes, two pools, all rates 1: every feasible optimum is a forest or has a cycle
    spec = NetworkSpec([1.0, 1.0], [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(AssumptionError, match="basic graph not a tree") as err:
        solve_static(spec)
    assert err.value.assumption == "assumption 2"


def test_tree_search_on_degenerate_optimum():
    # unit rates: the optimal face contains the full cycle as well as tree vertices
    spec = NetworkSpec([0.5, 1.5], [1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]])
    alloc = solve_static(spec)
    assert is_spanning_tree(2, 2, alloc.basic_edges)


def test_override_allocation():
    spec = builtin_example(1)
    alloc = solve_static(spec, xi_override=PSI_12)
    assert np.allclose(alloc.x_star, [1.5, 1.5])
    with pytest.raises(AssumptionError, match="arrival rates"):
        allocation_from_xi(spec, PSI_12 * 0.9)


def test_spanning_tree_check():
    assert is_spanning_tree(2, 2, [(0, 0), (0, 1), (1, 1)])
    assert not is_spanning_tree(2, 2, [(0, 0), (1, 1), (1, 1)])
    assert not is_spanning_tree(2, 2, [(0, 0), (0, 1)])


def test_random_networks_recover_witness():
    for seed in range(50):
        spec = random_critical_network(4, 3, seed=seed)
        alloc = solve_static(spec)
        assert np.allclose(alloc.psi_star, spec.witness_psi, atol=1e-9)
        assert is_spanning_tree(4, 3, alloc.basic_edges)
