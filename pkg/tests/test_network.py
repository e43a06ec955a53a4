import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from throughput_subopt.network import (
    NetworkSpec,
    SpecError,
    builtin_example,
    dump_spec,
    load_spec,
    random_critical_network,
    scale_system,
)
from throughput_subopt.static import solve_static


def test_builtin_examples():
    s1 = builtin_example(1)
    assert s1.lam.tolist() == [8, 4]
    assert s1.mu.tolist() == [[3, 10, 1], [1, 4, 2]]
    assert builtin_example(2).activities.tolist() == [[True, True, True], [False, True, True]]
    assert builtin_example(3).n_classes == 3
    with pytest.raises(SpecError, match="unknown example"):
        builtin_example(4)


@pytest.mark.parametrize("doc, msg", [
    (dict(lam=[1, 1], nu=[1], mu=[[1, 1]]), "dimension mismatch"),
    (dict(lam=[0, 1], nu=[1], mu=[[1], [1]]), "non-positive arrival rate"),
    (dict(lam=[1], nu=[0], mu=[[1]]), "non-positive pool capacity"),
    (dict(lam=[1], nu=[1], mu=[[-1]]), "negative service rate"),
    (dict(lam=[1, 1], nu=[1], mu=[[1], [0]]), "class with no activity"),
])
def test_validation(doc, msg):
    with pytest.raises(SpecError, match=msg):
        NetworkSpec(**doc)


def test_json_round_trip(tmp_path):
    spec = builtin_example(3)
    text = dump_spec(spec)
    assert load_spec(text) == spec
    path = tmp_path / "net.json"
    path.write_text(text)
    assert load_spec(path) == spec
    assert load_spec(str(path)) == spec
    assert load_spec(json.loads(text)) == spec


def test_document_dimension_checks():
    with pytest.raises(SpecError, match="dimension mismatch"):
        load_spec({"classes": 2, "pools": 1, "lambda": [1], "nu": [1], "mu": [[1], [1]]})
    with pytest.raises(SpecError, match="missing keys"):
        load_spec({"classes": 1})


def test_arrays_are_read_only():
    spec = builtin_example(1)
    with pytest.raises(ValueError):
        spec.mu[0, 0] = 5


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_generator_is_critical_with_tree_optimum(n_cls, n_pools, seed):
    spec = random_critical_network(n_cls, n_pools, seed=seed)
    alloc = solve_static(spec)
    assert alloc.rho_star == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(alloc.psi_star, spec.witness_psi, atol=1e-9)


def test_generator_is_reproducible():
    a = random_critical_network(3, 4, seed=11)
    b = random_critical_network(3, 4, seed=11)
    assert a == b


def test_scale_system():
    spec = builtin_example(1)
    sys = scale_system(spec, [1.5, 1.5], 100)
    assert sys.N_n.tolist() == [100, 100, 100]
    assert sys.X0_n.tolist() == [150, 150]
    assert sys.lam_n.tolist() == [800, 400]
    with pytest.raises(SpecError, match="positive integer"):
        scale_system(spec, [1.5, 1.5], 0)


def test_scale_rounding_within_second_order_bound():
    spec = NetworkSpec([1.0], [0.37], [[1 / 0.37]])
    for n in (3, 10, 77, 1000):
        sys = scale_system(spec, [0.37], n)
        assert abs(sys.N_n[0] / n - 0.37) <= n ** -0.5


def test_rate_jitter_stays_in_bound():
    spec = builtin_example(1)
    sys = scale_system(spec, [1.5, 1.5], 400, rate_jitter=1.0, seed=3)
    assert np.all(np.abs(sys.mu_n - spec.mu) <= 400 ** -0.5 + 1e-12)
    assert np.array_equal(sys.mu_n > 0, spec.mu > 0)
