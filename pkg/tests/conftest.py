import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from throughput_subopt.network import builtin_example
from throughput_subopt.paths import classify
from throughput_subopt.static import solve_static

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def example():
    """example(k) -> (spec, alloc, verdict) for the built-in networks."""
    cache = {}

    def get(k):
        if k not in cache:
            spec = builtin_example(k)
            alloc = solve_static(spec)
            cache[k] = (spec, alloc, classify(alloc, spec))
        return cache[k]

    return get


def dense_tree_solve(n_cls, n_pools, edges, a, b):
    """Least-squares solve of the (I+J) x (I+J-1) balance system; exact for consistent data."""
    M = np.zeros((n_cls + n_pools, len(edges)))
    for k, (i, j) in enumerate(edges):
        M[i, k] = 1.0
        M[n_cls + j, k] = 1.0
    x, *_ = np.linalg.lstsq(M, np.concatenate([a, b]), rcond=None)
    out = np.zeros((n_cls, n_pools))
    for (i, j), v in zip(edges, x):
        out[i, j] = v
    return out


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    """criterion(number, title) -> recorder; recorder(name, ok, detail) logs one sub-check."""

    def start(number, title):
        entry = ACCEPTANCE.setdefault(number, {"title": title, "checks": []})

        def check(name, ok, detail=""):
            entry["checks"].append((name, bool(ok), detail))
            return bool(ok)

        return check

    return start


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        ok = all(c[1] for c in entry["checks"]) and entry["checks"]
        tr.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {entry['title']}")
        for name, passed, detail in entry["checks"]:
            tr.write_line(f"    [{'ok' if passed else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
