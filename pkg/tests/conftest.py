import numpy as np
import pytest
from hypothesis import settings

from padel import tensor as T
from padel.graph import BaseGraph

# reproducible property tests
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / max(|a|, |b|)`` in Frobenius norm; absolute when both are tiny."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)


def check_grads(build, params, h: float = 1e-5) -> float:
    """Worst relative error between tape gradients and central differences.

    ``build()`` must return a 1x1 loss Tensor computed from ``params``.
    """
    with T.Tape() as tape:
        grads = tape.backward(build())

    def value():
        return build().item()

    worst = 0.0
    for p in params:
        num = numeric_grad(value, p.data, h)
        worst = max(worst, rel_error(grads.get(p, np.zeros_like(p.data)), num))
    return worst


@pytest.fixture
def gradcheck():
    return check_grads


def random_connected_graph(rng: np.random.Generator, n: int, extra: float = 0.1) -> BaseGraph:
    """Random spanning tree plus Bernoulli extra edges."""
    edges = [(int(rng.integers(i)), i) for i in range(1, n)]
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < extra
    edges += list(zip(iu[keep].tolist(), ju[keep].tolist()))
    return BaseGraph.from_edges(n, edges)


@pytest.fixture
def path3():
    return BaseGraph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def cycle4():
    return BaseGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
