import numpy as np
import pytest

from mixbound.chain import build_chain
from mixbound.families import cycle, path, prodchain, star2


def two_state():
    return build_chain([(1, 2, 1.0)], states=[1, 2])


def corpus():
    """The small chains every exact inequality is checked on."""
    out = {"C2": two_state(), "P4": path(4)}
    out.update({f"P{n}": path(n) for n in (5, 8, 12)})
    out.update({f"STAR2({n})": star2(n) for n in (2, 4, 8, 16)})
    out.update({f"CYCLE({n})": cycle(n) for n in (3, 8, 16)})
    out["PRODCHAIN(2,3)"] = prodchain(2, 3)
    return out


def random_tree(n, rng, weighted=True):
    edges = [(int(rng.integers(v)), v, float(rng.uniform(0.5, 2.0)) if weighted else 1.0)
             for v in range(1, n)]
    return build_chain(edges, states=list(range(n)))


def random_graph(n, rng, extra=2):
    """Random spanning tree plus ``extra`` chords, positive random conductances."""
    edges = {(int(rng.integers(v)), v) for v in range(1, n)}
    while len(edges) < n - 1 + extra and len(edges) < n * (n - 1) // 2:
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        edges.add((u, v))
    return build_chain([(u, v, float(rng.uniform(0.5, 2.0))) for u, v in sorted(edges)],
                       states=list(range(n)))


def ladder(n):
    """``P_n x K_2`` with the rungs collapsed onto a path."""
    edges = [((i, a), (i + 1, a), 1.0) for i in range(n - 1) for a in range(2)]
    edges += [((i, 0), (i, 1), 1.0) for i in range(n)]
    G = build_chain(edges, states=[(i, a) for i in range(n) for a in range(2)])
    pairs = [(i, G.idx((i, a))) for i in range(n) for a in range(2)]
    return G, path(n), pairs


@pytest.fixture(scope="session")
def chains():
    return corpus()


@pytest.fixture
def p4():
    return path(4)


@pytest.fixture
def c2():
    return two_state()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
