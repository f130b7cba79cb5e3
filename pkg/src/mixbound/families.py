"""Deterministic generators for the example chains, with companion trees,
correspondences and canonical bottleneck sequences where they exist.

All chains are lazy random walks built from conductances.  Labels are
plain strings or integers so that every chain serialises to JSON.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .chain import ChainError, ChainSpec, build_chain

FAMILIES = ("STAR2", "WPATH3", "HAMCLIQUE", "CYCLE", "BINTREE", "DINGPERES", "PRODCHAIN", "PATH")


@dataclass(frozen=True)
class ExampleSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Example:
    """A generated chain plus optional companions.

    ``correspondence`` pairs are ``(tree index, chain index)``; ``blocks``
    are ``(trigger index, member indices)`` for the block-absorbing Dasher.
    """

    spec: ExampleSpec
    chain: ChainSpec
    tree: ChainSpec | None = None
    correspondence: tuple | None = None
    r: int | None = None
    blocks: tuple | None = None


# -- simple families ------------------------------------------------------------

def path(n: int, weights=None) -> ChainSpec:
    """Path on states ``1..n``; ``weights[i]`` is the conductance of edge ``(i+1, i+2)``."""
    if n < 2:
        raise ChainError("path needs n >= 2")
    weights = [1.0] * (n - 1) if weights is None else list(weights)
    if len(weights) != n - 1:
        raise ChainError("need n - 1 weights")
    return build_chain([(i, i + 1, w) for i, w in zip(range(1, n), weights)],
                       states=list(range(1, n + 1)))


def cycle(n: int) -> ChainSpec:
    if n < 3:
        raise ChainError("cycle needs n >= 3")
    return build_chain([(i, (i + 1) % n, 1.0) for i in range(n)], states=list(range(n)))


def wpath3(n: float) -> ChainSpec:
    """Four states in a line with conductances ``(n, 1, n)``."""
    if n <= 0:
        raise ChainError("n must be positive")
    return path(4, [n, 1.0, n])


def hamclique(n: int) -> ChainSpec:
    """Complete graph: unit conductance on the cycle ``0..n-1``, ``n^-3`` elsewhere."""
    if n < 4:
        raise ChainError("hamclique needs n >= 4")
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            on_cycle = j == i + 1 or (i == 0 and j == n - 1)
            edges.append((i, j, 1.0 if on_cycle else float(n) ** -3))
    return build_chain(edges, states=list(range(n)))


def bintree(height: int) -> ChainSpec:
    """Complete binary tree, heap labels ``1..2^(h+1)-1``."""
    if height < 1:
        raise ChainError("height must be at least 1")
    size = 2 ** (height + 1) - 1
    return build_chain([(v // 2, v, 1.0) for v in range(2, size + 1)],
                       states=list(range(1, size + 1)))


# -- two stars --------------------------------------------------------------------

def star2_labels(n: int) -> list[str]:
    return [f"a{i}" for i in range(n + 1)] + [f"b{i}" for i in range(n + 1)]


def star2(n: int, perturb_seed: int | None = None, low: float = 0.5, high: float = 2.0) -> ChainSpec:
    """Two stars with centres ``a0``, ``b0`` and leaves ``a1..an``, ``b1..bn``,
    joined by the edge ``a1 b1``.  With ``perturb_seed`` each conductance is
    drawn uniformly from ``[low, high]``."""
    if n < 2:
        raise ChainError("star2 needs n >= 2")
    edges = [("a0", f"a{i}") for i in range(1, n + 1)]
    edges += [("b0", f"b{i}") for i in range(1, n + 1)]
    edges.append(("a1", "b1"))
    if perturb_seed is None:
        w = np.ones(len(edges))
    else:
        w = np.random.default_rng(perturb_seed).uniform(low, high, len(edges))
    return build_chain([(u, v, float(c)) for (u, v), c in zip(edges, w)], states=star2_labels(n))


def two_point() -> ChainSpec:
    return build_chain([("u", "v", 1.0)], states=["u", "v"])


def star2_correspondence(chain: ChainSpec) -> tuple:
    """Each star collapsed to one endpoint of a single edge."""
    return tuple((0 if lab.startswith("a") else 1, i) for i, lab in enumerate(chain.states))


def star2_canonical(chain: ChainSpec) -> list[frozenset]:
    """Cuts along the path ``a2 - a0 - a1 - b1 - b0 - b2``."""
    A = chain.subset(s for s in chain.states if s.startswith("a"))
    full = frozenset(range(chain.n))
    a1, b1, a2, b2 = (chain.idx(x) for x in ("a1", "b1", "a2", "b2"))
    return [frozenset([a2]), A - {a1}, A, A | {b1}, full - {b2}]


# -- Ding-Peres construction --------------------------------------------------------

def balanced(word: str, K: int) -> bool:
    """Depth in ``[K/4, K/2]`` and left/right counts within ``sqrt(K)``."""
    depth = len(word)
    left = word.count("L")
    return K / 4 <= depth <= K / 2 and abs(left - (depth - left)) <= math.sqrt(K)


def dingperes(K: int, seed: int = 0, left_weight: float = 1.0,
              expander_size: int | None = None) -> ChainSpec:
    """Binary tree of height ``K`` (labels ``t`` + L/R word), a path of ``K``
    extra states hanging from every balanced vertex, and a seeded random
    3-regular graph whose distinct vertices receive the leaves.

    Edges into left children carry conductance ``left_weight``.  The
    expander defaults to ``K^2 2^K`` states.
    """
    if not 2 <= K <= 8:
        raise ChainError("K must lie in 2..8")
    leaves = 2 ** K
    size = K * K * leaves if expander_size is None else int(expander_size)
    if size < leaves or size * 3 % 2:
        raise ChainError("expander needs at least 2^K states and even 3 * size")
    words = [""]
    edges = []
    for depth in range(K):
        nxt = []
        for w in words[-(2 ** depth):]:
            for side in "LR":
                c = left_weight if side == "L" else 1.0
                edges.append((f"t{w}", f"t{w}{side}", c))
                nxt.append(w + side)
        words.extend(nxt)
    for w in words:
        if balanced(w, K):
            prev = f"t{w}"
            for i in range(1, K + 1):
                edges.append((prev, f"p{w}.{i}", 1.0))
                prev = f"p{w}.{i}"
    rng = np.random.default_rng(seed)
    for attempt in range(100):
        g = nx.random_regular_graph(3, size, seed=int(rng.integers(2**31)))
        if nx.is_connected(g):
            break
    else:
        raise ChainError("could not draw a connected 3-regular graph")
    edges += [(f"x{u}", f"x{v}", 1.0) for u, v in sorted(tuple(sorted(e)) for e in g.edges)]
    leaf_words = sorted(w for w in words if len(w) == K)
    targets = np.sort(rng.choice(size, size=leaves, replace=False))
    edges += [(f"t{w}", f"x{int(x)}", 1.0) for w, x in zip(leaf_words, targets)]
    tree_states = [f"t{w}" for w in words]
    others = []
    for u, v, _ in edges:
        for s in (u, v):
            if not s.startswith("t"):
                others.append(s)
    states = tree_states + sorted(set(others), key=lambda s: (s[0], s))
    return build_chain(edges, states=states)


def dingperes_canonical(chain: ChainSpec, K: int) -> list[frozenset]:
    """First ``j`` tree levels plus their hanging paths, ``j = 1..K-1``."""
    out = []
    for j in range(1, K):
        members = []
        for i, lab in enumerate(chain.states):
            if lab.startswith("t") and len(lab) - 1 < j:
                members.append(i)
            elif lab.startswith("p") and len(lab.split(".")[0]) - 1 < j:
                members.append(i)
        out.append(frozenset(members))
    return out


# -- clique-cycle products ------------------------------------------------------------

def prod_label(i: int, level: int, j: int) -> str:
    return f"q{i}.{level}.{j}"


def prodchain(k: int, n: int) -> ChainSpec:
    """``n`` copies ``Q_1..Q_n`` of ``K_k x C_n``; ``v_i = (i, 1, 0)`` joins
    ``v_{i+1}`` and ``v'_i = (i, n, 0)`` joins ``v'_{i+1}``."""
    if k < 1 or n < 3:
        raise ChainError("prodchain needs k >= 1 and n >= 3")
    edges = []
    for i in range(1, n + 1):
        for lev in range(1, n + 1):
            for a in range(k):
                for b in range(a + 1, k):
                    edges.append((prod_label(i, lev, a), prod_label(i, lev, b), 1.0))
                nxt = lev % n + 1
                edges.append((prod_label(i, lev, a), prod_label(i, nxt, a), 1.0))
    for i in range(1, n):
        edges.append((prod_label(i, 1, 0), prod_label(i + 1, 1, 0), 1.0))
        edges.append((prod_label(i, n, 0), prod_label(i + 1, n, 0), 1.0))
    states = [prod_label(i, lev, j) for i in range(1, n + 1)
              for lev in range(1, n + 1) for j in range(k)]
    return build_chain(edges, states=states)


def prod_parse(label: str) -> tuple[int, int, int]:
    i, lev, j = label[1:].split(".")
    return int(i), int(lev), int(j)


def prodchain_canonical(chain: ChainSpec, n: int) -> list[frozenset]:
    """``S_{j + n(i-1)}``: copies before ``i`` plus levels ``<= j`` of ``Q_i``."""
    parsed = [prod_parse(s) for s in chain.states]
    out = []
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == n and j == n:
                break
            out.append(frozenset(v for v, (a, lev, _) in enumerate(parsed)
                                 if a < i or (a == i and lev <= j)))
    return out


def prodchain_blocks(chain: ChainSpec, n: int) -> tuple:
    """``(v_i, Q_i)`` for every copy."""
    parsed = [prod_parse(s) for s in chain.states]
    return tuple(
        (chain.idx(prod_label(i, 1, 0)), frozenset(v for v, p in enumerate(parsed) if p[0] == i))
        for i in range(1, n + 1)
    )


def prodchain_correspondence(chain: ChainSpec) -> tuple:
    """Every copy ``Q_i`` collapsed to vertex ``i-1`` of a path."""
    return tuple((prod_parse(s)[0] - 1, v) for v, s in enumerate(chain.states))


# -- dispatcher ---------------------------------------------------------------------

def generate(spec: ExampleSpec) -> Example:
    f, p = spec.family.upper(), dict(spec.params)
    if f == "PATH":
        return Example(spec, path(p["n"]))
    if f == "CYCLE":
        return Example(spec, cycle(p["n"]))
    if f == "WPATH3":
        ch = wpath3(p["n"])
        tree = two_point()
        corr = ((0, 0), (0, 1), (1, 2), (1, 3))
        return Example(spec, ch, tree, corr, 3)
    if f == "HAMCLIQUE":
        return Example(spec, hamclique(p["n"]))
    if f == "BINTREE":
        return Example(spec, bintree(p["height"]))
    if f == "STAR2":
        ch = star2(p["n"], p.get("perturb_seed"))
        return Example(spec, ch, two_point(), star2_correspondence(ch), 3)
    if f == "DINGPERES":
        ch = dingperes(p["K"], spec.seed, p.get("left_weight", 1.0), p.get("expander_size"))
        return Example(spec, ch)
    if f == "PRODCHAIN":
        k, n = p["k"], p["n"]
        ch = prodchain(k, n)
        return Example(spec, ch, path(n) if n >= 2 else None,
                       prodchain_correspondence(ch), None, prodchain_blocks(ch, n))
    raise ChainError(f"unknown family {spec.family!r}")


def canonical_bottleneck(example: Example) -> list[frozenset]:
    f, p = example.spec.family.upper(), example.spec.params
    if f == "PRODCHAIN":
        return prodchain_canonical(example.chain, p["n"])
    if f == "DINGPERES":
        return dingperes_canonical(example.chain, p["K"])
    if f == "STAR2":
        return star2_canonical(example.chain)
    raise ChainError(f"no canonical sequence for family {f}")
