"""Graph queries on the undirected graph derived from a chain.

Connectivity follows the derived graph (an edge wherever ``p_uv > 0`` or
``p_vu > 0``); the two boundaries follow the direction of ``P``.
"""
from __future__ import annotations

from collections import deque
from typing import Iterable

import numpy as np

from .chain import ChainError, ChainSpec


def _check(chain: ChainSpec, members: Iterable[int]) -> frozenset:
    s = frozenset(int(v) for v in members)
    for v in s:
        if not 0 <= v < chain.n:
            raise ChainError(f"state index {v} out of range")
    return s


def component_of(adjacency, root: int, allowed) -> set:
    """Vertices reachable from ``root`` through ``allowed`` (a set)."""
    comp = {root}
    stack = [root]
    while stack:
        u = stack.pop()
        for w in adjacency[u]:
            if w in allowed and w not in comp:
                comp.add(w)
                stack.append(w)
    return comp


def components(chain: ChainSpec, members: Iterable[int]) -> list[frozenset]:
    """Connected components of the induced subgraph, ordered by least element."""
    rest = set(_check(chain, members))
    out = []
    for v in sorted(rest):
        if v in rest:
            comp = component_of(chain.adjacency, v, rest)
            rest -= comp
            out.append(frozenset(comp))
    return out


def is_connected(chain: ChainSpec, members: Iterable[int]) -> bool:
    """Whether ``G[A]`` is connected.  The empty set counts as connected."""
    s = _check(chain, members)
    if not s:
        return True
    return len(component_of(chain.adjacency, next(iter(s)), s)) == len(s)


def outer_boundary(chain: ChainSpec, members: Iterable[int]) -> frozenset:
    """``{u not in A : p_uv > 0 for some v in A}``."""
    a = chain.mask(_check(chain, members))
    hit = (chain.P[:, a] > 0).any(axis=1) & ~a
    return frozenset(np.flatnonzero(hit).tolist())


def inner_boundary(chain: ChainSpec, members: Iterable[int]) -> frozenset:
    """``{v in A : p_uv > 0 for some u not in A}``."""
    a = chain.mask(_check(chain, members))
    hit = (chain.P[~a, :] > 0).any(axis=0) & a
    return frozenset(np.flatnonzero(hit).tolist())


def distances_from(adjacency, sources: Iterable[int], allowed=None) -> np.ndarray:
    """Multi-source BFS distances; ``-1`` marks unreachable vertices."""
    n = len(adjacency)
    dist = np.full(n, -1, dtype=np.int64)
    queue = deque()
    for s in sources:
        if dist[s] < 0 and (allowed is None or s in allowed):
            dist[s] = 0
            queue.append(s)
    while queue:
        u = queue.popleft()
        for w in adjacency[u]:
            if dist[w] < 0 and (allowed is None or w in allowed):
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def all_pairs_distances(adjacency) -> np.ndarray:
    n = len(adjacency)
    return np.stack([distances_from(adjacency, [v]) for v in range(n)]) if n else np.zeros((0, 0), int)


def distance(chain: ChainSpec, u: int, v: int) -> int:
    _check(chain, (u, v))
    return int(distances_from(chain.adjacency, [u])[v])


def ball(chain: ChainSpec, radius: int, members: Iterable[int]) -> frozenset:
    """Closed ball ``B_G(r, A) = {v : d_G(v, A) <= r}``."""
    d = distances_from(chain.adjacency, sorted(_check(chain, members)))
    return frozenset(np.flatnonzero((d >= 0) & (d <= radius)).tolist())


def hull(chain: ChainSpec, s: int, members: Iterable[int]) -> frozenset:
    """``h_s(A)``: every vertex cut off from ``s`` once ``A`` is removed.

    Read literally, when ``s`` lies in ``A`` every path from ``s`` meets
    ``A`` and the hull is all of ``V``.
    """
    a = _check(chain, members)
    _check(chain, (s,))
    if s in a:
        return frozenset(range(chain.n))
    free = set(range(chain.n)) - a
    reach = component_of(chain.adjacency, s, free)
    return frozenset(set(range(chain.n)) - reach)


def shortest_path(adjacency, sources: Iterable[int], target: int) -> list[int]:
    """A shortest path from the source set to ``target``.

    Deterministic: the start is the lowest-index closest source, and each
    step moves to the lowest-index neighbour one unit closer to ``target``.
    """
    dist = distances_from(adjacency, [target])
    sources = sorted(sources)
    reachable = [v for v in sources if dist[v] >= 0]
    if not reachable:
        raise ChainError("target unreachable from the source set")
    start = min(reachable, key=lambda v: (dist[v], v))
    path = [start]
    while path[-1] != target:
        u = path[-1]
        path.append(min(w for w in adjacency[u] if dist[w] == dist[u] - 1))
    return path


# -- bitmask helpers for exhaustive enumeration ----------------------------

def to_mask(members: Iterable[int]) -> int:
    m = 0
    for v in members:
        m |= 1 << v
    return m


def from_mask(mask: int) -> frozenset:
    out = []
    v = 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return frozenset(out)


def neighbour_masks(chain: ChainSpec) -> list[int]:
    return [to_mask(nb) for nb in chain.adjacency]


def mask_connected(mask: int, nbr: list[int]) -> bool:
    if mask == 0:
        return True
    low = mask & -mask
    seen = low
    frontier = low
    while frontier:
        v = frontier.bit_length() - 1
        frontier &= ~(1 << v)
        new = nbr[v] & mask & ~seen
        seen |= new
        frontier |= new
    return seen == mask


def connected_sets(chain: ChainSpec, max_size: int | None = None):
    """Yield every nonempty connected vertex set as a bitmask, exactly once.

    Each set is generated from its least vertex by branching on the least
    frontier vertex, so output is linear in the number of sets.
    """
    nbr = neighbour_masks(chain)
    n = chain.n
    limit = n if max_size is None else max_size

    def grow(current, size, forbidden, frontier):
        cand = frontier & ~forbidden
        if not cand or size == limit:
            yield current
            return
        v = (cand & -cand).bit_length() - 1
        bit = 1 << v
        yield from grow(current | bit, size + 1, forbidden,
                        (frontier | nbr[v]) & ~(current | bit))
        yield from grow(current, size, forbidden | bit, frontier)

    for root in range(n):
        lower = (1 << root) - 1
        yield from grow(1 << root, 1, lower, nbr[root] & ~lower)
