"""Bottleneck sequences: verification, scoring, the greedy construction
from exit frequencies, exact maximisation, tree hitting-time lower bounds
and the dyadic conductance-profile bound used for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import BudgetExceededError, ChainError, ChainSpec, flow, measure, phi
from .metrics import exit_frequencies
from .topology import (
    component_of,
    connected_sets,
    from_mask,
    is_connected,
    mask_connected,
    neighbour_masks,
)

FLOW_TOL = 1e-12


@dataclass(frozen=True)
class BottleneckSequence:
    theta: float
    sets: tuple
    score: float

    def to_dict(self, chain: ChainSpec | None = None):
        sets = [chain.labels(s) if chain else sorted(s) for s in self.sets]
        return {"theta": self.theta, "sets": sets, "score": self.score}


@dataclass(frozen=True)
class SequenceReport:
    valid: bool
    index: int | None = None
    condition: str | None = None

    def __bool__(self):
        return self.valid


def verify_sequence(chain: ChainSpec, sets, theta: float) -> SequenceReport:
    """Check the theta-bottleneck conditions, reporting the first failure.

    Conditions are checked per index in the order: nonempty/proper,
    nesting, connectivity of the set, of its complement, then the flow
    condition ``Q(S_{j+1} minus S_j, S_j) >= theta Q(S_j^c, S_j)``.
    """
    sets = [frozenset(s) for s in sets]
    if not sets:
        return SequenceReport(False, 0, "empty sequence")
    full = frozenset(range(chain.n))
    if not sets[0]:
        return SequenceReport(False, 0, "S_1 empty")
    if sets[-1] == full:
        return SequenceReport(False, len(sets) - 1, "S_l = V")
    for j, S in enumerate(sets):
        if not S <= full:
            return SequenceReport(False, j, "unknown states")
        if j + 1 < len(sets) and not S < sets[j + 1]:
            return SequenceReport(False, j, "not strictly nested")
        if not is_connected(chain, S):
            return SequenceReport(False, j, "S_j disconnected")
        if not is_connected(chain, full - S):
            return SequenceReport(False, j, "complement disconnected")
    for j in range(len(sets) - 1):
        S, nxt = sets[j], sets[j + 1]
        gain = flow(chain, nxt - S, S)
        total = flow(chain, full - S, S)
        if gain < theta * total - FLOW_TOL * total:
            return SequenceReport(False, j, "flow condition")
    return SequenceReport(True)


def sequence_score(chain: ChainSpec, sets, theta: float = 1.0, check: bool = True) -> float:
    """``sum_j 1 / Phi(S_j)`` for a valid theta-bottleneck sequence."""
    if check:
        report = verify_sequence(chain, sets, theta)
        if not report:
            raise ChainError(
                f"not a {theta}-bottleneck sequence: {report.condition} at index {report.index}"
            )
    return float(sum(1.0 / phi(chain, S) for S in sets))


def make_sequence(chain, sets, theta, check=True) -> BottleneckSequence:
    sets = tuple(frozenset(s) for s in sets)
    return BottleneckSequence(theta, sets, sequence_score(chain, sets, theta, check))


def exit_order(y: np.ndarray, s: int) -> np.ndarray:
    """States sorted by exit frequency, ties by index, with ``s`` placed last.

    ``y_s`` is maximal, so moving ``s`` behind equal values only resolves a
    tie.  Values within a relative 1e-10 count as tied.
    """
    scale = max(1.0, float(np.abs(y).max()))
    key = np.round(y / scale, 10)
    last = np.zeros(len(y), dtype=int)
    last[s] = 1
    return np.lexsort((np.arange(len(y)), last, key))


def prefix_components(chain: ChainSpec, order) -> list[frozenset]:
    """``B_i``: members of the first ``i`` ordered states joined to the first one
    inside that prefix, for ``i = 1..N``."""
    root = int(order[0])
    inside = {root}
    prefix = set()
    out = []
    adj = chain.adjacency
    for v in order:
        v = int(v)
        prefix.add(v)
        if v not in inside and any(w in inside for w in adj[v]):
            grow = component_of(adj, v, prefix - inside)
            inside |= grow
        out.append(frozenset(inside))
    return out


def greedy_sequence(chain: ChainSpec, s: int, theta: float, y=None) -> BottleneckSequence:
    """The nested sequence built from exit frequencies out of ``s``.

    With ``B_i`` the prefix components of the exit-frequency order,
    ``m_1 = 1`` and ``m_{i+1}`` is the least ``m > m_i`` with
    ``Q(B_m^c, B_{m_i}) <= (1 - theta) Q(B_{m_i}^c, B_{m_i})``.  The result is
    a theta-bottleneck sequence whose score times ``1/(1-theta)`` strictly
    exceeds the optimal stopping cost from ``s``.
    """
    if not 0 < theta < 1:
        raise ChainError("theta must lie in (0, 1)")
    if y is None:
        y = exit_frequencies(chain, s).y
    order = exit_order(np.asarray(y), s)
    B = prefix_components(chain, order)
    N = chain.n
    F = chain.flow_matrix
    chosen = [0]
    m = 0
    while True:
        cur = chain.mask(B[m])
        inflow = F[:, cur].sum(axis=1)
        inflow[cur] = 0.0
        limit = (1 - theta) * inflow.sum()
        nxt = N - 1
        for k in range(m + 1, N):
            outside = ~chain.mask(B[k])
            if inflow[outside].sum() <= limit + FLOW_TOL * limit:
                nxt = k
                break
        if nxt == N - 1:
            break
        chosen.append(nxt)
        m = nxt
    return make_sequence(chain, [B[k] for k in chosen], theta)


# -- maximisation --------------------------------------------------------------

@dataclass(frozen=True)
class MaxScore:
    score: float
    sequence: BottleneckSequence
    mode: str


def cut_sets(chain: ChainSpec) -> list[int]:
    """Bitmasks of nonempty proper sets that are connected with connected
    complement."""
    nbr = neighbour_masks(chain)
    full = (1 << chain.n) - 1
    out = []
    for m in connected_sets(chain):
        if m != full and mask_connected(full & ~m, nbr):
            out.append(m)
    return out


def max_score(chain: ChainSpec, theta: float = 1.0, mode: str = "brute-force",
              cap: int = 14, pair_budget: int = 5 * 10**7) -> MaxScore:
    """Maximum of ``sum 1/Phi(S_j)`` over theta-bottleneck sequences.

    ``brute-force`` runs a longest-path recursion over the DAG of cut sets
    (``S -> S'`` when the pair satisfies nesting and the flow condition);
    ``tree`` maximises edge weights ``1/Phi(side)`` along a path of the tree.
    """
    if mode == "tree":
        return _tree_max(chain)
    if mode != "brute-force":
        raise ChainError(f"unknown mode {mode!r}")
    if not 0 < theta <= 1:
        raise ChainError("theta must lie in (0, 1]")
    if chain.n > cap:
        raise BudgetExceededError(f"|V| = {chain.n} exceeds brute-force cap {cap}")
    if chain.n < 2:
        raise ChainError("need at least two states")
    masks = cut_sets(chain)
    k = len(masks)
    if k * k > pair_budget:
        raise BudgetExceededError(f"{k} cut sets exceed the pair budget")
    masks.sort(key=lambda m: (-bin(m).count("1"), m))
    F = chain.flow_matrix
    bools = [chain.mask(from_mask(m)) for m in masks]
    weight = [1.0 / phi(chain, b) for b in bools]
    inflow = [F[:, b].sum(axis=1) * ~b for b in bools]
    total = [float(f.sum()) for f in inflow]
    best = [0.0] * k
    succ = [-1] * k
    # Larger sets come first, so successors are final when a set is reached.
    for i in range(k):
        mi = masks[i]
        b_best, b_succ = 0.0, -1
        for j in range(i):
            mj = masks[j]
            if mi & ~mj or mi == mj:
                continue
            gain = float(inflow[i][bools[j]].sum())
            if gain >= theta * total[i] - FLOW_TOL * total[i] and best[j] > b_best:
                b_best, b_succ = best[j], j
        best[i] = weight[i] + b_best
        succ[i] = b_succ
    top = max(range(k), key=lambda i: (best[i], -i))
    sets = []
    i = top
    while i >= 0:
        sets.append(from_mask(masks[i]))
        i = succ[i]
    seq = make_sequence(chain, sets, theta)
    return MaxScore(seq.score, seq, "brute-force")


def edge_side(chain: ChainSpec, u: int, v: int) -> frozenset:
    """Component of ``u`` after deleting tree edge ``uv``."""
    if not chain.is_tree:
        raise ChainError("derived graph is not a tree")
    if v not in chain.adjacency[u]:
        raise ChainError(f"({u}, {v}) is not an edge")
    allowed = set(range(chain.n)) - {v}
    return frozenset(component_of(chain.adjacency, u, allowed))


def _tree_max(chain: ChainSpec) -> MaxScore:
    _, sets = tree_max_path(chain, "phi")
    seq = make_sequence(chain, sets, 1.0)
    return MaxScore(seq.score, seq, "tree")


def tree_max_path(chain: ChainSpec, weight: str = "phi") -> tuple[float, list]:
    """Heaviest path of a tree under per-edge weights and its cut sequence.

    ``weight="phi"`` uses ``1/Phi(side)``; ``weight="size"`` uses
    ``|S| |S^c|``.  Both are symmetric in the two sides of an edge, so the
    heaviest path gives the maximum over 1-bottleneck sequences.
    """
    if not chain.is_tree:
        raise ChainError("tree mode needs a tree")
    if chain.n < 2:
        raise ChainError("need at least two states")
    adj = chain.adjacency
    n = chain.n
    parent = [-1] * n
    order = [0]
    seen = {0}
    for u in order:
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                parent[w] = u
                order.append(w)
    # subtree totals give each edge side without a fresh search
    mass = chain.pi.copy()
    size = np.ones(n)
    for u in reversed(order[1:]):
        mass[parent[u]] += mass[u]
        size[parent[u]] += size[u]
    F = chain.flow_matrix
    edge_w = {}
    for u in order[1:]:
        if weight == "phi":
            edge_w[u] = mass[u] * (1 - mass[u]) / F[u, parent[u]]
        elif weight == "size":
            edge_w[u] = size[u] * (n - size[u])
        else:
            raise ChainError(f"unknown weight {weight!r}")
    down = [0.0] * n
    down_end = list(range(n))
    best = (-1.0, 0, 0)
    for u in reversed(order):
        arms = sorted(
            ((down[w] + edge_w[w], down_end[w]) for w in adj[u] if parent[w] == u),
            key=lambda t: -t[0],
        )
        if arms:
            down[u], down_end[u] = arms[0]
            total = arms[0][0] + (arms[1][0] if len(arms) > 1 else 0.0)
            other = arms[1][1] if len(arms) > 1 else u
            if total > best[0] + 1e-15:
                best = (total, arms[0][1], other)
    total, a, b = best
    path = _tree_path(adj, a, b)
    # path runs from b to a; sides containing b grow along it
    sets = [edge_side(chain, path[i], path[i + 1]) for i in range(len(path) - 1)]
    return float(total), sets


def _tree_path(adj, a, b):
    prev = {a: None}
    queue = [a]
    for u in queue:
        for w in adj[u]:
            if w not in prev:
                prev[w] = u
                queue.append(w)
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path


# -- trees --------------------------------------------------------------------

def tree_cut_hitting(chain: ChainSpec, u: int, v: int) -> float:
    """``E_u[H(v)]`` across tree edge ``uv``: ``pi(A) / Q(A, A^c)`` with ``A``
    the side of ``u``."""
    A = edge_side(chain, u, v)
    a = chain.mask(A)
    return measure(chain, a) / flow(chain, a, ~a)


@dataclass(frozen=True)
class TreeLowerBound:
    forward: float
    backward: float
    split: int
    cut_edges: tuple

    @property
    def total(self) -> float:
        return self.forward + self.backward


def crossing_edge(chain: ChainSpec, S) -> tuple[int, int]:
    S = frozenset(S)
    pairs = [(u, w) for u in sorted(S) for w in chain.adjacency[u] if w not in S]
    if len(pairs) != 1:
        raise ChainError(f"expected one crossing edge, found {len(pairs)}")
    return pairs[0]


def tree_lower_bound(chain: ChainSpec, sets) -> TreeLowerBound:
    """Chained cut hitting times along a 1-bottleneck sequence on a tree.

    With ``L`` the last index whose set has mass at most 1/2, ``forward``
    sums ``E_{s_i}[H(t_i)]`` over the cut edges ``s_i t_i`` for ``i <= L``
    (a lower bound on ``E_{s_1}[H(S_L^c)]``), and ``backward`` does the same
    for the reversed complements beyond ``L``.  Each term is at least
    ``1/Phi(S_i)``.
    """
    if not chain.is_tree:
        raise ChainError("tree_lower_bound needs a tree")
    report = verify_sequence(chain, sets, 1.0)
    if not report:
        raise ChainError(f"not a 1-bottleneck sequence: {report.condition}")
    sets = [frozenset(s) for s in sets]
    split = 0
    for i, S in enumerate(sets, start=1):
        if measure(chain, S) <= 0.5 + 1e-12:
            split = i
    edges = tuple(crossing_edge(chain, S) for S in sets)
    fwd = sum(tree_cut_hitting(chain, s_, t_) for s_, t_ in edges[:split])
    bwd = sum(tree_cut_hitting(chain, t_, s_) for s_, t_ in edges[split:])
    return TreeLowerBound(float(fwd), float(bwd), split, edges)


# -- dyadic conductance profile -------------------------------------------------

@dataclass(frozen=True)
class ConductanceProfile:
    """``values[j-1] = Phi(2^-j)``; ``inf`` marks an empty band."""

    m: int
    values: tuple
    witnesses: tuple = field(default=())

    def bound(self) -> float:
        return float(sum(1.0 / v**2 for v in self.values if math.isfinite(v)))


def profile_depth(chain: ChainSpec) -> int:
    return int(max(math.floor(math.log2(1.0 / p) + 1e-12) for p in chain.pi))


def fr_profile_bound(chain: ChainSpec, method: str = "auto", cap: int = 18,
                     candidates=None, frontier_budget: int = 10**6):
    """Dyadic conductance profile and ``sum_j 1/Phi(2^-j)^2``.

    ``Phi(p)`` minimises ``Phi(A)`` over connected ``A`` with
    ``p/2 <= pi(A) <= p``.  Methods: ``enumerate`` (all connected sets,
    ``|V| <= cap``), ``tree`` (exact dynamic programme over subtrees),
    ``candidates`` (caller-supplied sets).  ``auto`` picks ``enumerate`` for
    small chains and ``tree`` for larger trees.
    """
    m = profile_depth(chain)
    bands = [(2.0 ** -(j + 1), 2.0 ** -j) for j in range(1, m + 1)]
    if candidates is not None:
        method = "candidates"
    elif method == "auto":
        method = "enumerate" if chain.n <= cap else "tree"
    if method == "candidates":
        pool = [(measure(chain, c), phi(chain, c), frozenset(c))
                for c in candidates if is_connected(chain, c)]
        best = _band_minima(bands, pool)
    elif method == "enumerate":
        if chain.n > cap:
            raise BudgetExceededError(f"|V| = {chain.n} exceeds enumeration cap {cap}")
        pool = []
        full = (1 << chain.n) - 1
        for mask in connected_sets(chain):
            if mask == full:
                continue
            S = from_mask(mask)
            pool.append((measure(chain, S), phi(chain, S), S))
        best = _band_minima(bands, pool)
    elif method == "tree":
        best = _tree_profile(chain, bands, frontier_budget)
    else:
        raise ChainError(f"unknown method {method!r}")
    profile = ConductanceProfile(m, tuple(b[0] for b in best), tuple(b[1] for b in best))
    return profile, profile.bound()


def _in_band(mass, lo, hi):
    return lo - 1e-12 <= mass <= hi + 1e-12


def _band_minima(bands, pool):
    out = []
    for lo, hi in bands:
        vals = [(ph, S) for mass, ph, S in pool if _in_band(mass, lo, hi)]
        if vals:
            ph, S = min(vals, key=lambda t: (t[0], sorted(t[1])))
            out.append((ph, S))
        else:
            out.append((math.inf, None))
    return out


def _tree_profile(chain, bands, budget):
    """For every vertex ``r`` (as the top of a rooted subtree), a frontier
    ``{mass: (least boundary flow, witness)}`` over connected sets whose
    highest vertex is ``r``."""
    if not chain.is_tree:
        raise ChainError("tree method needs a tree")
    adj = chain.adjacency
    n = chain.n
    pi = chain.pi
    F = chain.flow_matrix
    parent = [-1] * n
    order = [0]
    for u in order:
        for w in adj[u]:
            if w != parent[u]:
                parent[w] = u
                order.append(w)

    def key(x):
        return round(x, 13)

    frontier = [None] * n
    results = []
    size = 0
    for u in reversed(order):
        table = {key(pi[u]): (pi[u], 0.0, (u,))}
        for w in adj[u]:
            if w == parent[u]:
                continue
            cut = F[u, w]
            merged = {}
            for ka, (ma, ba, wa) in table.items():
                excl = (ma, ba + cut, wa)
                _keep(merged, ka, excl)
                for kb, (mb, bb, wb) in frontier[w].items():
                    mass = ma + mb
                    if mass > 0.5 + 1e-12:
                        continue
                    _keep(merged, key(mass), (mass, ba + bb, wa + wb))
            table = merged
            size += len(table)
            if size > budget:
                raise BudgetExceededError("subtree frontier exceeds budget")
        frontier[u] = table
        up = F[u, parent[u]] if parent[u] >= 0 else 0.0
        for mass, b, wit in table.values():
            if mass < 1 - 1e-12:
                results.append((mass, (b + up) / (mass * (1 - mass)), wit))
    for w in order:
        frontier[w] = None
    out = []
    for lo, hi in bands:
        vals = [(ph, wit) for mass, ph, wit in results if _in_band(mass, lo, hi)]
        if vals:
            ph, wit = min(vals, key=lambda t: (t[0], sorted(t[1])))
            out.append((ph, frozenset(wit)))
        else:
            out.append((math.inf, None))
    return out


def _keep(table, k, entry):
    old = table.get(k)
    if old is None or entry[1] < old[1]:
        table[k] = entry
