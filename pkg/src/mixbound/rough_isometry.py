"""Correspondences between a graph and a tree: stretch, the radius
``r(r+1)`` sets ``A_t`` and their separation properties, the cut form of
Kac's formula, the chained hitting-time lower bound, and geometric checks
on games played by the rough-isometry Dasher.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bottleneck import crossing_edge, tree_max_path, verify_sequence
from .chain import ChainError, ChainSpec, measure
from .game import CrawlerGreedy, DasherRI, GameParams, GameTranscript, play_game
from .metrics import hitting_times, stop_costs
from .topology import (
    all_pairs_distances,
    ball,
    component_of,
    components,
    distances_from,
    hull,
    outer_boundary,
    shortest_path,
)


def geometry_constants(r: int) -> dict:
    """Integer constants attached to stretch ``r``."""
    R = 2 * r * r - r - 1
    return {
        "at_radius": r * (r + 1),
        "at_diameter": 2 * r * (r + 1) + r - 1,
        "disjoint_gap": 2 * r * r * (r + 1) + r,
        "R": R,
        "boundary_diameter": 4 * r**4 - 2 * r**3 + 4 * r * r + r - 1,
        "K": 4 * r**4 - 2 * r**3 + 8 * r * r - r - 2,
    }


# -- correspondences ----------------------------------------------------------------

@dataclass(frozen=True)
class Stretch:
    stretch: float
    r: int
    worst: tuple  # ((t, g), (t', g'))


def _check_pairs(G: ChainSpec, T: ChainSpec, pairs):
    pairs = sorted({(int(t), int(g)) for t, g in pairs})
    for t, g in pairs:
        if not (0 <= t < T.n and 0 <= g < G.n):
            raise ChainError(f"pair ({t}, {g}) out of range")
    lone_t = set(range(T.n)) - {t for t, _ in pairs}
    lone_g = set(range(G.n)) - {g for _, g in pairs}
    if lone_t or lone_g:
        raise ChainError(
            f"not a correspondence: isolated tree states {sorted(lone_t)[:5]}, "
            f"graph states {sorted(lone_g)[:5]}"
        )
    return pairs


def correspondence_stretch(G: ChainSpec, T: ChainSpec, pairs) -> Stretch:
    """Exact stretch ``max (d_T v d_G + 1) / (d_T ^ d_G + 1)`` over pairs of pairs."""
    pairs = _check_pairs(G, T, pairs)
    DG = all_pairs_distances(G.adjacency)
    DT = all_pairs_distances(T.adjacency)
    ts = np.array([t for t, _ in pairs])
    gs = np.array([g for _, g in pairs])
    dt = DT[np.ix_(ts, ts)]
    dg = DG[np.ix_(gs, gs)]
    ratio = (np.maximum(dt, dg) + 1) / (np.minimum(dt, dg) + 1)
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    value = float(ratio[i, j])
    return Stretch(value, int(math.ceil(value - 1e-12)), (pairs[i], pairs[j]))


def fibres(G: ChainSpec, T: ChainSpec, pairs):
    """``C_{t,G}`` for every tree state and ``C_{T,v}`` for every graph state."""
    to_g = [set() for _ in range(T.n)]
    to_t = [set() for _ in range(G.n)]
    for t, g in pairs:
        to_g[t].add(g)
        to_t[g].add(t)
    return [frozenset(x) for x in to_g], [frozenset(x) for x in to_t]


# -- the sets A_t ------------------------------------------------------------------------

@dataclass(frozen=True)
class AtReport:
    sets: tuple
    connected: bool
    max_internal_diameter: int
    diameter_bound: int
    separation_checked: int
    separation_failures: tuple
    disjoint_checked: int
    disjoint_failures: tuple

    @property
    def ok(self) -> bool:
        return (self.connected and self.max_internal_diameter <= self.diameter_bound
                and not self.separation_failures and not self.disjoint_failures)


def at_sets(G: ChainSpec, T: ChainSpec, pairs, r: int) -> list[frozenset]:
    to_g, _ = fibres(G, T, pairs)
    rad = r * (r + 1)
    return [ball(G, rad, to_g[t]) for t in range(T.n)]


def _internal_diameter(G, members):
    allowed = set(members)
    worst = 0
    for v in members:
        d = distances_from(G.adjacency, [v], allowed)
        vals = d[list(members)]
        if np.any(vals < 0):
            return -1
        worst = max(worst, int(vals.max()))
    return worst


def _tree_path(T: ChainSpec, a: int, b: int) -> list[int]:
    return shortest_path(T.adjacency, [a], b)


def separated(G: ChainSpec, left, right, cut) -> bool:
    """Every path from ``left`` to ``right`` meets ``cut``."""
    cut = frozenset(cut)
    free = set(range(G.n)) - cut
    src = [v for v in left if v not in cut]
    seen = set()
    for v in src:
        if v not in seen:
            seen |= component_of(G.adjacency, v, free)
    return not any(v in seen for v in right if v not in cut)


def build_at_sets(G: ChainSpec, T: ChainSpec, pairs, r: int, triple_cap: int = 30,
                  samples: int = 10**4, seed: int = 0) -> AtReport:
    """Build every ``A_t = B_G(r(r+1), C_{t,G})`` and check three properties.

    Each ``A_t`` is connected with internal path lengths at most
    ``2r(r+1) + r - 1``; ``A_t`` separates ``C_{a,G}`` from ``C_{b,G}``
    whenever ``t`` lies strictly inside the tree path from ``a`` to ``b``
    (all triples when ``|V(T)| <= triple_cap``, else ``samples`` random
    ones); and ``A_s, A_t`` are disjoint once ``d_T(s, t) >= 2r^2(r+1) + r``.
    """
    pairs = _check_pairs(G, T, pairs)
    c = geometry_constants(r)
    A = at_sets(G, T, pairs, r)
    to_g, _ = fibres(G, T, pairs)
    diam = [_internal_diameter(G, a) for a in A]
    connected = all(d >= 0 for d in diam)
    DT = all_pairs_distances(T.adjacency)

    labels = []
    for a in A:
        lab = np.full(G.n, -1)
        for k, comp in enumerate(components(G, set(range(G.n)) - a)):
            lab[list(comp)] = k
        labels.append(lab)

    def sep_ok(a, t, b):
        la, lb = labels[t][list(to_g[a])], labels[t][list(to_g[b])]
        la, lb = set(la[la >= 0].tolist()), set(lb[lb >= 0].tolist())
        return not (la & lb)

    if T.n <= triple_cap:
        triples = [(a, b) for a in range(T.n) for b in range(a + 1, T.n)]
    else:
        rng = np.random.default_rng(seed)
        triples = [tuple(sorted(rng.choice(T.n, 2, replace=False).tolist())) for _ in range(samples)]
    sep_fail, sep_count = [], 0
    for a, b in triples:
        for t in _tree_path(T, a, b)[1:-1]:
            sep_count += 1
            if not sep_ok(a, t, b):
                sep_fail.append((a, t, b))
    dis_fail, dis_count = [], 0
    for s in range(T.n):
        for t in range(s + 1, T.n):
            if DT[s, t] >= c["disjoint_gap"]:
                dis_count += 1
                if A[s] & A[t]:
                    dis_fail.append((s, t))
    return AtReport(tuple(A), connected, max(diam), c["at_diameter"], sep_count,
                    tuple(sep_fail), dis_count, tuple(dis_fail))


# -- Kac's formula ---------------------------------------------------------------------------

def return_expectation(chain: ChainSpec, L, C) -> float:
    """``E_{pi_C}[H^+(L^c)]``: one forced step, then the hitting time of ``L^c``."""
    L, C = frozenset(L), frozenset(C)
    out = frozenset(range(chain.n)) - L
    h = hitting_times(chain, out) if out else None
    c = sorted(C)
    pi = chain.pi
    one_step = 1.0 + chain.P[c] @ h
    return float(pi[c] @ one_step / pi[c].sum())


def kac_check(chain: ChainSpec, L, C, R) -> float:
    """``|pi(L u C) - pi(C) E_{pi_C}[H^+(L^c)]|`` for a partition where ``C``
    separates ``L`` from ``R``."""
    L, C, R = frozenset(L), frozenset(C), frozenset(R)
    if L & C or L & R or C & R or len(L | C | R) != chain.n:
        raise ChainError("L, C, R must partition the state space")
    if not C:
        raise ChainError("C must be nonempty")
    if not separated(chain, L, R, C):
        raise ChainError("C does not separate L from R")
    lhs = measure(chain, L | C)
    return abs(lhs - measure(chain, C) * return_expectation(chain, L, C))


# -- chained hitting-time lower bound ----------------------------------------------------------

@dataclass(frozen=True)
class RILowerBound:
    value: float
    terms: tuple
    indices: tuple  # n_1 < ... < n_K, 1-based positions in the sequence
    blocks: tuple  # (L_j, C_j, R_j)
    separated: tuple
    size_sum: int  # sum_{i <= M} |S_i|
    target: frozenset  # R_K

    @property
    def K(self) -> int:
        return len(self.indices)


def _lower_bound_half(G, T, pairs, r, sets):
    c = geometry_constants(r)
    to_g, _ = fibres(G, T, pairs)
    M = 0
    for i, S in enumerate(sets, start=1):
        if measure(T, S) <= 0.5 + 1e-12:
            M = i
    if M == 0:
        return RILowerBound(0.0, (), (), (), (), 0, frozenset())
    cuts = [crossing_edge(T, S)[0] for S in sets[:M]]  # t_i, the inner end
    DT = all_pairs_distances(T.adjacency)
    chosen = [M]
    while True:
        prev = chosen[-1]
        cand = [m for m in range(1, prev) if DT[cuts[m - 1], cuts[prev - 1]] >= c["disjoint_gap"]]
        if not cand:
            break
        chosen.append(max(cand))
    idx = tuple(reversed(chosen))
    A = {}
    full = frozenset(range(G.n))
    blocks, terms, seps = [], [], []
    for n_j in idx:
        t = cuts[n_j - 1]
        if t not in A:
            A[t] = ball(G, c["at_radius"], to_g[t])
        Cj = A[t]
        Lj = frozenset().union(*(to_g[x] for x in sets[n_j - 1])) - Cj
        Rj = full - Lj - Cj
        blocks.append((Lj, Cj, Rj))
        seps.append(separated(G, Lj, Rj, Cj))
        if Rj:
            h = hitting_times(G, Rj)
            terms.append(float(min(h[v] for v in Cj)))
        else:
            terms.append(0.0)
    size_sum = int(sum(len(S) for S in sets[:M]))
    return RILowerBound(float(sum(terms)), tuple(terms), idx, tuple(blocks), tuple(seps),
                        size_sum, blocks[-1][2])


def ri_tree_lower_bound(G: ChainSpec, T: ChainSpec, pairs, r: int, sets,
                        reverse: bool = False) -> RILowerBound:
    """Chained lower bound ``sum_j min_{u in C_j} E_u[H(R_j)]`` on
    ``max_{v in C_1} E_v[H(R_K)]``.

    ``sets`` is a 1-bottleneck sequence on the tree ``T``.  With ``M`` the
    last index of tree mass at most 1/2 and ``t_i`` the inner end of the cut
    edge of ``S_i``, indices are thinned from ``M`` downwards keeping tree
    distance at least ``2r^2(r+1) + r`` (each new index lies below the last).
    ``C_j = A_{t_{n_j}}``, ``L_j`` is the rest of the image of ``S_{n_j}``
    and ``R_j`` the remainder.  A block with ``R_j`` empty contributes 0.
    ``reverse`` applies the construction to the reversed complements.
    """
    pairs = _check_pairs(G, T, pairs)
    if not T.is_tree:
        raise ChainError("T must be a tree")
    sets = [frozenset(S) for S in sets]
    rep = verify_sequence(T, sets, 1.0)
    if not rep:
        raise ChainError(f"not a 1-bottleneck sequence on T: {rep.condition}")
    if reverse:
        full = frozenset(range(T.n))
        sets = [full - S for S in reversed(sets)]
    return _lower_bound_half(G, T, pairs, r, sets)


# -- games played by the rough-isometry Dasher ---------------------------------------------------

@dataclass(frozen=True)
class TranscriptGeometry:
    constants: dict
    boundary_diameter: int
    boundary_ok: bool
    growth_checked: int
    growth_failures: tuple
    N: tuple
    monotone_checked: int
    monotone_failures: tuple
    offsum_failures: tuple
    large_cut: tuple | None  # (|A|, |A^c|) witness on T

    @property
    def ok(self) -> bool:
        return (self.boundary_ok and not self.growth_failures and not self.monotone_failures
                and not self.offsum_failures and self.large_cut is not None)

    def to_dict(self) -> dict:
        return {
            "constants": self.constants,
            "boundary_diameter": self.boundary_diameter,
            "boundary_ok": self.boundary_ok,
            "growth_checked": self.growth_checked,
            "growth_failures": [list(x) for x in self.growth_failures],
            "N": list(self.N),
            "monotone_checked": self.monotone_checked,
            "monotone_failures": [list(x) for x in self.monotone_failures],
            "offsum_failures": list(self.offsum_failures),
            "large_cut": list(self.large_cut) if self.large_cut else None,
            "ok": self.ok,
        }


def tree_path_sets(G: ChainSpec, T: ChainSpec, pairs, v0: int, s: int):
    """Tree path ``t_0..t_p`` from ``C_{T,v0}`` to ``C_{T,s}`` and the sets
    ``S_i = h_{t_p}(t_i)`` for ``i = 1..p-1``."""
    _, to_t = fibres(G, T, pairs)
    a = min(to_t[v0])
    d = distances_from(T.adjacency, [a])
    b = min(to_t[s], key=lambda x: (d[x], x))
    path = shortest_path(T.adjacency, [a], b)
    tp = path[-1]
    sets = [hull(T, tp, [path[i]]) for i in range(1, len(path) - 1)]
    return path, sets


def large_cut(T: ChainSpec):
    """A cut set ``A`` of ``T`` with ``|A| >= |V|/(4 Delta)`` and ``|A^c| >= |V|/2``."""
    n, delta = T.n, max(T.max_degree, 1)
    for u, v in sorted(T.edges):
        for a, b in ((u, v), (v, u)):
            side = component_of(T.adjacency, a, set(range(n)) - {b})
            if len(side) >= n / (4 * delta) and n - len(side) >= n / 2:
                return len(side), n - len(side)
    return None


def transcript_geometry(G: ChainSpec, T: ChainSpec, pairs, r: int,
                        transcript: GameTranscript) -> TranscriptGeometry:
    """Check a rough-isometry Dasher game against its geometric guarantees.

    * outer boundary of each ``D_n`` has diameter at most ``4r^4 - 2r^3 + 4r^2 + r - 1``;
    * ``d_G(D_n, D_{n+k}^c) >= k - (that constant)`` for ``n + k <= l``;
    * ``N_{n+k} > N_n`` for ``k >= K + 1``, ``K = 4r^4 - 2r^3 + 8r^2 - r - 2``;
    * the offset-sum inequality for ``j = 1..K``;
    * a large balanced cut exists in ``T``.
    """
    pairs = _check_pairs(G, T, pairs)
    c = geometry_constants(r)
    seq = transcript.sequence
    l = len(seq)
    DG = all_pairs_distances(G.adjacency)
    worst = 0
    for D in seq:
        bd = sorted(outer_boundary(G, D))
        if bd:
            worst = max(worst, int(DG[np.ix_(bd, bd)].max()))
    full = frozenset(range(G.n))
    growth_fail, growth_n = [], 0
    for n in range(1, l + 1):
        Dn = sorted(seq[n - 1])
        for k in range(1, l - n + 1):
            comp = sorted(full - seq[n + k - 1])
            growth_n += 1
            d = int(DG[np.ix_(Dn, comp)].min())
            if d < k - c["boundary_diameter"]:
                growth_fail.append((n, k, d))
    N = ()
    mono_fail, mono_n = [], 0
    if l:
        C1 = transcript.history[1][0]
        path, sets = tree_path_sets(G, T, pairs, min(C1), transcript.params.s)
        _, to_t = fibres(G, T, pairs)
        p = len(path) - 1
        vals = []
        for D in seq:
            image = frozenset().union(*(to_t[v] for v in D))
            hit = [i for i, S in enumerate(sets, start=1) if image <= S]
            vals.append(hit[0] if hit else p)
        N = tuple(vals)
        for n in range(1, l + 1):
            for k in range(c["K"] + 1, l - n + 1):
                mono_n += 1
                if not N[n + k - 1] > N[n - 1]:
                    mono_fail.append((n, k))
    sizes = [(len(D), G.n - len(D)) for D in seq]
    lhs = sum(a * b for a, b in sizes)
    off_fail = []
    for j in range(1, c["K"] + 1):
        rhs = 2 * sum(sizes[k][0] * sizes[k + j][1] for k in range(l - j)) + j / 2 * G.n**2
        if lhs > rhs:
            off_fail.append(j)
    return TranscriptGeometry(c, worst, worst <= c["boundary_diameter"], growth_n,
                              tuple(growth_fail), N, mono_n, tuple(mono_fail),
                              tuple(off_fail), large_cut(T) if T.n >= 2 else None)


# -- robustness comparison ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustnessReport:
    t_stop_graph: float
    t_stop_tree: float
    game_score: float
    game_size_sum: float
    tree_score: float
    tree_size_sum: float
    transcript: GameTranscript
    geometry: TranscriptGeometry

    def to_dict(self) -> dict:
        return {
            "t_stop_graph": self.t_stop_graph,
            "t_stop_tree": self.t_stop_tree,
            "stop_ratio": self.t_stop_graph / self.t_stop_tree,
            "game_score": self.game_score,
            "game_size_sum": self.game_size_sum,
            "tree_score": self.tree_score,
            "tree_size_sum": self.tree_size_sum,
            "size_ratio": self.game_size_sum / self.tree_size_sum if self.tree_size_sum else None,
            "game_valid": self.transcript.valid,
            "geometry": self.geometry.to_dict(),
        }


def robustness_compare(X: ChainSpec, Y: ChainSpec, pairs, r: int, alpha: float = 0.5,
                       beta: float = 0.5, gamma: float = 0.5, s: int | None = None) -> RobustnessReport:
    """Play greedy Crawler against the rough-isometry Dasher on ``X`` and set
    the result beside the tree maxima on ``Y``.

    Moves are validated in record mode: the Dasher is only guaranteed valid
    for small enough (unspecified) alpha and beta, so validity is reported.
    """
    pairs = _check_pairs(X, Y, pairs)
    costs_x = stop_costs(X)
    if s is None:
        s = int(np.argmax(costs_x))
    params = GameParams(s, alpha, beta, gamma)
    t = play_game(X, params, CrawlerGreedy(X, params), DasherRI(X, params, r), mode="record")
    seq = t.sequence
    size_sum = float(sum(len(D) * (X.n - len(D)) for D in seq))
    tree_score, _ = tree_max_path(Y, "phi")
    tree_size, _ = tree_max_path(Y, "size")
    geo = transcript_geometry(X, Y, pairs, r, t)
    return RobustnessReport(float(costs_x.max()), float(stop_costs(Y).max()), t.score(X),
                            size_sum, tree_score, tree_size, t, geo)
