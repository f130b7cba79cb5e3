"""The bottleneck-sequence game between Crawler and Dasher.

Crawler grows a connected set ``C``; Dasher answers with a superset ``D``
whose complement stays connected.  Rule predicates, move validation,
strategies and the game loop live here.  A finished game with the greedy
Crawler certifies ``E_s[tau] <= 1/alpha^3 + 2/(alpha^2 beta gamma) sum_k 1/Phi(D_k)``.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .chain import BudgetExceededError, ChainError, ChainSpec, flow, phi
from .metrics import exit_frequencies
from .bottleneck import exit_order
from .topology import ball, component_of, hull, inner_boundary, is_connected, shortest_path

FLOW_TOL = 1e-12
EXACT_CAP = 22
NODE_BUDGET = 5 * 10**6


class InvalidMoveError(ChainError):
    """A strategy produced a move that breaks a rule; carries the transcript."""

    def __init__(self, report, transcript):
        self.report = report
        self.transcript = transcript
        super().__init__(f"{report.player} move breaks rule ({report.rule}): {report.note}")


@dataclass(frozen=True)
class GameParams:
    s: int
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ChainError("alpha must lie in (0, 1]")
        if abs(1 / self.alpha - round(1 / self.alpha)) > 1e-9:
            raise ChainError("1/alpha must be an integer")
        if not 0 < self.beta <= 1:
            raise ChainError("beta must lie in (0, 1]")
        if not 0 < self.gamma < 1:
            raise ChainError("gamma must lie in (0, 1)")

    @property
    def steps(self) -> int:
        return int(round(1 / self.alpha))

    def bound(self, score: float) -> float:
        a, b, g = self.alpha, self.beta, self.gamma
        return 1 / a**3 + 2 / (a * a * b * g) * score


@dataclass(frozen=True)
class GamePosition:
    C: frozenset = frozenset()
    D: frozenset = frozenset()


# -- nearness -----------------------------------------------------------------

_near_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def reach_probabilities(chain: ChainSpec, steps: int) -> np.ndarray:
    """``W[v, u] = P_v(H(u) <= steps)`` for all pairs, via absorbing iterations."""
    per_chain = _near_cache.setdefault(chain, {})
    if steps not in per_chain:
        W = np.eye(chain.n)
        for _ in range(steps):
            W = chain.P @ W
            np.fill_diagonal(W, 1.0)
        W.setflags(write=False)
        per_chain[steps] = W
    return per_chain[steps]


def near_matrix(chain: ChainSpec, alpha: float) -> np.ndarray:
    """Boolean ``N[v, u]``: ``v`` is alpha-near to ``u``."""
    W = reach_probabilities(chain, int(round(1 / alpha)))
    pi = chain.pi
    lhs = pi[:, None] * W
    rhs = alpha * pi[None, :]
    return lhs >= rhs * (1 - 1e-12)


def is_alpha_near(chain: ChainSpec, v: int, u: int, alpha: float) -> bool:
    """``pi(v) P_v(H(u) <= 1/alpha) >= alpha pi(u)``."""
    return bool(near_matrix(chain, alpha)[v, u])


def set_near(chain: ChainSpec, A, B, alpha: float) -> bool:
    """Every vertex of ``A`` is alpha-near to some vertex of ``B``."""
    A, B = sorted(A), sorted(B)
    if not A:
        return True
    if not B:
        return False
    N = near_matrix(chain, alpha)
    return bool(N[np.ix_(A, B)].any(axis=1).all())


# -- adjustment ---------------------------------------------------------------

@dataclass(frozen=True)
class AdjustmentReport:
    """``holds`` is exact in ``exact`` mode and means "not refuted" otherwise."""

    holds: bool
    witness: frozenset | None
    mode: str
    checked: int


def _adjustment_terms(chain, A, B, beta):
    F = chain.flow_matrix
    a = chain.mask(A)
    b = chain.mask(B)
    outside = sorted(set(range(chain.n)) - B)
    # contribution of x in B^c \ S to Q(X, A) - beta Q(X, B)
    base = {x: float(F[x, a].sum() - beta * F[x, b].sum()) for x in outside}
    scale = float(F[np.ix_(~b, b)].sum()) if outside else 0.0
    return F, outside, base, scale


def _slack(chain, A, B, S, beta):
    """``Q(X, A u S) - beta Q(X, B u S)`` with ``X = (B u S)^c``."""
    T = B | S
    X = ~chain.mask(T)
    return flow(chain, X, A | S) - beta * flow(chain, X, T)


def is_beta_adjustment(chain: ChainSpec, A, B, beta: float, mode: str = "exact",
                       samples: int = 200, rng=None, cap: int = EXACT_CAP,
                       node_budget: int = NODE_BUDGET) -> AdjustmentReport:
    """Whether ``B`` is a beta-adjustment of ``A``.

    Every ``S`` inside ``B^c`` with ``A u S`` connected must satisfy
    ``Q((B u S)^c, A u S) >= beta Q((B u S)^c, B u S)``.  ``exact`` mode
    enumerates each such ``S`` once (include/exclude branching on the least
    frontier vertex, slack maintained incrementally); ``sampled`` mode checks
    ``S`` empty plus random connected extensions.
    """
    A, B = frozenset(A), frozenset(B)
    if not A:
        raise ChainError("adjustment needs a nonempty base set")
    if not A <= B:
        raise ChainError("A must be a subset of B")
    if not is_connected(chain, A):
        raise ChainError("A must be connected")
    if not 0 < beta <= 1:
        raise ChainError("beta must lie in (0, 1]")
    F, outside, base, scale = _adjustment_terms(chain, A, B, beta)
    tol = FLOW_TOL * max(scale, 1e-300)
    if mode == "sampled":
        if sum(base.values()) < -tol:
            return AdjustmentReport(False, frozenset(), mode, 1)
        return _sampled(chain, A, B, beta, samples, rng, tol)
    if mode != "exact":
        raise ChainError(f"unknown mode {mode!r}")
    if len(outside) > cap:
        raise BudgetExceededError(f"|B^c| = {len(outside)} exceeds exact cap {cap}")

    local = {x: i for i, x in enumerate(outside)}
    adj = chain.adjacency
    nb = [[local[w] for w in adj[x] if w in local] for x in outside]
    w_out = [[float(F[x, outside[j]]) for j in nb[i]] for i, x in enumerate(outside)]
    w_in = [[float(F[outside[j], x]) for j in nb[i]] for i, x in enumerate(outside)]
    b_val = [base[x] for x in outside]
    start = 0
    for x in A:
        for w in adj[x]:
            if w in local:
                start |= 1 << local[w]
    k = 1 - beta
    count = 0
    in_s = [False] * len(outside)
    # slack(S) = sum_{x in X} base[x] + (1 - beta) Q(X, S)
    witness = None
    path = []

    def enter(i, base_sum, qxs):
        q_is = sum(w for j, w in zip(nb[i], w_out[i]) if in_s[j])
        q_xi = sum(w for j, w in zip(nb[i], w_in[i]) if not in_s[j])
        in_s[i] = True
        return base_sum - b_val[i], qxs - q_is + q_xi

    def rec(frontier, excluded, base_sum, qxs):
        nonlocal count, witness
        cand = frontier & ~excluded
        if not cand:
            count += 1
            if count > node_budget:
                raise BudgetExceededError("adjustment enumeration exceeds node budget")
            if base_sum + k * qxs < -tol:
                witness = frozenset(outside[i] for i in path)
                return True
            return False
        v = (cand & -cand).bit_length() - 1
        nb_base, nb_q = enter(v, base_sum, qxs)
        path.append(v)
        grow = frontier
        for j in nb[v]:
            if not in_s[j]:
                grow |= 1 << j
        grow &= ~(1 << v)
        found = rec(grow, excluded, nb_base, nb_q)
        path.pop()
        in_s[v] = False
        if found:
            return True
        return rec(frontier, excluded | (1 << v), base_sum, qxs)

    found = rec(start, 0, sum(b_val), 0.0)
    if found:
        # confirm with a direct evaluation
        if _slack(chain, A, B, witness, beta) >= -tol:
            found = False
            witness = None
    return AdjustmentReport(not found, witness, "exact", count)


def _sampled(chain, A, B, beta, samples, rng, tol):
    rng = np.random.default_rng(rng)
    adj = chain.adjacency
    outside = set(range(chain.n)) - B
    checked = 1
    for _ in range(samples):
        S = set()
        frontier = sorted({w for x in A for w in adj[x] if w in outside})
        target = rng.integers(1, max(2, len(outside) + 1))
        while frontier and len(S) < target:
            v = frontier[rng.integers(len(frontier))]
            S.add(v)
            frontier = sorted({w for x in A | S for w in adj[x] if w in outside and w not in S})
        checked += 1
        S = frozenset(S)
        if _slack(chain, A, B, S, beta) < -tol:
            return AdjustmentReport(False, S, "sampled", checked)
    return AdjustmentReport(True, None, "sampled", checked)


# -- move validation ------------------------------------------------------------

@dataclass(frozen=True)
class MoveReport:
    valid: bool
    player: str
    rule: str | None = None
    provenance: str = "verified"
    note: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def _crawler_check(chain, params, pos, C2):
    C, D = pos.C, pos.D
    if not C <= C2:
        return MoveReport(False, "crawler", "a", note="C not contained in C'")
    if (C2 - C) & D:
        return MoveReport(False, "crawler", "a", note="C' adds vertices of D")
    if not C2 or not is_connected(chain, C2):
        return MoveReport(False, "crawler", "a", note="C' empty or disconnected")
    out = ~chain.mask(D | C2)
    lhs = flow(chain, out, C)
    rhs = flow(chain, ~chain.mask(D), C)
    if lhs > params.gamma * rhs + FLOW_TOL * max(rhs, 1e-300):
        return MoveReport(False, "crawler", "b", note=f"{lhs:.6g} > gamma * {rhs:.6g}")
    return MoveReport(True, "crawler")


def _dasher_check(chain, params, pos, D2, cap, budget):
    C, D = pos.C, pos.D
    full = frozenset(range(chain.n))
    if not (C | D) <= D2:
        return MoveReport(False, "dasher", "i", note="D' misses part of C or D")
    if not is_connected(chain, full - D2):
        return MoveReport(False, "dasher", "i", note="complement of D' disconnected")
    if params.s in D2:
        if not set_near(chain, [params.s], C, params.alpha):
            return MoveReport(False, "dasher", "iv", note="s is not alpha-near to C")
        if D2 != full:
            return MoveReport(False, "dasher", "iv", note="s in D' but D' != V")
        return MoveReport(True, "dasher")
    far = [v for v in sorted(inner_boundary(chain, D2))
           if not set_near(chain, [v], C, params.alpha)]
    if far:
        return MoveReport(False, "dasher", "ii",
                          note=f"boundary states {far[:5]} not alpha-near to C")
    if len(full - D2) <= cap:
        rep = is_beta_adjustment(chain, C, D2, params.beta, "exact", cap=cap, node_budget=budget)
        provenance = "verified"
    else:
        rep = is_beta_adjustment(chain, C, D2, params.beta, "sampled", samples=0)
        provenance = "certified"
    if not rep.holds:
        return MoveReport(False, "dasher", "iii", provenance,
                          note=f"witness S = {sorted(rep.witness)}")
    return MoveReport(True, "dasher", None, provenance)


def validate_move(chain: ChainSpec, params: GameParams, position: GamePosition, move,
                  player: str, cap: int = EXACT_CAP, budget: int = NODE_BUDGET) -> MoveReport:
    """Check a Crawler move ``C'`` against rules (a)-(b) or a Dasher move ``D'``
    against rules (i)-(iv).

    Crawler moves must be nonempty.  Adjustment (iii) is checked exactly
    when ``|D'^c| <= cap``; otherwise only its ``S`` empty instance is
    checked and the report's provenance is ``certified``.
    """
    move = frozenset(move)
    if player == "crawler":
        return _crawler_check(chain, params, position, move)
    if player == "dasher":
        return _dasher_check(chain, params, position, move, cap, budget)
    raise ChainError(f"unknown player {player!r}")


# -- strategies -----------------------------------------------------------------

class CrawlerGreedy:
    """Greedy Crawler driven by exit frequencies from ``s``.

    States are ranked by ``y`` (ties by index, ``s`` last).  The first move is
    the halting state; afterwards the complement of ``D`` is scanned in rank
    order and ``C`` becomes the part of ``C`` plus the scanned prefix joined to
    the first state, stopping at the first prefix that satisfies rule (b).
    """

    name = "crawler-greedy"

    def __init__(self, chain: ChainSpec, params: GameParams, y=None):
        self.chain = chain
        self.params = params
        self.y = exit_frequencies(chain, params.s).y if y is None else np.asarray(y)
        self.order = exit_order(self.y, params.s)
        self.rank = np.empty(chain.n, dtype=int)
        self.rank[self.order] = np.arange(chain.n)

    def move(self, pos: GamePosition) -> frozenset:
        if not pos.C:
            return frozenset([int(self.order[0])])
        chain = self.chain
        F = chain.flow_matrix
        c = chain.mask(pos.C)
        inflow = F[:, c].sum(axis=1)
        rest = [int(v) for v in self.order if int(v) not in pos.D]
        total = float(inflow[rest].sum())
        limit = self.params.gamma * total
        inside = set(pos.C)
        prefix = set(pos.C)
        gained = 0.0
        adj = chain.adjacency
        for v in rest:
            prefix.add(v)
            if v not in inside and any(w in inside for w in adj[v]):
                grow = component_of(adj, v, prefix - inside)
                inside |= grow
                gained += float(inflow[list(grow)].sum())
            if total - gained <= limit + FLOW_TOL * max(total, 1e-300):
                return frozenset(inside)
        return frozenset(inside)


class CrawlerFill:
    """Crawler takes everything outside ``D`` at once."""

    name = "crawler-fill"

    def __init__(self, chain: ChainSpec, params: GameParams):
        self.chain = chain

    def move(self, pos: GamePosition) -> frozenset:
        return pos.C | (frozenset(range(self.chain.n)) - pos.D)


class DasherHull:
    """``D' = h_s(C u D)``."""

    name = "dasher-hull"

    def __init__(self, chain: ChainSpec, params: GameParams):
        self.chain = chain
        self.s = params.s

    def move(self, pos: GamePosition) -> frozenset:
        return hull(self.chain, self.s, pos.C | pos.D)


class DasherRI:
    """Dasher that swallows a radius-``R`` neighbourhood of ``C``,
    ``R = 2r^2 - r - 1``, keeping a shortest path to ``s`` open.

    ``D_n = h_s(B_G(R, C_n))`` minus the first ``R`` interior states of the
    current path ``sigma``.  The path is reused from its last state in
    ``C_n`` when that index is below ``R``, and replaced by a fresh
    lowest-index shortest path otherwise.
    """

    name = "dasher-ri"

    def __init__(self, chain: ChainSpec, params: GameParams, r: int):
        if r < 1:
            raise ChainError("r must be a positive integer")
        self.chain = chain
        self.s = params.s
        self.r = r
        self.R = 2 * r * r - r - 1
        self.paths: list[tuple] = []
        self.indices: list[int | None] = []

    def move(self, pos: GamePosition) -> frozenset:
        chain, s, R = self.chain, self.s, self.R
        full = frozenset(range(chain.n))
        grown = ball(chain, R, pos.C)
        if s in grown:
            self.paths.append(())
            self.indices.append(None)
            return full
        if not self.paths or not self.paths[-1]:
            sigma = tuple(shortest_path(chain.adjacency, pos.C, s))
            idx = None
        else:
            prev = self.paths[-1]
            hits = [i for i, v in enumerate(prev) if v in pos.C]
            if not hits:
                raise ChainError("strategy state inconsistent: C misses the previous path")
            idx = max(hits)
            if idx <= R - 1:
                sigma = prev[idx:]
            else:
                sigma = tuple(shortest_path(chain.adjacency, pos.C, s))
        self.paths.append(sigma)
        self.indices.append(idx)
        return hull(chain, s, grown) - frozenset(sigma[1:R + 1])


class DasherBlocks:
    """Dasher that absorbs a whole block once its trigger state enters ``C``.

    ``blocks`` is a list of ``(trigger, members)``; the move is the hull of
    ``C u D`` together with every triggered block.
    """

    name = "dasher-blocks"

    def __init__(self, chain: ChainSpec, params: GameParams, blocks):
        self.chain = chain
        self.s = params.s
        self.blocks = [(int(t), frozenset(b)) for t, b in blocks]

    def move(self, pos: GamePosition) -> frozenset:
        grab = set(pos.C | pos.D)
        for t, members in self.blocks:
            if t in pos.C and self.s not in members:
                grab |= members
        return hull(self.chain, self.s, grab)


# -- the game -------------------------------------------------------------------

@dataclass
class GameTranscript:
    params: GameParams
    history: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    crawler: str = ""
    dasher: str = ""
    complete: bool = False
    valid: bool = True
    stop_cost: float | None = None

    @property
    def sequence(self) -> list:
        """``D_1..D_l``: every Dasher set before the final ``V``."""
        return [D for _, D in self.history[1:-1]] if self.complete else [D for _, D in self.history[1:]]

    def score(self, chain: ChainSpec) -> float:
        return float(sum(1 / phi(chain, D) for D in self.sequence))

    def bound(self, chain: ChainSpec) -> float:
        return self.params.bound(self.score(chain))

    @property
    def provenance(self) -> str:
        if any(r.provenance == "certified" for r in self.reports):
            return "certified"
        return "verified"

    def to_dict(self, chain: ChainSpec | None = None) -> dict:
        lab = (lambda S: chain.labels(S)) if chain is not None else sorted
        rounds = []
        for i, (C, D) in enumerate(self.history):
            row = {"C": lab(C), "D": lab(D)}
            if chain is not None and D and len(D) < chain.n:
                row["phi_D"] = phi(chain, D)
            if i > 0:
                row["crawler"] = self.reports[2 * i - 2].to_dict()
                if 2 * i - 1 < len(self.reports):
                    row["dasher"] = self.reports[2 * i - 1].to_dict()
            rounds.append(row)
        out = {
            "params": {
                "s": chain.states[self.params.s] if chain is not None else self.params.s,
                "alpha": self.params.alpha, "beta": self.params.beta, "gamma": self.params.gamma,
            },
            "crawler": self.crawler,
            "dasher": self.dasher,
            "rounds": rounds,
            "complete": self.complete,
            "valid": self.valid,
            "provenance": self.provenance,
        }
        if chain is not None:
            out["score"] = self.score(chain)
            out["bound"] = self.bound(chain)
            if self.stop_cost is not None:
                out["stop_cost"] = self.stop_cost
        return out


def play_game(chain: ChainSpec, params: GameParams, crawler, dasher, mode: str = "abort",
              cap: int = EXACT_CAP, budget: int = NODE_BUDGET) -> GameTranscript:
    """Alternate Crawler and Dasher moves from ``(empty, empty)`` until ``D = V``.

    Every move is validated.  In ``abort`` mode an invalid move raises
    :class:`InvalidMoveError` carrying the transcript so far; in ``record``
    mode play continues and the transcript is flagged invalid.  With the
    greedy Crawler the optimal stopping cost from ``s`` is attached.
    """
    if mode not in ("abort", "record"):
        raise ChainError(f"unknown mode {mode!r}")
    full = frozenset(range(chain.n))
    t = GameTranscript(params, [(frozenset(), frozenset())],
                       crawler=getattr(crawler, "name", type(crawler).__name__),
                       dasher=getattr(dasher, "name", type(dasher).__name__))
    pos = GamePosition()
    for _ in range(chain.n + 1):
        for player, strategy in (("crawler", crawler), ("dasher", dasher)):
            mv = strategy.move(pos)
            rep = validate_move(chain, params, pos, mv, player, cap, budget)
            t.reports.append(rep)
            if not rep.valid:
                t.valid = False
                if mode == "abort":
                    t.history.append((mv, pos.D) if player == "crawler" else (pos.C, mv))
                    raise InvalidMoveError(rep, t)
            pos = GamePosition(mv, pos.D) if player == "crawler" else GamePosition(pos.C, mv)
        if len(t.history) > 1 and not pos.D > t.history[-1][1]:
            raise ChainError("Dasher failed to enlarge D")
        t.history.append((pos.C, pos.D))
        if pos.D == full:
            t.complete = True
            break
    if isinstance(crawler, CrawlerGreedy):
        t.stop_cost = float(chain.pi @ crawler.y)
    return t


def bound_holds(chain: ChainSpec, transcript: GameTranscript) -> bool:
    """``E_s[tau] <= bound`` for a finished greedy-Crawler game."""
    if transcript.stop_cost is None:
        raise ChainError("transcript carries no stopping cost")
    b = transcript.bound(chain)
    return transcript.stop_cost <= b * (1 + 1e-12)


def replay(chain: ChainSpec, params: GameParams, history, cap: int = EXACT_CAP,
           budget: int = NODE_BUDGET) -> list[MoveReport]:
    """Re-validate every move of a recorded ``(C_i, D_i)`` history."""
    history = [(frozenset(C), frozenset(D)) for C, D in history]
    if history[0] != (frozenset(), frozenset()):
        raise ChainError("a game starts from (empty, empty)")
    out = []
    for (C0, D0), (C1, D1) in zip(history, history[1:]):
        out.append(validate_move(chain, params, GamePosition(C0, D0), C1, "crawler", cap, budget))
        out.append(validate_move(chain, params, GamePosition(C1, D0), D1, "dasher", cap, budget))
    return out
