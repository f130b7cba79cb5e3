"""Finite lazy Markov chains: construction, validation, stationary measure,
edge flows and bottleneck ratios.

States carry arbitrary hashable labels, but every algorithm in the package
works on integer indices ``0..N-1``.  Vertex sets are plain iterables of
indices; :meth:`ChainSpec.subset` converts labels to an index set.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np
import scipy.linalg


LAZY_TOL = 1e-12
ROW_TOL = 1e-12
SOLVE_TOL = 1e-10


class ChainError(ValueError):
    """Malformed chain input or a query outside an operation's domain."""


class DisconnectedChainError(ChainError):
    def __init__(self, components):
        self.components = components
        super().__init__(
            f"derived graph is disconnected: {len(components)} components "
            f"{[sorted(c)[:5] for c in components]}"
        )


class NumericalError(RuntimeError):
    """A linear solve left a residual above tolerance."""


class BudgetExceededError(RuntimeError):
    """An exhaustive computation would exceed its configured budget."""


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """A finite Markov chain on labelled states.

    Parameters
    ----------
    states : tuple
        State labels, in index order.
    P : (N, N) ndarray
        Row-stochastic transition matrix; stored read-only.
    conductances : dict or None
        Edge conductances ``{(i, j): c}`` with ``i < j`` when the chain was
        built from a network, else ``None``.
    """

    states: tuple
    P: np.ndarray
    conductances: dict | None = None

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def n(self) -> int:
        return len(self.states)

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    def idx(self, label: Hashable) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise ChainError(f"unknown state {label!r}") from None

    def subset(self, labels: Iterable[Hashable]) -> frozenset:
        return frozenset(self.idx(x) for x in labels)

    def labels(self, members: Iterable[int]) -> list:
        return [self.states[i] for i in sorted(members)]

    @cached_property
    def adjacency(self) -> tuple:
        """Neighbour tuples of the undirected derived graph."""
        A = (self.P > 0) | (self.P.T > 0)
        np.fill_diagonal(A, False)
        return tuple(tuple(np.flatnonzero(row).tolist()) for row in A)

    @cached_property
    def edges(self) -> frozenset:
        return frozenset(
            (u, v) for u, nb in enumerate(self.adjacency) for v in nb if u < v
        )

    @cached_property
    def max_degree(self) -> int:
        return max((len(nb) for nb in self.adjacency), default=0)

    @cached_property
    def is_tree(self) -> bool:
        from .topology import is_connected

        return len(self.edges) == self.n - 1 and is_connected(self, range(self.n))

    @cached_property
    def pi(self) -> np.ndarray:
        pi = stationary_distribution(self)
        pi.setflags(write=False)
        return pi

    @cached_property
    def flow_matrix(self) -> np.ndarray:
        """``F[u, v] = pi(u) p_uv``; ``Q(A, B)`` sums a block of it."""
        F = self.pi[:, None] * self.P
        F.setflags(write=False)
        return F

    def mask(self, members: Iterable[int]) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[list(members)] = True
        return m


def _components(n, adjacency, allowed=None):
    seen = np.zeros(n, dtype=bool)
    if allowed is not None:
        seen[~allowed] = True
    comps = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack, comp = [root], [root]
        while stack:
            u = stack.pop()
            for w in adjacency[u]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
                    comp.append(w)
        comps.append(comp)
    return comps


def build_chain(
    conductances: Sequence[tuple],
    states: Sequence[Hashable] | None = None,
) -> ChainSpec:
    """Lazy random walk on a weighted simple graph.

    ``p_vv = 1/2`` and ``p_uv = c_uv / (2 sum_w c_vw)``; the result is
    reversible with ``pi(v)`` proportional to ``sum_w c_vw``.

    Parameters
    ----------
    conductances : sequence of (u, v, c)
        Edge list over state labels; ``c > 0``.
    states : sequence, optional
        Label order.  Defaults to order of first appearance in the edge list.
    """
    if states is None:
        seen = {}
        for u, v, _ in conductances:
            seen.setdefault(u, None)
            seen.setdefault(v, None)
        states = list(seen)
    states = tuple(states)
    index = {s: i for i, s in enumerate(states)}
    if len(index) != len(states):
        raise ChainError("duplicate state labels")
    n = len(states)
    if n == 0:
        raise ChainError("empty state space")

    C = np.zeros((n, n))
    cond = {}
    for u, v, c in conductances:
        if u not in index or v not in index:
            raise ChainError(f"edge ({u!r}, {v!r}) names an unknown state")
        if u == v:
            raise ChainError(f"self-loop at {u!r}")
        c = float(c)
        if not c > 0 or not np.isfinite(c):
            raise ChainError(f"non-positive conductance {c} on ({u!r}, {v!r})")
        i, j = sorted((index[u], index[v]))
        if (i, j) in cond:
            raise ChainError(f"duplicate edge ({u!r}, {v!r})")
        cond[(i, j)] = c
        C[i, j] = C[j, i] = c

    if n > 1:
        adjacency = [tuple(np.flatnonzero(row)) for row in C]
        comps = _components(n, adjacency)
        if len(comps) > 1:
            raise DisconnectedChainError([{states[i] for i in c} for c in comps])

    if n == 1:
        P = np.ones((1, 1))
    else:
        weight = C.sum(axis=1)
        P = C / (2 * weight[:, None])
        np.fill_diagonal(P, 0.5)
    return ChainSpec(states, P, cond)


def from_matrix(
    states: Sequence[Hashable],
    P,
    allow_nonlazy: bool = False,
) -> ChainSpec:
    """Wrap an explicit transition matrix, checking stochasticity,
    irreducibility and (unless ``allow_nonlazy``) laziness."""
    P = np.asarray(P, dtype=float)
    n = len(states)
    if P.shape != (n, n):
        raise ChainError(f"matrix shape {P.shape} does not match {n} states")
    if np.any(P < 0) or np.any(P > 1):
        raise ChainError("transition probabilities must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1) > ROW_TOL)
    if bad.size:
        raise ChainError(f"rows {[states[i] for i in bad]} do not sum to 1")
    if not allow_nonlazy and np.any(np.abs(np.diag(P) - 0.5) > LAZY_TOL):
        raise ChainError("chain is not lazy (p_vv != 1/2); pass allow_nonlazy")
    chain = ChainSpec(tuple(states), P)
    comps = _components(n, chain.adjacency)
    if len(comps) > 1:
        raise DisconnectedChainError([{states[i] for i in c} for c in comps])
    return chain


def stationary_distribution(chain: ChainSpec) -> np.ndarray:
    """Solve ``(P^T - I) x = 0`` with one equation replaced by ``sum x = 1``."""
    n = chain.n
    A = chain.P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = scipy.linalg.solve(A, b)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"stationary solve failed: {exc}") from exc
    residual = np.max(np.abs(pi @ chain.P - pi))
    if residual > SOLVE_TOL or np.any(pi <= 0):
        raise NumericalError(
            f"stationary solve residual {residual:.3e}, min entry {pi.min():.3e}"
        )
    return pi / pi.sum()


@dataclass(frozen=True)
class ChainReport:
    lazy: bool
    irreducible: bool
    reversible: bool
    eps_uniform: bool
    flow_ratio: float

    def to_dict(self):
        return dict(self.__dict__)


def validate_chain(chain: ChainSpec, eps: float = 1.0) -> ChainReport:
    """Report laziness, irreducibility, reversibility and eps-uniformity.

    ``flow_ratio`` is min/max of ``pi(u) p_uv`` over both orientations of
    every derived edge; the chain is eps-uniform when it is at least eps.
    """
    if not 0 < eps <= 1:
        raise ChainError("eps must lie in (0, 1]")
    P = chain.P
    lazy = bool(np.all(np.abs(np.diag(P) - 0.5) <= LAZY_TOL))
    irreducible = len(_components(chain.n, chain.adjacency)) == 1
    reversible = eps_uniform = False
    ratio = 0.0
    if irreducible:
        F = chain.flow_matrix
        reversible = bool(np.max(np.abs(F - F.T)) <= SOLVE_TOL)
        if chain.edges:
            u, v = np.array(sorted(chain.edges)).T
            flows = np.concatenate([F[u, v], F[v, u]])
            ratio = float(flows.min() / flows.max())
        else:
            ratio = 1.0
        eps_uniform = ratio >= eps * (1 - 1e-9)
    return ChainReport(lazy, irreducible, reversible, eps_uniform, ratio)


def _as_mask(chain, A):
    if isinstance(A, np.ndarray) and A.dtype == bool:
        return A
    return chain.mask(A)


def measure(chain: ChainSpec, A) -> float:
    return float(chain.pi[_as_mask(chain, A)].sum())


def flow(chain: ChainSpec, A, B) -> float:
    """``Q(A, B) = P_pi(X_0 in A, X_1 in B)``."""
    a, b = _as_mask(chain, A), _as_mask(chain, B)
    return float(chain.flow_matrix[np.ix_(a, b)].sum())


def phi(chain: ChainSpec, A) -> float:
    """Bottleneck ratio ``Q(A, A^c) / (pi(A) pi(A^c))`` for a proper subset."""
    a = _as_mask(chain, A)
    if not a.any() or a.all():
        raise ChainError("phi needs a nonempty proper subset")
    pa = float(chain.pi[a].sum())
    return flow(chain, a, ~a) / (pa * (1.0 - pa))
