"""Exact mixing quantities: total variation mixing time, optimal stopping
costs via scaled exit frequencies, and hitting times.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .chain import (
    BudgetExceededError,
    ChainError,
    ChainSpec,
    NumericalError,
    SOLVE_TOL,
)
from .topology import connected_sets, from_mask

TV_THRESHOLD = 0.25
TV_TOL = 1e-12


def tv_distance(mu, nu) -> float:
    """Total variation distance, computed as half the L1 norm."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    for name, d in (("mu", mu), ("nu", nu)):
        if d.ndim != 1 or np.any(d < -1e-15) or abs(d.sum() - 1) > 1e-9:
            raise ChainError(f"{name} is not a probability vector")
    if mu.shape != nu.shape:
        raise ChainError("distributions live on different state spaces")
    return float(0.5 * np.abs(mu - nu).sum())


def worst_tv(chain: ChainSpec, Pn: np.ndarray) -> float:
    """``max_v ||P^n(v, .) - pi||`` given the matrix ``P^n``."""
    return float(0.5 * np.abs(Pn - chain.pi[None, :]).sum(axis=1).max())


def tv_profile(chain: ChainSpec, n_max: int) -> np.ndarray:
    """Worst-start TV distance for ``n = 0..n_max`` by repeated products."""
    out = np.empty(n_max + 1)
    M = np.eye(chain.n)
    out[0] = worst_tv(chain, M)
    for k in range(1, n_max + 1):
        M = M @ chain.P
        out[k] = worst_tv(chain, M)
    return out


def mixing_time(chain: ChainSpec, max_steps: int = 10**7) -> int:
    """Least ``n`` with worst-start TV distance at most 1/4.

    Doubles ``n`` by squaring until the threshold is met, then bisects using
    the cached dyadic powers.  The worst-start distance is nonincreasing in
    ``n``, which makes bisection exact.
    """
    thr = TV_THRESHOLD + TV_TOL
    if worst_tv(chain, np.eye(chain.n)) <= thr:
        return 0
    powers = [chain.P.copy()]
    hi = 1
    while worst_tv(chain, powers[-1]) > thr:
        if hi * 2 > max_steps:
            last = worst_tv(chain, powers[-1])
            raise BudgetExceededError(
                f"t_mix exceeds {max_steps} steps (TV at n={hi} is {last:.4g})"
            )
        powers.append(powers[-1] @ powers[-1])
        hi *= 2

    def power(n):
        M = None
        for k, Pk in enumerate(powers):
            if n >> k & 1:
                M = Pk if M is None else M @ Pk
        return M

    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if worst_tv(chain, power(mid)) <= thr:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True, eq=False)
class ExitFrequencies:
    """Scaled exit frequencies of an optimal stopping rule from ``start``."""

    start: int
    y: np.ndarray
    halting_state: int
    cost: float


def _exit_system(chain: ChainSpec):
    # x = pi * y solves x (I - P) = e_s - pi; columns of (I - P)^T are
    # dependent, so row 0 becomes the normalisation sum(x) = 0.
    n = chain.n
    A = np.eye(n) - chain.P.T
    A[0, :] = 1.0
    return A


def _exit_from_solution(chain, s, x, A, rhs):
    residual = np.max(np.abs(A @ x - rhs))
    if residual > SOLVE_TOL * max(1.0, np.max(np.abs(x))):
        raise NumericalError(f"exit-frequency solve residual {residual:.3e}")
    y = x / chain.pi
    y = y - y.min()
    scale = max(1.0, float(y.max()))
    halting = int(np.flatnonzero(y <= 1e-12 * scale)[0])
    return ExitFrequencies(s, y, halting, float(chain.pi @ y))


def exit_frequencies(chain: ChainSpec, s: int) -> ExitFrequencies:
    """Scaled exit frequencies ``y`` from start ``s``.

    Solves ``pi(v) = sum_u y_u Q(u, v) - y_v Q(v, V)`` for ``v != s`` and
    fixes the one-dimensional kernel by ``min_v y_v = 0``, which makes the
    minimiser a halting state.  ``cost = sum_v pi(v) y_v`` is the optimal
    expected stopping time from ``s``.
    """
    if not 0 <= s < chain.n:
        raise ChainError(f"state index {s} out of range")
    A = _exit_system(chain)
    rhs = -chain.pi.copy()
    rhs[s] += 1.0
    rhs[0] = 0.0
    try:
        x = scipy.linalg.solve(A, rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"exit-frequency system is singular: {exc}") from exc
    return _exit_from_solution(chain, s, x, A, rhs)


def all_exit_frequencies(chain: ChainSpec) -> np.ndarray:
    """Matrix whose column ``s`` holds ``y`` for start ``s`` (one factorisation)."""
    A = _exit_system(chain)
    R = np.eye(chain.n) - chain.pi[:, None]
    R[0, :] = 0.0
    try:
        lu = scipy.linalg.lu_factor(A)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"exit-frequency system is singular: {exc}") from exc
    X = scipy.linalg.lu_solve(lu, R)
    residual = np.max(np.abs(A @ X - R))
    if residual > SOLVE_TOL * max(1.0, np.max(np.abs(X))):
        raise NumericalError(f"exit-frequency solve residual {residual:.3e}")
    Y = X / chain.pi[:, None]
    return Y - Y.min(axis=0, keepdims=True)


def stop_costs(chain: ChainSpec) -> np.ndarray:
    """Optimal expected stopping cost ``E_s[tau]`` for every start ``s``."""
    return chain.pi @ all_exit_frequencies(chain)


def stop_time(chain: ChainSpec) -> float:
    """``t_stop``: the worst start's optimal stopping cost."""
    return float(stop_costs(chain).max())


def hitting_times(chain: ChainSpec, A) -> np.ndarray:
    """``E_v[H(A)]`` for every ``v``: zero on ``A``, ``1 + P h`` elsewhere."""
    a = chain.mask(A) if not (isinstance(A, np.ndarray) and A.dtype == bool) else A
    if not a.any():
        raise ChainError("hitting time of the empty set is undefined")
    h = np.zeros(chain.n)
    free = ~a
    if free.any():
        M = np.eye(int(free.sum())) - chain.P[np.ix_(free, free)]
        try:
            h[free] = scipy.linalg.solve(M, np.ones(int(free.sum())))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise NumericalError(f"hitting-time system singular: {exc}") from exc
    return h


def hitting_time(chain: ChainSpec, v: int, A) -> float:
    return float(hitting_times(chain, A)[v])


@dataclass(frozen=True)
class WorstHitting:
    value: float
    start: int
    target: frozenset
    delta: float
    candidates: int


def worst_case_hitting(
    chain: ChainSpec,
    delta: float,
    cap: int = 20,
    connected_only: bool = False,
    candidates=None,
) -> WorstHitting:
    """``t_hit(delta) = max E_v[H(A)]`` over ``v`` and ``A`` with ``pi(A) >= delta``.

    The exhaustive mode scans only inclusion-minimal qualifying sets, since
    hitting times only shrink as ``A`` grows.  ``connected_only`` restricts
    to connected ``A`` (every connected qualifying set is scanned) and
    ``candidates`` replaces the family outright.
    """
    if not 0 < delta < 1:
        raise ChainError("delta must lie in (0, 1)")
    pi = chain.pi
    n = chain.n
    tol = 1e-12
    if candidates is not None:
        family = [frozenset(c) for c in candidates if pi[list(c)].sum() >= delta - tol]
    elif connected_only:
        if n > 2 * cap:
            raise BudgetExceededError(f"|V| = {n} too large for connected scan")
        family = []
        for m in connected_sets(chain):
            s = from_mask(m)
            if pi[list(s)].sum() >= delta - tol:
                family.append(s)
    else:
        if n > cap:
            raise BudgetExceededError(
                f"|V| = {n} exceeds exhaustive cap {cap}; use connected_only or candidates"
            )
        family = list(_minimal_sets(pi, delta - tol))
    best = WorstHitting(-1.0, -1, frozenset(), delta, len(family))
    for A in sorted(family, key=lambda s: (len(s), sorted(s))):
        h = hitting_times(chain, A)
        v = int(np.argmax(h))
        if h[v] > best.value + 1e-12:
            best = WorstHitting(float(h[v]), v, A, delta, len(family))
    if best.start < 0:
        raise ChainError("no set reaches the requested stationary mass")
    return best


def _minimal_sets(pi, threshold):
    n = len(pi)
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    mass = bits @ pi
    lightest = np.where(bits, pi[None, :], np.inf).min(axis=1)
    keep = (mass >= threshold) & (mass - lightest < threshold)
    for row in bits[keep]:
        yield frozenset(np.flatnonzero(row).tolist())


@dataclass(frozen=True, eq=False)
class MixingReport:
    t_mix: int
    t_stop: float
    worst_tv_by_step: np.ndarray
    per_start_stop_cost: np.ndarray
    halting_states: list = field(default_factory=list)

    def to_dict(self, states=None):
        labels = list(states) if states is not None else list(range(len(self.per_start_stop_cost)))
        return {
            "t_mix": int(self.t_mix),
            "t_stop": float(self.t_stop),
            "worst_tv_by_step": [float(x) for x in self.worst_tv_by_step],
            "per_start": {
                "state": labels,
                "stop_cost": [float(x) for x in self.per_start_stop_cost],
                "halting_state": [labels[h] for h in self.halting_states],
            },
        }


def mixing_report(chain: ChainSpec, max_steps: int = 10**7) -> MixingReport:
    t = mixing_time(chain, max_steps)
    profile = tv_profile(chain, t)
    if np.any(np.diff(profile) > 1e-10):
        raise NumericalError("worst-start TV distance increased between steps")
    Y = all_exit_frequencies(chain)
    costs = chain.pi @ Y
    halting = [int(np.argmin(Y[:, s])) for s in range(chain.n)]
    return MixingReport(t, float(costs.max()), profile, costs, halting)


def exit_flow_residual(chain: ChainSpec, y: np.ndarray, Z) -> float:
    """``|pi(Z) - sum_{u not in Z, v in Z} (y_u Q(u, v) - y_v Q(v, u))|``.

    Zero for exit frequencies from any start outside ``Z``: the net scaled
    flow into ``Z`` is exactly its stationary mass.
    """
    z = chain.mask(Z)
    F = chain.flow_matrix
    y = np.asarray(y, dtype=float)
    inflow = y[~z] @ F[np.ix_(~z, z)].sum(axis=1)
    outflow = y[z] @ F[np.ix_(z, ~z)].sum(axis=1)
    return float(abs(chain.pi[z].sum() - inflow + outflow))
