import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixbound.chain import BudgetExceededError, ChainError, from_matrix
from mixbound.families import cycle, path, star2
from mixbound.metrics import (
    all_exit_frequencies,
    exit_flow_residual,
    exit_frequencies,
    hitting_time,
    hitting_times,
    mixing_report,
    mixing_time,
    stop_costs,
    stop_time,
    tv_distance,
    tv_profile,
    worst_case_hitting,
)

from conftest import corpus, random_graph


def fundamental_hitting(chain):
    """``H[i, j] = (Z_jj - Z_ij) / pi_j`` with ``Z = (I - P + 1 pi)^-1``."""
    n = chain.n
    Z = np.linalg.inv(np.eye(n) - chain.P + np.outer(np.ones(n), chain.pi))
    return (np.diag(Z)[None, :] - Z) / chain.pi[None, :]


def stop_cost_oracle(chain):
    """``E_s[tau] = max_j (H(s, j) - H(pi, j))`` for optimal rules."""
    H = fundamental_hitting(chain)
    return (H - (chain.pi @ H)[None, :]).max(axis=1)


def linear_mixing_time(chain, cap=10**5):
    M = np.eye(chain.n)
    for t in range(cap):
        if 0.5 * np.abs(M - chain.pi).sum(axis=1).max() <= 0.25 + 1e-12:
            return t
        M = M @ chain.P
    raise AssertionError("no mixing within cap")


def test_tv_distance():
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25)
    with pytest.raises(ChainError):
        tv_distance([0.5, 0.6], [0.5, 0.5])


def test_two_state_mixes_in_one_step(c2):
    assert mixing_time(c2) == 1
    assert stop_time(c2) == pytest.approx(1.0)


def test_p4_tv_profile(p4):
    np.testing.assert_allclose(tv_profile(p4, 3), [5 / 6, 1 / 2, 3 / 8, 9 / 32])
    assert mixing_time(p4) == 4


@pytest.mark.parametrize("name", sorted(corpus()))
def test_mixing_time_matches_linear_scan(name):
    ch = corpus()[name]
    assert mixing_time(ch) == linear_mixing_time(ch)


def test_mixing_budget():
    with pytest.raises(BudgetExceededError):
        mixing_time(cycle(16), max_steps=8)


def test_periodic_chain_never_mixes():
    ch = from_matrix([0, 1], [[0, 1], [1, 0]], allow_nonlazy=True)
    with pytest.raises(BudgetExceededError):
        mixing_time(ch, max_steps=64)


def test_p4_exit_frequencies(p4):
    e = exit_frequencies(p4, 3)
    np.testing.assert_allclose(e.y, [0, 2, 8, 18], atol=1e-12)
    assert e.halting_state == 0
    assert e.cost == pytest.approx(19 / 3)


def test_two_state_exit_frequencies(c2):
    e = exit_frequencies(c2, 0)
    np.testing.assert_allclose(e.y, [2, 0], atol=1e-12)
    assert e.cost == pytest.approx(1.0)


@pytest.mark.parametrize("name", sorted(corpus()))
def test_stop_costs_match_hitting_formula(name):
    ch = corpus()[name]
    np.testing.assert_allclose(stop_costs(ch), stop_cost_oracle(ch), rtol=1e-9, atol=1e-9)


def test_all_exit_frequencies_matches_single_solves(rng):
    ch = random_graph(9, rng, extra=4)
    Y = all_exit_frequencies(ch)
    for s in range(ch.n):
        np.testing.assert_allclose(Y[:, s], exit_frequencies(ch, s).y, atol=1e-9)
        assert Y[:, s].min() == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2**32 - 1))
def test_exit_flow_identity(n, seed):
    rng = np.random.default_rng(seed)
    ch = random_graph(n, rng, extra=3)
    s = int(rng.integers(n))
    y = exit_frequencies(ch, s).y
    for _ in range(10):
        Z = [v for v in range(n) if v != s and rng.random() < 0.5]
        if Z:
            assert exit_flow_residual(ch, y, Z) < 1e-9


def test_p4_hitting(p4):
    assert hitting_time(p4, 1, {2}) == pytest.approx(6.0)
    h = hitting_times(p4, {3})
    np.testing.assert_allclose(h, fundamental_hitting(p4)[:, 3], atol=1e-9)
    with pytest.raises(ChainError):
        hitting_times(p4, set())


def test_hitting_accepts_mask(p4):
    m = np.array([False, False, True, True])
    np.testing.assert_allclose(hitting_times(p4, m), hitting_times(p4, {2, 3}))


def test_worst_case_hitting_p4(p4):
    w = worst_case_hitting(p4, 0.5)
    assert w.value == pytest.approx(8.0)
    assert w.start == 3 and w.target == {0, 1}


def test_worst_case_hitting_modes_agree(rng):
    ch = random_graph(8, rng, extra=3)
    full = worst_case_hitting(ch, 0.3)
    conn = worst_case_hitting(ch, 0.3, connected_only=True)
    # connected targets are a subfamily, so they can only do worse for the walker
    assert conn.value <= full.value + 1e-12


def test_worst_case_hitting_cap():
    with pytest.raises(BudgetExceededError):
        worst_case_hitting(path(30), 0.5)


def test_mixing_report_serialises(p4):
    rep = mixing_report(p4)
    d = rep.to_dict(p4.states)
    assert d["t_mix"] == 4
    assert d["t_stop"] == pytest.approx(19 / 3)
    assert d["per_start"]["halting_state"][3] == 1


def test_star_stop_time_grows_linearly():
    a, b = stop_time(star2(8)), stop_time(star2(16))
    assert 1.7 < b / a < 2.1
