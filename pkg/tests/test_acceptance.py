"""End-to-end acceptance checks.  Each test prints one ``ACCEPTANCE n: PASS``
or ``FAIL`` line and then asserts the same verdict."""
import itertools
import math
import time

import networkx as nx
import numpy as np
import pytest

from mixbound.bottleneck import greedy_sequence, max_score, tree_cut_hitting, verify_sequence
from mixbound.chain import build_chain, flow
from mixbound.families import dingperes, path, star2, star2_correspondence, two_point
from mixbound.game import (
    CrawlerGreedy,
    DasherHull,
    DasherRI,
    GameParams,
    bound_holds,
    is_beta_adjustment,
    play_game,
)
from mixbound.metrics import (
    all_exit_frequencies,
    exit_flow_residual,
    hitting_time,
    stop_costs,
    stop_time,
)
from mixbound.rough_isometry import kac_check, transcript_geometry
from mixbound.scaling import run_scaling
from mixbound.topology import components

from conftest import corpus, ladder


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def corpus_trees():
    return {k: ch for k, ch in corpus().items() if ch.is_tree}


def kac_partitions(chain, c):
    """Every split of the components of ``V - {c}`` into ``L`` and ``R``, up to
    swapping leaves of ``c`` that carry equal conductance (an automorphism)."""
    comps = components(chain, set(range(chain.n)) - {c})
    groups, unique = {}, []
    for comp in comps:
        if len(comp) == 1:
            (v,) = comp
            key = round(chain.conductances[tuple(sorted((c, v)))], 12)
            groups.setdefault(key, []).append(comp)
        else:
            unique.append(comp)
    choices = [range(len(g) + 1) for g in groups.values()]
    full = frozenset(range(chain.n))
    for counts in itertools.product(*choices):
        base = frozenset().union(*(x for g, k in zip(groups.values(), counts) for x in g[:k]))
        for mask in range(2 ** len(unique)):
            L = base.union(*(u for i, u in enumerate(unique) if mask >> i & 1))
            yield L, full - L - {c}


# -- 1 ------------------------------------------------------------------------------------

def test_exact_identities(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    swap = exit_res = kac = tree_hit = 0.0
    counts = dict(swap=0, exit=0, kac=0, tree=0)
    for ch in corpus().values():
        for _ in range(1000):
            A = rng.random(ch.n) < 0.5
            swap = max(swap, abs(flow(ch, A, ~A) - flow(ch, ~A, A)))
            counts["swap"] += 1
        Y = all_exit_frequencies(ch)
        for s in range(ch.n):
            for _ in range(200):
                Z = [v for v in range(ch.n) if v != s and rng.random() < 0.5]
                if Z:
                    exit_res = max(exit_res, exit_flow_residual(ch, Y[:, s], Z))
                    counts["exit"] += 1
    for ch in corpus_trees().values():
        for c in range(ch.n):
            for L, R in kac_partitions(ch, c):
                kac = max(kac, kac_check(ch, L, {c}, R))
                counts["kac"] += 1
        for u, v in ch.edges:
            for a, b in ((u, v), (v, u)):
                tree_hit = max(tree_hit, abs(tree_cut_hitting(ch, a, b) - hitting_time(ch, a, {b})))
                counts["tree"] += 1
    elapsed = time.perf_counter() - t0
    ok = swap < 1e-12 and exit_res < 1e-9 and kac < 1e-9 and tree_hit < 1e-9 and elapsed < 10
    verdict(capsys, 1, ok, f"flow swap {swap:.1e}, exit flow {exit_res:.1e}, Kac {kac:.1e}, "
                           f"tree hitting {tree_hit:.1e}, checks {counts}, {elapsed:.1f}s")


# -- 2 ------------------------------------------------------------------------------------

def test_greedy_sequence_bound(capsys):
    failures, checked = [], 0
    for name, ch in corpus().items():
        Y = all_exit_frequencies(ch)
        costs = ch.pi @ Y
        for s in range(ch.n):
            for theta in (0.25, 0.5, 0.75):
                seq = greedy_sequence(ch, s, theta, Y[:, s])
                checked += 1
                if not (costs[s] < seq.score / (1 - theta) and verify_sequence(ch, seq.sets, theta)):
                    failures.append((name, s, theta))
    p4 = path(4)
    cost = stop_costs(p4)[3]
    bound = greedy_sequence(p4, 3, 0.5).score / 0.5
    anchor = math.isclose(cost, 19 / 3) and math.isclose(bound, 38 / 3) and cost < bound
    verdict(capsys, 2, not failures and anchor,
            f"{checked} (chain, start, theta) cases, failures {failures}; "
            f"P4 from state 4 at theta 1/2: {cost:.4f} < {bound:.4f}")


# -- 3 and 4 ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def hull_games():
    games = []
    for name, ch in corpus().items():
        for alpha in (0.5, 1 / 3):
            for s in range(ch.n):
                params = GameParams(s, alpha, 0.5, 0.5)
                t = play_game(ch, params, CrawlerGreedy(ch, params), DasherHull(ch, params),
                              mode="record")
                games.append((name, ch, params, t))
    return games


def test_game_bound(capsys, hull_games):
    failures = []
    certified = 0
    for name, ch, params, t in hull_games:
        certified += t.provenance == "certified"
        if not (t.valid and t.complete and bound_holds(ch, t)):
            failures.append((name, params.s, params.alpha))
    verdict(capsys, 3, not failures,
            f"{len(hull_games)} games, every move validated; {certified} used the "
            f"certified adjustment check (complement above 22 states); failures {failures}")


def test_hull_transcripts_are_bottleneck_sequences(capsys, hull_games):
    failures = []
    for name, ch, params, t in hull_games:
        if t.sequence and not verify_sequence(ch, t.sequence, 1 - params.gamma):
            failures.append((name, params.s, params.alpha))
    verdict(capsys, 4, not failures, f"{len(hull_games)} transcripts, failures {failures}")


# -- 5 ------------------------------------------------------------------------------------

@pytest.mark.slow
def test_scaling_laws(capsys):
    t0 = time.perf_counter()
    grid = [8, 16, 32, 64]
    star = run_scaling("STAR2", grid, ["t_mix", "greedy", "fr"])
    cyc = run_scaling("CYCLE", grid, ["t_mix"])
    prod = run_scaling("PRODCHAIN", [3, 4, 5, 6], ["canonical", "game_bound"], params={"k": 2})
    slopes = {
        "STAR2 t_mix": (star.fits["t_mix"][0], 0.75, 1.25),
        "CYCLE t_mix": (cyc.fits["t_mix"][0], 1.7, 2.3),
        "STAR2 fr": (star.fits["fr"][0], 1.7, 2.3),
        "STAR2 greedy": (star.fits["greedy"][0], 0.75, 1.25),
        "PRODCHAIN canonical": (prod.fits["canonical"][0], 3.5, 4.5),
        "PRODCHAIN game bound": (prod.fits["game_bound"][0], 2.5, 3.5),
    }
    elapsed = time.perf_counter() - t0
    ok = all(lo <= v <= hi for v, lo, hi in slopes.values()) and elapsed < 300
    detail = ", ".join(f"{k} {v:.2f} in [{lo}, {hi}]" for k, (v, lo, hi) in slopes.items())
    verdict(capsys, 5, ok, f"{detail}; {elapsed:.0f}s")


# -- 6 ------------------------------------------------------------------------------------

def test_tree_robustness(capsys):
    ratios = []
    for n in (8, 16, 32, 64):
        ratios.append(stop_time(star2(n, perturb_seed=n)) / stop_time(star2(n)))
    spread = max(ratios) / min(ratios)
    verdict(capsys, 6, spread <= 3,
            f"perturbed/unit t_stop ratios {[round(r, 3) for r in ratios]}, spread {spread:.3f} <= 3")


# -- 7 ------------------------------------------------------------------------------------

def test_non_robustness_trend(capsys):
    ratios = []
    for K in (4, 6, 8):
        size = K * 2**K
        unit = stop_time(dingperes(K, seed=0, expander_size=size))
        doubled = stop_time(dingperes(K, seed=0, left_weight=2.0, expander_size=size))
        ratios.append(unit / doubled)
    ok = all(a < b for a, b in zip(ratios, ratios[1:]))
    verdict(capsys, 7, ok, f"unit/doubled t_stop ratios at K = 4, 6, 8: "
                           f"{[round(r, 4) for r in ratios]} (expander K 2^K states)")


# -- 8 ------------------------------------------------------------------------------------

def test_tree_mode_matches_brute_force(capsys):
    rng = np.random.default_rng(8)
    worst, count = 0.0, 0
    for n in range(2, 13):
        for g in nx.nonisomorphic_trees(n):
            for weights in (np.ones(n - 1), rng.uniform(0.5, 2.0, n - 1)):
                ch = build_chain([(u, v, float(c)) for (u, v), c in zip(g.edges, weights)],
                                 states=list(range(n)))
                a = max_score(ch, 1.0, mode="tree").score
                b = max_score(ch, 1.0, mode="brute-force").score
                worst = max(worst, abs(a - b) / b)
                count += 1
    verdict(capsys, 8, worst <= 1e-12,
            f"{count} trees (every unlabelled tree on 2..12 states, unit and random "
            f"conductances), max relative gap {worst:.1e}")


# -- 9 ------------------------------------------------------------------------------------

def ri_cases():
    for n in (4, 8, 16):
        G = star2(n)
        yield f"STAR2({n}) vs edge, r=3", G, two_point(), star2_correspondence(G), 3
    P = path(40)
    yield "path vs itself, r=1", P, P, [(i, i) for i in range(40)], 1
    G, T, pairs = ladder(30)
    yield "ladder vs path, r=2", G, T, pairs, 2


def test_geometry_on_ri_transcripts(capsys):
    results = {}
    for name, G, T, pairs, r in ri_cases():
        s = int(np.argmax(stop_costs(G)))
        params = GameParams(s, 0.5, 0.5, 0.5)
        t = play_game(G, params, CrawlerGreedy(G, params), DasherRI(G, params, r), mode="record")
        geo = transcript_geometry(G, T, pairs, r, t)
        results[name] = (t.complete and geo.ok, geo.growth_checked, geo.monotone_checked)
    ok = all(v[0] for v in results.values())
    detail = "; ".join(f"{k}: {'ok' if v[0] else 'FAILED'} ({v[1]} growth, {v[2]} index checks)"
                       for k, v in results.items())
    verdict(capsys, 9, ok, detail)


# -- 10 -----------------------------------------------------------------------------------

def test_adjustment_counterexample(capsys):
    p4 = path(4)
    A, B = {1}, {1, 2}
    witnesses = {beta: is_beta_adjustment(p4, A, B, beta) for beta in (1.0, 0.5, 0.25, 0.1)}
    rejected = all(not r.holds and r.witness == {0} for r in witnesses.values())
    out = ~p4.mask(B)
    empty_ok = flow(p4, out, p4.mask(A)) >= 0.5 * flow(p4, out, p4.mask(B)) - 1e-15
    verdict(capsys, 10, rejected and empty_ok,
            "A = {2}, B = {2, 3} on P4: witness S = {1} at beta in {1, 1/2, 1/4, 1/10}; "
            f"extension by the empty set passes at beta = 1/2: {empty_ok}")
