"""Command-line front end.  Every subcommand prints JSON (or CSV for
``scaling``) to stdout, or writes it to ``--out``."""
from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io as mio
from .bottleneck import (
    fr_profile_bound,
    greedy_sequence,
    max_score,
    tree_lower_bound,
    verify_sequence,
)
from .chain import BudgetExceededError, ChainError, NumericalError, phi, validate_chain
from .families import FAMILIES, ExampleSpec, canonical_bottleneck, generate
from .game import (
    CrawlerFill,
    CrawlerGreedy,
    DasherHull,
    DasherRI,
    GameParams,
    bound_holds,
    play_game,
    replay,
)
from .metrics import all_exit_frequencies, hitting_times, mixing_report
from .rough_isometry import build_at_sets, correspondence_stretch, robustness_compare
from .scaling import CSV_HELP, METRICS, run_scaling


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _fractions(text: str) -> list[float]:
    return [_fraction(t) for t in text.split(",") if t]


def _params(items) -> dict:
    out = {}
    for item in items or []:
        key, _, value = item.partition("=")
        if not value:
            raise ChainError(f"--param expects key=value, got {item!r}")
        out[key] = int(value) if value.lstrip("-").isdigit() else float(value)
    return out


def _emit(args, obj) -> None:
    text = mio.write_json(obj)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args, path):
    chain = mio.load_chain(path, allow_nonlazy=args.allow_nonlazy)
    if args.budget_states is not None and chain.n > args.budget_states:
        raise BudgetExceededError(f"{path}: {chain.n} states exceed --budget-states {args.budget_states}")
    return chain


def _start(chain, label, Y):
    if label is None:
        return int(np.argmax(chain.pi @ Y))
    return mio.resolve(chain, label)


# -- subcommands ------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    chain = _load(args, args.chain)
    report = validate_chain(chain)
    Y = all_exit_frequencies(chain)
    t_stop = float((chain.pi @ Y).max())
    try:
        mix = mixing_report(chain)
        mixing = mix.to_dict(chain.states)
        t_mix = mix.t_mix
    except (BudgetExceededError, NumericalError) as exc:
        mixing, t_mix = {"error": str(exc)}, None
    s = _start(chain, args.start, Y)
    cost = float(chain.pi @ Y[:, s])
    rows = [
        {"bound": "t_mix", "value": t_mix},
        {"bound": "t_stop", "value": t_stop},
    ]
    ok = True
    for theta in args.theta:
        seq = greedy_sequence(chain, s, theta, Y[:, s])
        b = seq.score / (1 - theta)
        holds = cost < b
        ok &= holds
        rows.append({"bound": f"greedy(theta={theta:g})", "score": seq.score, "value": b,
                     "stop_cost": cost, "verdict": "PASS" if holds else "FAIL"})
    params = GameParams(s, args.alpha, args.beta, args.gamma)
    t = play_game(chain, params, CrawlerGreedy(chain, params, Y[:, s]), DasherHull(chain, params),
                  mode="record")
    holds = bound_holds(chain, t)
    ok &= holds and t.valid
    rows.append({"bound": "game", "value": t.bound(chain), "score": t.score(chain),
                 "stop_cost": cost, "moves_valid": t.valid, "provenance": t.provenance,
                 "verdict": "PASS" if holds and t.valid else "FAIL"})
    try:
        _, fr = fr_profile_bound(chain)
        rows.append({"bound": "fr_profile", "value": fr, "t_mix": t_mix})
    except BudgetExceededError as exc:
        rows.append({"bound": "fr_profile", "value": None, "note": str(exc)})
    if chain.is_tree and chain.n >= 2:
        best = max_score(chain, 1.0, mode="tree")
        sets = best.sequence.sets
        lb = tree_lower_bound(chain, sets)
        # each half is a sum of cut hitting times along one exit path
        checks = []
        if lb.split:
            start = lb.cut_edges[0][0]
            target = frozenset(range(chain.n)) - sets[lb.split - 1]
            checks.append((lb.forward, hitting_times(chain, target)[start]))
        if lb.split < len(sets):
            start = lb.cut_edges[-1][1]
            checks.append((lb.backward, hitting_times(chain, sets[lb.split])[start]))
        holds = all(a <= b * (1 + 1e-9) for a, b in checks)
        ok &= holds
        rows.append({"bound": "tree_lower", "value": lb.total, "forward": lb.forward,
                     "backward": lb.backward, "max_score": best.score,
                     "exact_hitting": [b for _, b in checks], "verdict": "PASS" if holds else "FAIL"})
    out = {"chain": report.to_dict(), "start": chain.states[s], "mixing": mixing,
           "bounds": rows}
    if not all(report.to_dict()[k] for k in ("lazy", "irreducible", "reversible")):
        out["preconditions"] = "unmet: results outside the bounds' hypotheses"
    _emit(args, out)
    return 0 if ok else 1


def cmd_bottleneck(args) -> int:
    chain = _load(args, args.chain)
    Y = all_exit_frequencies(chain)
    s = _start(chain, args.start, Y)
    cost = float(chain.pi @ Y[:, s])
    out = {"start": chain.states[s], "stop_cost": cost, "rows": []}
    ok = True
    for theta in args.theta:
        seq = greedy_sequence(chain, s, theta, Y[:, s])
        b = seq.score / (1 - theta)
        ok &= cost < b
        out["rows"].append({**seq.to_dict(chain), "bound": b,
                            "verdict": "PASS" if cost < b else "FAIL"})
    if args.sequence:
        sets, theta = mio.load_sequence(args.sequence, chain)
        theta = args.theta[0] if theta is None else theta
        rep = verify_sequence(chain, sets, theta)
        ok &= rep.valid
        out["supplied"] = {"theta": theta, "valid": rep.valid, "index": rep.index,
                           "condition": rep.condition}
    _emit(args, out)
    return 0 if ok else 1


def _dasher(args, chain, params):
    if args.dasher == "ri":
        if args.r is None:
            raise ChainError("--dasher ri needs --r")
        return DasherRI(chain, params, args.r)
    return DasherHull(chain, params)


def cmd_game(args) -> int:
    chain = _load(args, args.chain)
    if args.replay:
        return _verify(args, chain, args.replay)
    Y = all_exit_frequencies(chain)
    s = _start(chain, args.start, Y)
    params = GameParams(s, args.alpha, args.beta, args.gamma)
    crawler = CrawlerGreedy(chain, params, Y[:, s]) if args.crawler == "greedy" else CrawlerFill(chain, params)
    t = play_game(chain, params, crawler, _dasher(args, chain, params), mode="record")
    out = t.to_dict(chain)
    if t.stop_cost is not None:
        out["bound_holds"] = bound_holds(chain, t)
    _emit(args, out)
    return 0 if t.valid and out.get("bound_holds", True) else 1


def _verify(args, chain, path) -> int:
    params, history = mio.load_transcript(path, chain)
    reports = replay(chain, params, history)
    seq = [D for _, D in history[1:] if len(D) < chain.n]
    score = float(sum(1 / phi(chain, D) for D in seq))
    cost = float(chain.pi @ all_exit_frequencies(chain)[:, params.s])
    valid = all(r.valid for r in reports)
    out = {"valid": valid, "moves": [r.to_dict() for r in reports], "score": score,
           "bound": params.bound(score), "stop_cost": cost,
           "bound_holds": cost <= params.bound(score) * (1 + 1e-12),
           "complete": bool(history) and len(history[-1][1]) == chain.n}
    _emit(args, out)
    return 0 if valid and out["bound_holds"] else 1


def cmd_verify(args) -> int:
    return _verify(args, _load(args, args.chain), args.transcript)


def cmd_ri_compare(args) -> int:
    X = _load(args, args.graph)
    Y = _load(args, args.tree)
    pairs = mio.load_correspondence(args.correspondence, X, Y)
    st = correspondence_stretch(X, Y, pairs)
    r = args.r if args.r is not None else st.r
    at = build_at_sets(X, Y, pairs, r, seed=args.seed)
    s = None if args.start is None else mio.resolve(X, args.start)
    rep = robustness_compare(X, Y, pairs, r, args.alpha, args.beta, args.gamma, s)
    (t1, g1), (t2, g2) = st.worst
    out = {
        "stretch": st.stretch, "r": r,
        "worst": [[Y.states[t1], X.states[g1]], [Y.states[t2], X.states[g2]]],
        "at_sets": {"ok": at.ok, "connected": at.connected,
                    "max_internal_diameter": at.max_internal_diameter,
                    "diameter_bound": at.diameter_bound,
                    "separation_checked": at.separation_checked,
                    "separation_failures": len(at.separation_failures),
                    "disjoint_checked": at.disjoint_checked,
                    "disjoint_failures": len(at.disjoint_failures)},
        **rep.to_dict(),
    }
    _emit(args, out)
    return 0 if at.ok and rep.geometry.ok and st.stretch <= r else 1


def cmd_examples(args) -> int:
    ex = generate(ExampleSpec(args.family.upper(), _params(args.param), args.seed))
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = args.family.lower()
    written = [out_dir / f"{stem}.json"]
    mio.save_chain(ex.chain, written[0])
    if ex.tree is not None:
        written.append(out_dir / f"{stem}_tree.json")
        mio.save_chain(ex.tree, written[-1])
    if ex.correspondence is not None:
        written.append(out_dir / f"{stem}_correspondence.json")
        mio.write_json(mio.correspondence_to_dict(ex.chain, ex.tree, ex.correspondence), written[-1])
    try:
        sets = canonical_bottleneck(ex)
    except ChainError:
        sets = None
    if sets is not None:
        written.append(out_dir / f"{stem}_sequence.json")
        mio.write_json({"sets": [ex.chain.labels(S) for S in sets]}, written[-1])
    report = validate_chain(ex.chain).to_dict()
    report.update(states=ex.chain.n, max_degree=ex.chain.max_degree, files=[str(p) for p in written])
    sys.stdout.write(mio.write_json(report))
    return 0


def cmd_scaling(args) -> int:
    grid = [int(g) for g in args.grid.split(",") if g]
    metrics = [m for m in args.metrics.split(",") if m]
    run = run_scaling(args.family, grid, metrics, args.out, _params(args.param), args.seed,
                      args.budget_states)
    if not args.out:
        sys.stdout.write(run.to_csv())
    fits = {m: {"slope": a, "r2": b} for m, (a, b) in run.fits.items()}
    sys.stderr.write(mio.write_json({"fits": fits}))
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--theta", type=_fractions, default=[0.25, 0.5, 0.75],
                        help="comma-separated theta values (fractions allowed)")
    common.add_argument("--alpha", type=_fraction, default=0.5)
    common.add_argument("--beta", type=_fraction, default=0.5)
    common.add_argument("--gamma", type=_fraction, default=0.5)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget-states", type=int, default=None,
                        help="refuse chains with more states than this")
    common.add_argument("--allow-nonlazy", action="store_true",
                        help="accept matrices with p_vv != 1/2 (bound hypotheses then unmet)")
    common.add_argument("--out", default=None, help="output file (directory for 'examples')")
    common.add_argument("--start", default=None, help="start state label (default: worst start)")

    p = argparse.ArgumentParser(prog="mixbound", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="mixing quantities and bound table")
    a.add_argument("chain")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bottleneck", parents=[common], help="greedy sequences and verification")
    b.add_argument("chain")
    b.add_argument("--sequence", help="JSON sequence to verify")
    b.set_defaults(func=cmd_bottleneck)

    g = sub.add_parser("game", parents=[common], help="play (or --replay) a Crawler/Dasher game")
    g.add_argument("chain")
    g.add_argument("--crawler", choices=("greedy", "fill"), default="greedy")
    g.add_argument("--dasher", choices=("hull", "ri"), default="hull")
    g.add_argument("--r", type=int, default=None)
    g.add_argument("--replay", help="transcript JSON to re-validate instead of playing")
    g.set_defaults(func=cmd_game)

    r = sub.add_parser("ri-compare", parents=[common], help="graph versus tree comparison")
    r.add_argument("graph")
    r.add_argument("tree")
    r.add_argument("correspondence")
    r.add_argument("--r", type=int, default=None, help="default: ceiling of the stretch")
    r.set_defaults(func=cmd_ri_compare)

    e = sub.add_parser("examples", parents=[common], help="write an example chain and companions")
    e.add_argument("family", choices=[f.lower() for f in FAMILIES] + list(FAMILIES))
    e.add_argument("--param", action="append", help="key=value, repeatable")
    e.set_defaults(func=cmd_examples)

    s = sub.add_parser("scaling", parents=[common], help="scaling run to CSV",
                       epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("family")
    s.add_argument("--grid", required=True, help="comma-separated sizes, increasing")
    s.add_argument("--metrics", default="t_mix,t_stop", help=f"comma-separated from {','.join(METRICS)}")
    s.add_argument("--param", action="append", help="fixed family parameter key=value")
    s.set_defaults(func=cmd_scaling)

    v = sub.add_parser("verify-transcript", parents=[common], help="re-validate a saved game")
    v.add_argument("chain")
    v.add_argument("transcript")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ChainError, BudgetExceededError, NumericalError) as exc:
        sys.stderr.write(f"mixbound: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
