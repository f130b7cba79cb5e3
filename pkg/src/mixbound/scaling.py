"""Scaling experiments over a family's size grid, with log-log exponent fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bottleneck import fr_profile_bound, greedy_sequence, max_score, sequence_score
from .chain import BudgetExceededError, ChainError, NumericalError
from .families import ExampleSpec, canonical_bottleneck, generate
from .game import CrawlerGreedy, DasherBlocks, DasherHull, GameParams, play_game
from .metrics import all_exit_frequencies, mixing_time

SIZE_PARAM = {
    "STAR2": "n", "CYCLE": "n", "PATH": "n", "WPATH3": "n", "HAMCLIQUE": "n",
    "BINTREE": "height", "DINGPERES": "K", "PRODCHAIN": "n",
}
METRICS = ("t_mix", "t_stop", "greedy", "game_bound", "fr", "tree_max", "canonical")
BUDGET_MARK = "budget-exceeded"
FIT_POINTS = 4

CSV_HELP = """CSV columns: family, size, states, then one column per requested metric
(t_mix: TV mixing time; t_stop: worst-start optimal stopping cost;
greedy: greedy sequence score at theta = 1/2 from the worst start;
game_bound: game bound with greedy Crawler at alpha = beta = gamma = 1/2;
fr: conductance-profile bound; tree_max: best 1-bottleneck score on trees;
canonical: score of the family's canonical sequence), then 'budget' which
is 'budget-exceeded' when a cell was skipped or cut short."""


def fit_exponent(x, y, points: int = FIT_POINTS) -> tuple[float, float]:
    """Least-squares slope of ``log y`` on ``log x`` over the largest ``points``
    sizes; returns ``(slope, R^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(y) & (y > 0)
    x, y = x[keep], y[keep]
    order = np.argsort(x)[-points:]
    if len(order) < 2:
        raise ChainError("need at least two positive points to fit an exponent")
    res = stats.linregress(np.log(x[order]), np.log(y[order]))
    return float(res.slope), float(res.rvalue**2)


@dataclass(frozen=True)
class ScalingRun:
    family: str
    grid: tuple
    metrics: tuple
    rows: tuple
    fits: dict = field(default_factory=dict)

    def column(self, metric: str) -> list[float]:
        return [r[metric] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["family", "size", "states", *self.metrics, "budget"]
        w = csv.DictWriter(buf, cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


def _worst_start(chain):
    Y = all_exit_frequencies(chain)
    costs = chain.pi @ Y
    s = int(np.argmax(costs))
    return s, float(costs[s]), Y[:, s]


def _metric(name, example, cache):
    chain = example.chain
    if name == "t_mix":
        return float(mixing_time(chain))
    if "stop" not in cache:
        cache["stop"] = _worst_start(chain)
    s, cost, y = cache["stop"]
    if name == "t_stop":
        return cost
    if name == "greedy":
        return greedy_sequence(chain, s, 0.5, y).score
    if name == "game_bound":
        params = GameParams(s, 0.5, 0.5, 0.5)
        crawler = CrawlerGreedy(chain, params, y)
        if example.blocks is not None:
            dasher = DasherBlocks(chain, params, example.blocks)
        else:
            dasher = DasherHull(chain, params)
        return play_game(chain, params, crawler, dasher, mode="record").bound(chain)
    if name == "fr":
        return fr_profile_bound(chain)[1]
    if name == "tree_max":
        if not chain.is_tree:
            return math.nan
        return max_score(chain, 1.0, mode="tree").score
    if name == "canonical":
        try:
            sets = canonical_bottleneck(example)
        except ChainError:
            return math.nan
        return sequence_score(chain, sets, check=False)
    raise ChainError(f"unknown metric {name!r}")


def run_scaling(family: str, grid, metrics=("t_mix", "t_stop"), out=None,
                params: dict | None = None, seed: int = 0,
                budget_states: int | None = None) -> ScalingRun:
    """One CSV row per size; cells beyond ``budget_states`` or over an
    internal budget are left blank and the row is marked."""
    family = family.upper()
    if family not in SIZE_PARAM:
        raise ChainError(f"unknown family {family!r}")
    grid = tuple(int(g) for g in grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ChainError("grid must be strictly increasing")
    metrics = tuple(metrics)
    for m in metrics:
        if m not in METRICS:
            raise ChainError(f"unknown metric {m!r}; choose from {METRICS}")
    rows = []
    for size in grid:
        p = dict(params or {})
        p[SIZE_PARAM[family]] = size
        ex = generate(ExampleSpec(family, p, seed))
        row = {"family": family, "size": size, "states": ex.chain.n, "budget": ""}
        if budget_states is not None and ex.chain.n > budget_states:
            row.update({m: math.nan for m in metrics}, budget=BUDGET_MARK)
            rows.append(row)
            continue
        cache = {}
        for m in metrics:
            try:
                row[m] = _metric(m, ex, cache)
            except (BudgetExceededError, NumericalError):
                row[m] = math.nan
                row["budget"] = BUDGET_MARK
        rows.append(row)
    fits = {}
    for m in metrics:
        ys = [r[m] for r in rows]
        try:
            fits[m] = fit_exponent(grid, ys)
        except ChainError:
            fits[m] = (math.nan, math.nan)
    run = ScalingRun(family, grid, metrics, tuple(rows), fits)
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(run.to_csv())
    return run
