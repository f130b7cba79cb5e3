"""JSON readers and writers for chains, sequences, correspondences and
game transcripts.  Sets are stored as lists of state labels."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .chain import ChainError, ChainSpec, build_chain, from_matrix
from .game import GameParams


def _label(x):
    return tuple(_label(v) for v in x) if isinstance(x, list) else x


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    return x


def resolve(chain: ChainSpec, label) -> int:
    """Index of ``label``, falling back to string comparison so that
    ``"3"`` finds the integer state ``3``."""
    label = _label(label)
    if label in chain.index:
        return chain.index[label]
    by_str = {str(s): i for i, s in enumerate(chain.states)}
    if str(label) in by_str:
        return by_str[str(label)]
    raise ChainError(f"unknown state {label!r}")


def resolve_set(chain: ChainSpec, labels) -> frozenset:
    return frozenset(resolve(chain, x) for x in labels)


def read_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ChainError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChainError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _finite(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def write_json(obj, path=None) -> str:
    """Indented JSON; NaN and infinities become ``null``."""
    text = json.dumps(_finite(obj), indent=2, default=_jsonable) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# -- chains -----------------------------------------------------------------------

def chain_to_dict(chain: ChainSpec) -> dict:
    states = [_jsonable(s) for s in chain.states]
    if chain.conductances is not None:
        cond = [[states[i], states[j], c] for (i, j), c in sorted(chain.conductances.items())]
        return {"states": states, "conductances": cond, "lazy": True}
    return {"states": states, "matrix": chain.P.tolist()}


def chain_from_dict(data, allow_nonlazy: bool = False, where: str = "chain") -> ChainSpec:
    if not isinstance(data, dict) or "states" not in data:
        raise ChainError(f"{where}: expected an object with a 'states' list")
    states = [_label(s) for s in data["states"]]
    if "matrix" in data:
        return from_matrix(states, data["matrix"], allow_nonlazy=allow_nonlazy)
    if "conductances" in data:
        if data.get("lazy", True) is not True:
            raise ChainError(f"{where}: conductance chains are always lazy")
        edges = []
        for k, row in enumerate(data["conductances"]):
            if not isinstance(row, list) or len(row) != 3:
                raise ChainError(f"{where}: conductances[{k}] must be [u, v, c]")
            edges.append((_label(row[0]), _label(row[1]), row[2]))
        return build_chain(edges, states=states)
    raise ChainError(f"{where}: needs 'matrix' or 'conductances'")


def load_chain(path, allow_nonlazy: bool = False) -> ChainSpec:
    return chain_from_dict(read_json(path), allow_nonlazy, str(path))


def save_chain(chain: ChainSpec, path) -> None:
    write_json(chain_to_dict(chain), path)


# -- sequences and correspondences ------------------------------------------------------

def load_sequence(path, chain: ChainSpec) -> tuple[list[frozenset], float | None]:
    """Sets and optional ``theta`` from ``[[...], ...]`` or ``{"sets": ..., "theta": ...}``."""
    data = read_json(path)
    theta = None
    if isinstance(data, dict):
        theta = data.get("theta")
        data = data.get("sets")
    if not isinstance(data, list):
        raise ChainError(f"{path}: expected a list of state lists")
    return [resolve_set(chain, S) for S in data], theta


def load_correspondence(path, G: ChainSpec, T: ChainSpec) -> list[tuple[int, int]]:
    """``{"pairs": [[t, g], ...]}`` with tree label first."""
    data = read_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("pairs"), list):
        raise ChainError(f"{path}: expected {{'pairs': [[t, g], ...]}}")
    return [(resolve(T, t), resolve(G, g)) for t, g in data["pairs"]]


def correspondence_to_dict(G: ChainSpec, T: ChainSpec, pairs) -> dict:
    return {"pairs": [[_jsonable(T.states[t]), _jsonable(G.states[g])] for t, g in pairs]}


# -- transcripts ------------------------------------------------------------------------

def load_transcript(path, chain: ChainSpec) -> tuple[GameParams, list]:
    """Parameters and ``(C_i, D_i)`` history of a saved game."""
    data = read_json(path)
    try:
        p = data["params"]
        params = GameParams(resolve(chain, p["s"]), p["alpha"], p["beta"], p["gamma"])
        history = [(resolve_set(chain, r["C"]), resolve_set(chain, r["D"])) for r in data["rounds"]]
    except (KeyError, TypeError) as exc:
        raise ChainError(f"{path}: malformed transcript ({exc})") from exc
    return params, history
