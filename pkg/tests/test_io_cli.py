import json

import numpy as np
import pytest

from mixbound import io as mio
from mixbound.chain import ChainError
from mixbound.cli import main
from mixbound.families import path, star2

P4_JSON = {"states": [1, 2, 3, 4], "conductances": [[1, 2, 1], [2, 3, 1], [3, 4, 1]]}


@pytest.fixture
def p4_file(tmp_path):
    f = tmp_path / "p4.json"
    f.write_text(json.dumps(P4_JSON))
    return f


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# -- readers and writers ---------------------------------------------------------------

def test_chain_roundtrip(tmp_path):
    for ch in (path(5, [1, 2, 3, 4]), star2(3, perturb_seed=2)):
        f = tmp_path / "c.json"
        mio.save_chain(ch, f)
        back = mio.load_chain(f)
        assert back.states == ch.states
        np.testing.assert_allclose(back.P, ch.P)


def test_matrix_format(tmp_path):
    f = tmp_path / "m.json"
    f.write_text(json.dumps({"states": ["a", "b"], "matrix": [[0.5, 0.5], [0.5, 0.5]]}))
    ch = mio.load_chain(f)
    assert ch.states == ("a", "b")
    assert mio.chain_to_dict(ch)["matrix"] == [[0.5, 0.5], [0.5, 0.5]]


def test_tuple_labels_survive(tmp_path):
    f = tmp_path / "t.json"
    f.write_text(json.dumps({"states": [[0, 0], [0, 1]], "conductances": [[[0, 0], [0, 1], 1]]}))
    ch = mio.load_chain(f)
    assert ch.states[0] == (0, 0)
    assert mio.resolve(ch, [0, 1]) == 1


def test_string_fallback(p4_file):
    ch = mio.load_chain(p4_file)
    assert mio.resolve(ch, "3") == 2
    with pytest.raises(ChainError, match="unknown state"):
        mio.resolve(ch, 9)


def test_bad_json_reports_position(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{"states": [1, 2,\n  ]}')
    with pytest.raises(ChainError, match=r"bad\.json:2:"):
        mio.load_chain(f)


@pytest.mark.parametrize("data", [
    [1, 2],
    {"states": [1, 2]},
    {"states": [1, 2], "conductances": [[1, 2]]},
    {"states": [1, 2], "conductances": [[1, 2, 1]], "lazy": False},
])
def test_malformed_chains(tmp_path, data):
    f = tmp_path / "c.json"
    f.write_text(json.dumps(data))
    with pytest.raises(ChainError):
        mio.load_chain(f)


def test_write_json_drops_non_finite():
    assert json.loads(mio.write_json({"a": float("inf"), "b": [float("nan"), 1.0]})) == {
        "a": None, "b": [None, 1.0]}


def test_sequence_formats(tmp_path, p4_file):
    ch = mio.load_chain(p4_file)
    f = tmp_path / "s.json"
    f.write_text(json.dumps([[1], [1, 2]]))
    assert mio.load_sequence(f, ch) == ([frozenset({0}), frozenset({0, 1})], None)
    f.write_text(json.dumps({"sets": [[4]], "theta": 0.5}))
    assert mio.load_sequence(f, ch) == ([frozenset({3})], 0.5)


def test_correspondence_roundtrip(tmp_path):
    G = T = path(4)
    pairs = [(i, i) for i in range(4)]
    f = tmp_path / "c.json"
    mio.write_json(mio.correspondence_to_dict(G, T, pairs), f)
    assert mio.load_correspondence(f, G, T) == pairs
    f.write_text("[]")
    with pytest.raises(ChainError):
        mio.load_correspondence(f, G, T)


# -- command line --------------------------------------------------------------------------

def test_analyze_p4(capsys, p4_file):
    code, out, _ = run(capsys, "analyze", p4_file)
    assert code == 0
    d = json.loads(out)
    rows = {r["bound"]: r for r in d["bounds"]}
    assert rows["t_mix"]["value"] == 4
    assert rows["t_stop"]["value"] == pytest.approx(19 / 3)
    assert rows["greedy(theta=0.5)"]["value"] == pytest.approx(38 / 3)
    assert all(r["verdict"] == "PASS" for r in d["bounds"] if "verdict" in r)
    assert "preconditions" not in d


def test_analyze_rejects_nonlazy(capsys, tmp_path):
    f = tmp_path / "n.json"
    f.write_text(json.dumps({"states": [0, 1], "matrix": [[0, 1], [1, 0]]}))
    code, _, err = run(capsys, "analyze", f)
    assert code == 2 and "mixbound: error" in err
    code, out, _ = run(capsys, "analyze", f, "--allow-nonlazy")
    d = json.loads(out)
    assert "error" in d["mixing"] and "preconditions" in d


def test_budget_states(capsys, p4_file):
    code, _, err = run(capsys, "analyze", p4_file, "--budget-states", "3")
    assert code == 2 and "budget" in err


def test_bottleneck_with_sequence(capsys, tmp_path, p4_file):
    f = tmp_path / "s.json"
    f.write_text(json.dumps({"sets": [[2], [2, 3]], "theta": 1}))
    code, out, _ = run(capsys, "bottleneck", p4_file, "--sequence", f)
    d = json.loads(out)
    assert code == 1 and d["supplied"]["valid"] is False
    f.write_text(json.dumps([[1], [1, 2]]))
    code, out, _ = run(capsys, "bottleneck", p4_file, "--sequence", f, "--theta", "1/2")
    assert code == 0 and json.loads(out)["supplied"]["valid"]


def test_game_then_replay(capsys, tmp_path, p4_file):
    t = tmp_path / "t.json"
    code, _, _ = run(capsys, "game", p4_file, "--out", t)
    assert code == 0
    saved = json.loads(t.read_text())
    assert saved["valid"] and saved["bound_holds"]
    code, out, _ = run(capsys, "verify-transcript", p4_file, t)
    d = json.loads(out)
    assert code == 0 and d["valid"] and d["complete"]
    assert d["stop_cost"] == pytest.approx(19 / 3)
    code, out, _ = run(capsys, "game", p4_file, "--replay", t)
    assert code == 0


def test_tampered_transcript_fails(capsys, tmp_path, p4_file):
    t = tmp_path / "t.json"
    run(capsys, "game", p4_file, "--out", t)
    d = json.loads(t.read_text())
    d["rounds"][1]["D"] = [1, 2, 3, 4]
    t.write_text(json.dumps(d))
    code, out, _ = run(capsys, "verify-transcript", p4_file, t)
    assert code == 1 and not json.loads(out)["valid"]


def test_ri_dasher_needs_radius(capsys, p4_file):
    code, _, err = run(capsys, "game", p4_file, "--dasher", "ri")
    assert code == 2 and "--r" in err


def test_examples_and_ri_compare(capsys, tmp_path):
    code, out, _ = run(capsys, "examples", "star2", "--param", "n=4", "--out", tmp_path)
    assert code == 0
    files = json.loads(out)["files"]
    assert len(files) == 4
    g, t, c, _ = (tmp_path / n for n in ("star2.json", "star2_tree.json",
                                         "star2_correspondence.json", "star2_sequence.json"))
    code, out, _ = run(capsys, "ri-compare", g, t, c)
    d = json.loads(out)
    assert d["stretch"] == 3.0 and d["r"] == 3
    assert d["at_sets"]["ok"]


def test_scaling_csv(capsys, tmp_path):
    code, out, err = run(capsys, "scaling", "cycle", "--grid", "4,6,8,10", "--metrics", "t_mix,t_stop")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "family,size,states,t_mix,t_stop,budget"
    assert len(lines) == 5
    assert json.loads(err)["fits"]["t_mix"]["slope"] > 1.5


def test_unknown_family_exits_2(capsys):
    code, _, err = run(capsys, "scaling", "torus", "--grid", "3,4")
    assert code == 2
