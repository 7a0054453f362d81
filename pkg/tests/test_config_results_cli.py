import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from evenwave import cli
from evenwave.config import PARAM_SCHEMAS, SUBCOMMANDS, load_config, parse_config
from evenwave.errors import ConfigurationError
from evenwave.parallel import THREADS_ENV, ordered_map, thread_count
from evenwave.results import ResultTable, read_csv_table

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, tree, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(tree))
    return p


SMALL_RESOLVENT = {
    "m": 6,
    "grid": {"rmax": 20.0, "n": 100},
    "params": {"lambdas": [0.0, 0.1, 1.0], "rhos": [0.5, 2.0]},
}


# ---------------------------------------------------------------------------
# configuration


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_shipped_configs_validate(sub):
    cfg = load_config(CONFIGS / f"{sub}.json", sub)
    assert cfg.subcommand == sub and cfg.m == 6
    assert set(cfg.params) == set(PARAM_SCHEMAS[sub])


def test_defaults_filled():
    cfg = parse_config({}, "resolvent")
    assert (cfg.grid.rmax, cfg.grid.n, cfg.lambda0) == (40.0, 300, 0.3)
    assert cfg.potential.kind == "zero"
    assert cfg.params["rhos"] == [0.1, 0.5, 1.0, 2.0, 5.0]


@pytest.mark.parametrize(
    "tree, sub",
    [
        ({"m": 5}, "resolvent"),
        ({"m": 4}, "classify"),
        ({"grid": {"rmax": -1.0, "n": 100}}, "resolvent"),
        ({"grid": {"rmax": 10.0, "n": 8}}, "resolvent"),
        ({"lambda0": 0.0}, "waveop"),
        ({"potential": {"kind": "square"}}, "waveop"),
        ({"potential": {"kind": "tabulated", "path": "missing.txt"}}, "waveop"),
        ({"m": 8, "potential": {"kind": "exceptional_m6"}}, "classify"),
        ({"unknown": 1}, "resolvent"),
        ({"params": {"times": [-3.0, 7.0, 9.0]}}, "decay"),
        ({"params": {"p_list": [1.5]}}, "decay"),
        ({"params": {"expansion_lambdas": [0.01, 0.2, 0.05]}}, "resolvent"),
        ({"params": {"probe_p": "1"}}, "harmonic"),
        ({"quadrature": {"panels": 0}}, "waveop"),
        ({}, "plot"),
    ],
)
def test_invalid_configs_rejected(tree, sub):
    with pytest.raises(ConfigurationError):
        parse_config(tree, sub)


def test_comment_keys_ignored_in_digest():
    a = parse_config({"_comment": "x", "m": 6}, "resolvent")
    b = parse_config({"m": 6}, "resolvent")
    c = parse_config({"m": 8}, "resolvent")
    assert a.digest == b.digest != c.digest


def test_rationals_exact():
    cfg = parse_config({"params": {"ap_tests": [["3/2", "3"]], "probe_p": "5/2"}}, "harmonic")
    assert cfg.params["ap_tests"] == [(Fraction(3, 2), Fraction(3))]
    assert cfg.params["probe_p"] == Fraction(5, 2)


def test_tabulated_path_relative_to_config(tmp_path):
    (tmp_path / "v.txt").write_text("0 -1\n1 -0.5\n2 0\n")
    p = _write(tmp_path, {"potential": {"kind": "tabulated", "path": "v.txt"}})
    cfg = load_config(p, "waveop")
    assert cfg.make_potential()(np.array([0.5]))[0] == pytest.approx(-0.75)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "none.json", "resolvent")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(bad, "resolvent")


# ---------------------------------------------------------------------------
# threads and result tables


def test_thread_count(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_count() == 3
    assert thread_count(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigurationError):
        thread_count()
    with pytest.raises(ConfigurationError):
        thread_count(0)


def test_ordered_map_keeps_order():
    items = list(range(40))
    assert ordered_map(lambda x: x * x, items, threads=4) == [x * x for x in items]


def test_result_table_checks(tmp_path):
    t = ResultTable("resolvent", ["a", "b"])
    with pytest.raises(ConfigurationError):
        t.add(1)
    t.add(1, 2.5)
    with pytest.raises(ConfigurationError):
        t.to_csv()  # no convergence flags
    t.convergence["ok"] = True
    t.expected_rows = 2
    with pytest.raises(ConfigurationError):
        t.to_json()
    t.expected_rows = 1
    t.summary["x"] = np.float64(0.25)
    doc = json.loads(t.to_json())
    assert doc["converged"] is True and doc["rows"] == [[1, 2.5]] and doc["result"]["x"] == 0.25
    t.write(tmp_path / "t.csv", "csv")
    header, cols, rows = read_csv_table(tmp_path / "t.csv")
    assert header["converged"] == "true" and cols == ["a", "b"] and rows == [["1", "2.5"]]


# ---------------------------------------------------------------------------
# command line


def test_cli_resolvent_csv(tmp_path):
    out = tmp_path / "r.csv"
    code = cli.main(["resolvent", "--config", str(_write(tmp_path, SMALL_RESOLVENT)), "--out", str(out),
                     "--threads", "1"])
    assert code == 0
    header, cols, rows = read_csv_table(out)
    assert cols[:2] == ["lambda", "rho"] and len(rows) == 6
    assert header["converged"] == "true"
    assert float(json.loads(header["summary.max_rel_error"])) <= 1e-6
    for key in ("provenance.config_sha256", "provenance.versions", "provenance.threads", "provenance.seed"):
        assert key in header


def test_cli_deterministic(tmp_path):
    cfg = _write(tmp_path, SMALL_RESOLVENT)
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        assert cli.main(["resolvent", "--config", str(cfg), "--out", str(out), "--threads", "2"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_invalid_config_exit_2(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = cli.main(["resolvent", "--config", str(_write(tmp_path, {"m": 5})), "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert "configuration error" in capsys.readouterr().err


def test_cli_missing_config_exit_2(tmp_path):
    out = tmp_path / "r.csv"
    assert cli.main(["resolvent", "--config", str(tmp_path / "x.json"), "--out", str(out)]) == 2
    assert not out.exists()


def test_cli_bad_usage_exit_2(tmp_path, capsys):
    assert cli.main(["resolvent", "--out", str(tmp_path / "r.csv")]) == 2
    assert cli.main(["nosuch", "--config", "c", "--out", "o"]) == 2
    capsys.readouterr()


def test_cli_bad_threads_exit_2(tmp_path):
    out = tmp_path / "r.csv"
    cfg = _write(tmp_path, SMALL_RESOLVENT)
    assert cli.main(["resolvent", "--config", str(cfg), "--out", str(out), "--threads", "0"]) == 2
    assert not out.exists()


def test_cli_failed_gate_exit_3(tmp_path, capsys):
    # an e_tol swallowing the low spectrum leaves the classification undecided
    tree = {"grid": {"rmax": 20.0, "n": 100}, "params": {"e_tol": 1.0}}
    out = tmp_path / "c.json"
    code = cli.main(["classify", "--config", str(_write(tmp_path, tree)), "--out", str(out)])
    assert code == 3
    doc = json.loads(out.read_text())
    assert doc["converged"] is False
    assert doc["convergence"]["classification_decided"] is False
    assert doc["result"]["kind"] == "ambiguous"
    assert "numerical failure" in capsys.readouterr().err


def test_cli_classify_exceptional(tmp_path):
    out = tmp_path / "c.json"
    assert cli.main(["classify", "--config", str(CONFIGS / "classify.json"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["result"]["kind"] == "exceptional" and doc["result"]["d"] == 1
    assert doc["converged"] is True and len(doc["rows"]) == 1


def test_cli_classify_free_generic(tmp_path):
    tree = {"grid": {"rmax": 20.0, "n": 100}}
    out = tmp_path / "c.json"
    assert cli.main(["classify", "--config", str(_write(tmp_path, tree)), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["result"]["kind"] == "generic" and doc["result"]["d"] == 0 and doc["rows"] == []


def test_cli_decay_free_slope(tmp_path):
    out = tmp_path / "d.csv"
    assert cli.main(["decay", "--config", str(CONFIGS / "decay.json"), "--out", str(out)]) == 0
    header, cols, rows = read_csv_table(out)
    assert "fitted_slope" in cols
    i, j = cols.index("p"), cols.index("fitted_slope")
    slopes = {r[i]: float(r[j]) for r in rows}
    assert abs(slopes["inf"] + 3.0) <= 0.02
    assert abs(slopes["2"]) <= 0.01
    assert header["converged"] == "true"
