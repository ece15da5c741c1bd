import json
import os
import subprocess
import sys
from fractions import Fraction

import pytest

from gibbsmix.cli import main

EX2 = {"model": {"kind": "dp", "theta": 1},
       "family": {"family": "gaussian", "params": {"dim": 1, "variance": 1}, "xi": [0], "nu": 1},
       "data": [[0], [0]]}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def _run(tmp_path, *argv, out="out"):
    return main([*argv, "--out", str(tmp_path / out)])


def test_exact_example(tmp_path, capsys):
    assert _run(tmp_path, "exact", "--config", _write(tmp_path, EX2)) == 0
    assert capsys.readouterr().out.strip() == "0.535898 0.464102"
    body = json.loads((tmp_path / "out" / "exact.json").read_text())
    assert [round(p, 6) for p in body["posterior"]] == [0.535898, 0.464102]
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["effective_config"] == EX2
    assert set(man["artifacts"]) == {"exact.json", "exact.csv"}


def test_fig3_example(tmp_path):
    assert _run(tmp_path, "fig3", "--theta", "1", "--n", "4") == 0
    lines = (tmp_path / "out" / "fig3.csv").read_text().splitlines()
    assert lines[0].startswith("# csv_version")
    assert lines[2] == "n,a,pmf,cdf"
    pmf = [float(r.split(",")[2]) for r in lines[3:]]
    assert pmf == pytest.approx([float(Fraction(4, 11)), float(Fraction(3, 11)),
                                 float(Fraction(4, 11))], rel=1e-14)


def test_cap_refusal(tmp_path, capsys):
    cfg = {**EX2, "data": [[0.1 * i] for i in range(25)]}
    assert _run(tmp_path, "exact", "--config", _write(tmp_path, cfg)) == 2
    assert "cap of 20" in capsys.readouterr().err


def test_domain_errors(tmp_path, capsys):
    bad = {**EX2, "model": {"kind": "dp", "theta": -1}}
    assert _run(tmp_path, "exact", "--config", _write(tmp_path, bad)) == 1
    assert "theta" in capsys.readouterr().err
    bad = {**EX2, "model": {"kind": "dq"}}
    assert _run(tmp_path, "exact", "--config", _write(tmp_path, bad)) == 1
    assert "model" in capsys.readouterr().err
    assert _run(tmp_path, "exact", "--config", _write(tmp_path, '{"model": {"kind": "dp",')) == 1
    assert "cfg.json:1:25: invalid JSON" in capsys.readouterr().err
    bad = {**EX2, "frobnicate": 1}
    assert _run(tmp_path, "exact", "--config", _write(tmp_path, bad)) == 1
    assert "frobnicate" in capsys.readouterr().err
    assert _run(tmp_path, "exact", "--config", str(tmp_path / "missing.json")) == 1
    assert _run(tmp_path, "exact") == 1


def test_certify(tmp_path, capsys):
    cfg = {"family": {"family": "poisson_gamma", "xi": [1], "nu": 1},
           "box": {"lo": [0.5], "hi": [2.0]}}
    assert _run(tmp_path, "certify", "--config", _write(tmp_path, cfg)) == 0
    body = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert 0 < body["certificate"]["C1"] <= body["certificate"]["C2"]
    assert body["splitting"]["C"] > 0
    ng = {"family": {"family": "normal_gamma", "xi": [0, 2], "nu": 1},
          "box": {"lo": [0, 2], "hi": [1, 3]}}
    assert _run(tmp_path, "certify", "--config", _write(tmp_path, ng)) == 2


def test_prior_and_bounds(tmp_path):
    assert _run(tmp_path, "prior", "--config", _write(tmp_path, {"model": {"kind": "dp",
                                                                           "theta": 1}}),
                "--n", "3") == 0
    text = (tmp_path / "out" / "prior.csv").read_text().splitlines()
    assert text[0] == "n,t,probability" and len(text) == 4
    cfg = {**EX2, "data": [[0.0], [0.2], [3.0], [3.1], [-2.0]], "t": 2, "c": 2.0}
    assert _run(tmp_path, "bounds", "--config", _write(tmp_path, cfg), out="b") == 0
    rep = json.loads((tmp_path / "b" / "bounds.json").read_text())
    assert 0 <= rep["bound"] <= 1


def test_gibbs_and_trace(tmp_path):
    cfg = {**EX2, "gibbs": {"burn_in_sweeps": 10, "sample_sweeps": 100, "chains": 2},
           "trace": True}
    assert _run(tmp_path, "gibbs", "--config", _write(tmp_path, cfg), "--seed", "4") == 0
    files = sorted(os.listdir(tmp_path / "out"))
    assert "gibbs_trace_chain1.csv" in files
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["effective_config"]["seed"] == 4


def test_capture_and_sweep(tmp_path):
    cap = {"family": {"family": "gaussian"}, "mixture": {"weights": [1], "means": [[0]]},
           "beta": 0.5, "capture_region": {"lo": [-3], "hi": [3]}, "n_grid": [10, 200],
           "seeds": 10}
    assert _run(tmp_path, "capture", "--config", _write(tmp_path, cap)) == 0
    sweep = {"family": {"family": "poisson_gamma", "xi": [1.0], "nu": 1.0},
             "model": {"kind": "dp", "theta": 1.0},
             "mixture": {"weights": [0.5, 0.5], "means": [1.0, 5.0]},
             "n_grid": [5, 9, 30], "seed": 3, "region": [0, 1], "c": 2.0, "exact_max_n": 9,
             "gibbs": {"burn_in_sweeps": 50, "sample_sweeps": 500}}
    assert _run(tmp_path, "sweep", "--config", _write(tmp_path, sweep, "s.json"), out="s") == 0
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert lines[2].startswith("n,engine,posterior")
    assert len(lines) == 6


def test_outputs_byte_identical_except_timestamp(tmp_path):
    cfg = {**EX2, "gibbs": {"burn_in_sweeps": 10, "sample_sweeps": 300, "chains": 2}}
    p = _write(tmp_path, cfg)
    assert _run(tmp_path, "gibbs", "--config", p, out="a") == 0
    assert main(["gibbs", "--config", p, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in os.listdir(tmp_path / "a"):
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text()
        if name == "manifest.json":
            ja, jb = json.loads(a), json.loads(b)
            ja.pop("timestamp")
            jb.pop("timestamp")
            assert ja == jb
        else:
            assert a == b


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GIBBSMIX_OUTPUT_DIR", str(tmp_path / "envout"))
    assert main(["fig3", "--n", "5"]) == 0
    assert (tmp_path / "envout" / "fig3.csv").exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "gibbsmix.cli", "exact", "--config",
                          _write(tmp_path, EX2), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "0.535898 0.464102"
