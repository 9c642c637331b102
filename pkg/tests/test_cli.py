import json

import pytest

from gneumann.analysis import threshold_check
from gneumann.cli import main, parse_grid, UsageError

SMALL = "N=2,s=0.5,M=16,E=8,Rout=4,Kang=32"


def test_parse_grid():
    assert parse_grid("N=3,s=0.25,M=8") == {"N": 3, "s": 0.25, "M": 8}
    for bad in ("N", "Q=1", "M=x"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["verify", "--suite", "nope"]) == 2
    assert main(["verify", "--family", "wobble:1"]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["verify", "--config", str(tmp_path / "bad.json")]) == 2
    assert main(["solve", "--family", "power:2", "--p", "2", "--grid", SMALL,
                 "--out", str(tmp_path)]) == 2
    assert main(["solve", "--family", "power:3", "--p", "3", "--grid", SMALL,
                 "--out", str(tmp_path)]) == 2
    assert main(["verify", "--suite", "young", "--out", "/dev/null/x"]) == 2


def test_verify_young_stdout(capsys):
    assert main(["verify", "--suite", "young", "--family", "doublepower:2,3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and "young" in rep["suites"]


def test_verify_files_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["verify", "--suite", "young+cone+constants", "--grid", SMALL, "--seed", "3"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert (a / "verify.json").read_bytes() == (b / "verify.json").read_bytes()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"family": "power:3", "p": 5,
                               "grid": {"N": 2, "s": 0.5, "M": 16, "E": 8, "R_out": 4.0}}))
    out = tmp_path / "o"
    assert main(["solve", "--config", str(cfg), "--family", "power:2", "--p", "4",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "solve.json").read_text())
    assert rep["config"]["fam"].startswith("power")
    assert rep["config"]["p"] == 4


def test_solve_outputs_and_determinism(tmp_path):
    runs = []
    for name in ("x", "y"):
        out = tmp_path / name
        code = main(["solve", "--family", "power:2", "--p", "4", "--grid", SMALL,
                     "--seed", "1", "--out", str(out)])
        assert code == 0
        runs.append(out)
    for f in ("solve.json", "certificate.json", "profile.csv"):
        assert (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes()
    header = (runs[0] / "profile.csv").read_text().splitlines()[0]
    assert "r" in header.lower()
    rep = json.loads((runs[0] / "solve.json").read_text())
    assert rep["residual_tolerance_met"]
    assert "timestamp" not in json.dumps(rep)


def test_lambda_verdict_consistent(tmp_path):
    out = tmp_path / "l"
    assert main(["lambda", "--family", "power:2", "--p", "4", "--grid", SMALL,
                 "--out", str(out)]) == 0
    rep = json.loads((out / "lambda.json").read_text())
    assert rep["verdict"] == threshold_check(4, rep["q_plus"], rep["value"])
    assert (rep["value"] < rep["threshold"]) == rep["verdict"]
    assert (out / "certificate.csv").exists()
