import json
from pathlib import Path

import numpy as np

from tame_ldjt import cli, fixtures, modelfile
from tame_ldjt.oracle import query_pdm
from tame_ldjt.pmodel import GroundAtom, Query

ROOT = Path(__file__).resolve().parents[1]
GEX = ROOT / "src" / "tame_ldjt" / "data" / "gex.json"
EVIDENCE = ROOT / "configs" / "evidence_example.json"
CONFIG = ROOT / "configs" / "gex_option3.json"


def test_validate_ok(capsys):
    assert cli.run(["validate", str(GEX)]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def test_validate_reports_problems(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"logvars": {"X": ["x1"]}, "parfactors": [
        {"name": "g", "arguments": [{"name": "R", "logvars": ["X"]}], "potentials": [1, -2]}]}))
    assert cli.run(["validate", str(bad)]) == 1
    assert "negative potential" in capsys.readouterr().err


def test_query_matches_oracle(capsys):
    assert cli.run(["query", str(GEX), str(EVIDENCE), "--target", "A(x1)", "--pi", "3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "prediction" and out["t"] == 1 and out["query"] == "A_3(x1)"
    ev = modelfile.parse_evidence(json.loads(EVIDENCE.read_text())["evidence"])
    want = query_pdm(fixtures.gex_pdm(), ev, Query(GroundAtom("A", ("x1",)), 3, 1),
                     max_randvars=200, method="ve")
    np.testing.assert_allclose([out["marginal"]["true"], out["marginal"]["false"]], want, atol=1e-9)


def test_query_smoothing_is_an_error(capsys):
    assert cli.run(["query", str(GEX), str(EVIDENCE), "--target", "A(x1)", "--pi", "0"]) == 1
    assert "smoothing unsupported" in capsys.readouterr().err


def test_missing_file(capsys):
    assert cli.run(["validate", "/nonexistent.json"]) == 1
    assert "cannot read" in capsys.readouterr().err


def test_usage_errors():
    assert cli.run(["bogus"]) == 2
    assert cli.run(["query", str(GEX)]) == 2
    assert cli.run([]) == 2


def test_bad_offsets(tmp_path, capsys):
    assert cli.run(["experiment", str(CONFIG), "--offsets", "a,b", "--out", str(tmp_path)]) == 1
    assert "bad --offsets" in capsys.readouterr().err


def test_experiment_writes_outputs(tmp_path, capsys):
    rc = cli.run(["experiment", str(CONFIG), "--steps", "3", "--domain-size", "6", "--groups", "2",
                  "--offsets", "0,1", "--out", str(tmp_path)])
    assert rc == 0
    for name in ("metrics.csv", "summary.csv", "tame_log.csv", "timing.json"):
        assert (tmp_path / name).exists()
    assert capsys.readouterr().out.count("pi=") == 2


def test_replicate_command_small(tmp_path, capsys):
    rc = cli.run(["replicate-paper", "--steps", "3", "--domain-size", "6", "--groups", "2",
                  "--out", str(tmp_path)])
    assert rc == 0
    for sub in ("none", "option1", "option2", "option3"):
        assert (tmp_path / sub / "metrics.csv").exists()
    assert (tmp_path / "summary.csv").read_text().startswith("option,interval,epsilon,pi,")
