import csv
import json
import os

import pytest

from randtower import cli
from randtower.errors import ConfigError, NumericalInvariantError
from randtower.experiments import RUNNERS, ExperimentConfig


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_config_roundtrip():
    cfg = ExperimentConfig(family="MovingBoundary", window=(0.45, 0.55), seed=9,
                           horizons=(10, 100), fit_range=(2, 50), C4=1.2)
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg and again.to_json() == cfg.to_json()


@pytest.mark.parametrize("bad", [
    {"family": "Tent"}, {"window": [0.6, 0.4]}, {"horizons": [10, 5]}, {"workers": 0},
    {"observables": ["x", "cube"]}, {"mesh_spec": {"cells": 0, "grading": 2}},
    {"constant_alpha": 0.9}, {"nonsense": 1}, {"seed": -1},
])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_exit_code_config(tmp_path):
    assert cli.main(["xn", "--window", "0.6", "0.4", "--output-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["xn", "--config", str(bad)]) == 2
    # fixtures are only accepted by validate
    assert cli.main(["xn", "--family", "BrokenSlope", "--output-dir", str(tmp_path)]) == 2


def test_exit_code_numerical(tmp_path, monkeypatch):
    def boom(cfg):
        raise NumericalInvariantError("X_n not decreasing")
    monkeypatch.setitem(RUNNERS, "xn", boom)
    assert cli.main(["xn", "--output-dir", str(tmp_path)]) == 3


def test_validate_broken_fixture(tmp_path):
    assert cli.main(["validate", "--family", "BrokenSlope", "--grid-size", "200",
                     "--output-dir", str(tmp_path)]) != 0
    rows = {r["axiom"]: r for r in _rows(tmp_path / "validate_axioms.csv")}
    assert rows["A2"]["passed"] == "false"
    assert cli.main(["validate", "--output-dir", str(tmp_path / "ok")]) == 0


def test_xn_constant_word(tmp_path):
    assert cli.main(["xn", "--constant-alpha", "0.5", "--horizons", "65536",
                     "--output-dir", str(tmp_path)]) == 0
    slope = float(_rows(tmp_path / "xn_slopes.csv")[0]["slope"])
    assert slope == pytest.approx(-2.0, abs=0.05)
    man = json.loads((tmp_path / "xn_manifest.json").read_text())
    assert man["summary"]["sandwich_holds"]
    assert {"python", "numpy", "scipy", "numba"} <= set(man["versions"])
    assert man["seeds"]["master"] == 2024 and man["runtime_seconds"] > 0


def test_moments_report(tmp_path):
    assert cli.main(["moments", "--n-samples", "100000", "--output-dir", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "moments_manifest.json").read_text())
    assert man["summary"]["max_abs_closed_minus_quadrature"] <= 1e-10
    assert man["summary"]["mc_within_3se"] >= 95


def test_manifest_reproduces_and_workers(tmp_path):
    a = tmp_path / "a"
    assert cli.main(["annealed", "--n-words", "12", "--horizons", "2000", "--seed", "5",
                     "--output-dir", str(a)]) == 0
    manifest = a / "annealed_manifest.json"
    b = tmp_path / "b"
    assert cli.main(["annealed", "--config", str(manifest), "--output-dir", str(b),
                     "--workers", "4"]) == 0
    assert (a / "annealed_annealed.csv").read_bytes() == (b / "annealed_annealed.csv").read_bytes()
    mb = json.loads((b / "annealed_manifest.json").read_text())
    assert mb["outputs"] == json.loads(manifest.read_text())["outputs"]


def test_csv_header_and_floats(tmp_path):
    assert cli.main(["lemma4", "--n-words", "100", "--horizons", "10", "100",
                     "--C2", "0", "--C3", "1", "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "lemma4_lemma4.csv").read_text().splitlines()
    assert lines[0] == "n,value,std_error,expected"
    v = lines[1].split(",")[1]
    assert float(repr(float(v))) == float(v) and repr(float(v)) == v


def test_n1_censoring_warning(tmp_path):
    # a threshold the profile can never reach censors every word
    assert cli.main(["n1-tail", "--n-words", "20", "--horizons", "50", "--C4", "100",
                     "--output-dir", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "n1-tail_manifest.json").read_text())
    assert man["summary"]["censoring_rate"] == 1.0 and man["warnings"]


def test_tower_and_correlate_small(tmp_path):
    assert cli.main(["tower", "--n-pairs", "200", "--output-dir", str(tmp_path)]) == 0
    assert cli.main(["correlate", "--n-words", "1", "--horizons", "50", "--burn-in", "64",
                     "--cells", "256", "--direction", "both", "--output-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "correlate_correlation.csv")
    assert {r["direction"] for r in rows} == {"future", "past"}
    assert os.path.exists(tmp_path / "correlate_decay_fits.csv")
