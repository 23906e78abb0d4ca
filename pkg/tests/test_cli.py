import json
import math

import pytest

from mixedap.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_constants_ap_example(capsys):
    code, out, _ = run(capsys, "constants", "--weight", "cells:1,1,1,4", "--domain", "0,4", "--p", "2",
                       "--scope", "all")
    doc = json.loads(out)
    assert code == 0
    assert doc["value"] == pytest.approx(1.5625)
    assert doc["argmax"] == [2, 4]
    assert doc["config"]["p"] == 2.0 and doc["config"]["seed"] == 0


def test_constants_bounds_uniform(capsys):
    code, out, _ = run(capsys, "constants", "--weight", "uniform:c=2", "--cells", "16", "--p", "3",
                       "--kind", "bound", "--bound", "exp1,exp0,w0,buckley")
    assert code == 0
    for v in json.loads(out)["bounds"].values():
        assert v == pytest.approx(1, abs=1e-12)


def test_constants_power_weight(capsys):
    code, out, _ = run(capsys, "constants", "--weight", "power:gamma=0.5", "--cells", "64", "--p", "2")
    assert code == 0 and json.loads(out)["value"] > 1


def test_operators_csv(capsys):
    code, out, _ = run(capsys, "operators", "--f", "cells:1,1,1,4", "--op", "dyadic")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0].startswith("# config:")
    assert [float(l.split(",")[1]) for l in lines[2:]] == [1.75, 1.75, 2.5, 4]


def test_sparse_then_operator_from_file(capsys, tmp_path):
    fam = tmp_path / "fam.json"
    code, _, _ = run(capsys, "sparse", "--f", "cells:1,1,1,1,1,1,1,100", "--out", str(fam))
    assert code == 0
    assert len(json.loads(fam.read_text())["family"]) == 2
    code, out, _ = run(capsys, "operators", "--f", "cells:1,1,1,1,1,1,1,100", "--op", "sparse_M",
                       "--family", str(fam), "--format", "json")
    assert code == 0 and json.loads(out)["values"] == [13.375] * 7 + [100]


def test_corona_random(capsys):
    code, out, _ = run(capsys, "corona", "--cells", "64", "--seed", "3")
    doc = json.loads(out)
    assert code == 0 and doc["violations"] == [] and doc["ratio"] > 0


def test_corona_input_balance_failure(capsys, tmp_path):
    spec = {"cubes": [{"level": 3, "offset": 0, "a": 1.0}, {"level": 2, "offset": 0, "a": 3.0}],
            "nu": {"num_cells": 8, "cell_width": 1.0, "origin": 0.0, "averages": [1] * 8}, "c": 2.0}
    path = tmp_path / "fam.json"
    path.write_text(json.dumps(spec))
    code, _, err = run(capsys, "corona", "--input", str(path))
    assert code == 2 and "balance" in err


def test_testing_command(capsys):
    code, out, _ = run(capsys, "testing", "--weight", "random:", "--cells", "16", "--norm", "--maximal")
    doc = json.loads(out)
    assert code == 0
    assert doc["norm_lower_bound"] >= max(doc["testing_fwd"]["value"], doc["testing_dual"]["value"]) - 1e-9


def test_usage_errors_exit_1(capsys):
    assert main(["constants"]) == 1
    assert main(["nosuch"]) == 1
    assert main(["constants", "--weight", "banana:x=1"]) == 1
    assert main(["verify", "--suite", "nope"]) == 1
    capsys.readouterr()


def test_numeric_errors_exit_2(capsys):
    assert main(["constants", "--weight", "power:gamma=-1"]) == 2
    assert main(["sweep", "--p", "2"]) == 2
    capsys.readouterr()


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "identity,interp", "--size", "5")
    assert code == 0 and "identity: PASS" in out


def test_sweep_guard_and_report(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, err = run(capsys, "sweep", "--cells", "128", "--delta-exps", "4..6", "--bounds", "exp1",
                       "--out", str(out))
    assert code in (0, 2)
    if code == 2:
        assert "guard" in err
    assert out.with_suffix(".json").exists()
    code, text, _ = run(capsys, "report", "--input", str(out.with_suffix(".json")), "--expect", "ap=1:3")
    assert code == 0 and "ap" in text
    code, _, _ = run(capsys, "report", "--input", str(out.with_suffix(".json")), "--expect", "ap=5:")
    assert code == 2
