import csv
import json
from pathlib import Path

import numpy as np
import pytest

from progtree.cli import load_model, main
from progtree.data import load_csv

DATA = Path(__file__).resolve().parents[1] / "data"
CSV = str(DATA / "synth_oblique_xor.csv")


@pytest.mark.parametrize("method,extra", [
    ("progressive", ["--b", "5"]),
    ("breiman", ["--B", "50"]),
    ("rf", ["--R", "2", "--trees-tune", "3", "--trees-final", "4"]),
    ("rf_plus_s", ["--b", "5", "--R", "2", "--trees-tune", "3", "--trees-final", "4"]),
])
def test_fit_then_predict(tmp_path, method, extra):
    model = tmp_path / "m.json"
    preds = tmp_path / "p.csv"
    assert main(["fit", "--data", CSV, "--normalize", "--method", method,
                 "--out", str(model)] + extra) == 0
    assert main(["predict", "--model", str(model), "--data", CSV, "--out", str(preds)]) == 0
    lines = preds.read_text().splitlines()
    assert lines[0] == "prediction" and len(lines) == 301
    m, rec = load_model(model)
    data = rec.apply(load_csv(CSV))
    np.testing.assert_array_equal(np.array(lines[1:], dtype=float), m.predict(data.features))


def test_refine_and_resume(tmp_path):
    ck = tmp_path / "ck.json"
    assert main(["refine", "--data", CSV, "--b", "4", "--seed", "3", "--out", str(ck)]) == 0
    assert json.loads(ck.read_text())["l"] == 4
    ck2 = tmp_path / "ck2.json"
    assert main(["refine", "--data", CSV, "--resume", str(ck), "--b", "3", "--out", str(ck2)]) == 0
    straight = tmp_path / "ck3.json"
    main(["refine", "--data", CSV, "--b", "7", "--seed", "3", "--out", str(straight)])
    a, b = json.loads(ck2.read_text()), json.loads(straight.read_text())
    assert a["tree"] == b["tree"] and a["l"] == 7


def test_tune_writes_report(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["tune", "--data", CSV, "--method", "rf", "--R", "3", "--trees-tune", "3",
                 "--trees-final", "3", "--report", str(rep), "--out", str(tmp_path / "m.json")]) == 0
    report = json.loads(rep.read_text())
    assert report["rounds"] == 3 and len(report["trials"]) == 3


def test_bench_xor_config(tmp_path):
    cfg = {"seed": 2, "trials": 1, "output_dir": "out",
           "methods": [{"name": "progressive", "b": 3}],
           "specs": [{"n": 40, "p": 5, "s0": 1, "n_test": 100}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["bench-xor", "--config", str(path)]) == 0
    assert (tmp_path / "out" / "trials.jsonl").exists()
    assert main(["bench-xor", "--config", str(path), "--out", str(tmp_path / "o2"),
                 "--seed", "9"]) == 0
    row = json.loads((tmp_path / "o2" / "trials.jsonl").read_text().splitlines()[0])
    assert row["seed"][0] == 9


def test_bench_csv_flags(tmp_path):
    assert main(["bench-csv", "--csv", CSV, "--methods", "progressive", "--b", "3",
                 "--trials", "1", "--out", str(tmp_path)]) == 0
    with (tmp_path / "aggregate.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["method"] == "progressive"


def test_bench_kind_mismatch(tmp_path):
    cfg = {"seed": 2, "trials": 1, "output_dir": str(tmp_path),
           "methods": [{"name": "progressive", "b": 3}],
           "specs": [{"n": 40, "p": 5, "s0": 1}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    with pytest.raises(SystemExit):
        main(["bench-csv", "--config", str(path)])


def test_bad_csv_reports_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,x\n")
    assert main(["fit", "--data", str(bad), "--method", "progressive", "--b", "1"]) == 2
    assert "row 2, column y" in capsys.readouterr().err
