import csv
import json

import numpy as np
import pytest

from diffrank.cli import main
from diffrank.experiments import ExperimentResult, compare_sorters, continuity_probe, write_csv
from diffrank.sorters import ExactSorter, HandcraftedSorter
from diffrank.synth import GenConfig

TINY = ["--epochs", "1", "--pairs-per-epoch", "64", "--batch-size", "32", "--heldout-size", "64"]


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        return first, list(csv.reader(fh))


def test_write_csv_config_line(tmp_path):
    p = write_csv(tmp_path / "a" / "t.csv", ["x", "y"], [(1, 2.5)], {"seed": 3})
    first, rows = read_csv(p)
    assert first.startswith("# config: ")
    assert json.loads(first[len("# config: "):]) == {"seed": 3}
    assert rows == [["x", "y"], ["1", "2.5"]]


def test_compare_sorters_sorted():
    rows = compare_sorters(
        {"soft": HandcraftedSorter(lam=1.0), "sharp": HandcraftedSorter(lam=50.0), "exact": ExactSorter()},
        GenConfig(d=6, seed=0),
        n=200,
    )
    values = [v for _, v in rows]
    assert values == sorted(values)
    assert rows[0] == ("exact", 0.0)


def test_table_format():
    text = ExperimentResult("x", {}, [("a", 0.5), ("long name", 1e-3)]).table()
    lines = text.splitlines()
    assert lines[0].split() == ["name", "value"]
    assert lines[2].endswith("0.001")


def test_probe_exact_sorter_has_no_deviation():
    curve = continuity_probe(ExactSorter(), 5, index=2, step=0.01, seed=1)
    assert len(list(curve.rows())) == 201
    assert curve.mean_deviation == 0.0
    assert np.all(np.diff(curve.exact) <= 0)


def test_probe_rejects_bad_index():
    with pytest.raises(ValueError):
        continuity_probe(ExactSorter(), 5, index=5)


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train-sorter", "--kind", "mlp"])
    assert exc.value.code == 1
    assert main(["eval-sorter"]) == 1


def test_cli_missing_checkpoint(tmp_path):
    assert main(["eval-sorter", "--checkpoint", str(tmp_path / "nope.ckpt")]) == 2


def test_cli_train_eval_probe(tmp_path, capsys):
    out = ["--out-dir", str(tmp_path)]
    assert main(["train-sorter", "--kind", "lstm", "--d", "5", "--hidden-size", "6", "--name", "m", *TINY, *out]) == 0
    ckpt = str(tmp_path / "m.ckpt")
    assert (tmp_path / "m.report.json").exists()
    capsys.readouterr()
    assert main(["eval-sorter", "--checkpoint", ckpt, "--lam", "1", "--lam", "20", "--n", "100", "--csv", "t.csv", *out]) == 0
    text = capsys.readouterr().out
    values = [float(line.split()[-1]) for line in text.splitlines()[1:] if not line.startswith("wrote")]
    assert len(values) == 3 and values == sorted(values)
    first, rows = read_csv(tmp_path / "t.csv")
    assert first.startswith("# config: ") and rows[0] == ["sorter", "heldout_l1"]
    assert main(["continuity-probe", "--checkpoint", ckpt, "--step", "0.1", *out]) == 0
    _, rows = read_csv(tmp_path / "continuity.csv")
    assert len(rows) == 1 + 21


def test_cli_out_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DIFFRANK_OUT", str(tmp_path))
    assert main(["continuity-probe", "--checkpoint", "missing.ckpt"]) == 2
    assert main(["toy-spearman", "--d", "5", "--epochs", "1"]) == 0
    assert (tmp_path / "spearman_toy_s0.csv").exists()
