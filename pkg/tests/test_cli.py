import csv
import json

import pytest

from textcate.cli import main
from textcate.experiment import RESULT_COLUMNS


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_minimal_run_writes_one_row(small_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert run_cli("run", "--config", small_config, "--out", out, "--offline") == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert len(rows) == 1
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert rows[0]["method"] == "TCA" and float(rows[0]["pehe"]) > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["failures"] == [] and len(manifest["config_hash"]) == 64
    assert manifest["config"]["dgp"]["n"] == 1500
    for name in ("table_methods.csv", "figure_eta.csv", "figure_kappa.csv", "figure_leak.csv",
                 "figure_prompt_family.csv", "table_subgroups.csv"):
        assert (out / "figures" / name).exists()


def test_rerun_is_byte_identical(small_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", "--config", small_config, "--out", a, "--offline") == 0
    assert run_cli("run", "--config", small_config, "--out", b, "--offline", "--jobs", "2") == 0
    for name in ("results.csv", "results.jsonl", "manifest.json", "figures/table_methods.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_staged_pipeline_matches_run(small_config, tmp_path):
    data = tmp_path / "d.jsonl"
    model, pred, report = tmp_path / "m.json", tmp_path / "p.jsonl", tmp_path / "r.json"
    assert run_cli("generate", "--config", small_config, "--out", data) == 0
    test_data = tmp_path / "d_test.jsonl"
    assert test_data.exists()
    assert run_cli("fit", "--config", small_config, "--train", data, "--method", "TCA", "--out", model) == 0
    assert run_cli("predict", "--model", model, "--data", test_data, "--out", pred) == 0
    assert run_cli("evaluate", "--pred", pred, "--data", test_data, "--out", report) == 0
    staged = json.loads(report.read_text())

    out = tmp_path / "run"
    assert run_cli("run", "--config", small_config, "--out", out, "--offline") == 0
    row = next(csv.DictReader(open(out / "results.csv")))
    assert staged["pehe"] == float(row["pehe"])
    assert staged["n_test"] == 300
    for g in "MFYO":
        assert staged[f"pehe_G{g}"] == float(row[f"pehe_G{g}"])


def test_generate_into_directory(small_config, tmp_path):
    assert run_cli("generate", "--config", small_config, "--out", tmp_path / "dir") == 0
    assert (tmp_path / "dir" / "train.jsonl").exists() and (tmp_path / "dir" / "test.jsonl").exists()


def test_evaluate_length_mismatch(small_config, tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    run_cli("generate", "--config", small_config, "--out", data)
    pred = tmp_path / "p.jsonl"
    pred.write_text('{"tau_hat": 0.1}\n' * 5)
    assert run_cli("evaluate", "--pred", pred, "--data", tmp_path / "d_test.jsonl") == 2
    assert "length mismatch" in capsys.readouterr().err


def test_malformed_input_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"x": [0.1], "a": 1, "y": 0.2}\n{not json\n')
    assert run_cli("fit", "--train", bad, "--out", tmp_path / "m.json") == 2
    assert "line 2" in capsys.readouterr().err
    pred = tmp_path / "p.jsonl"
    pred.write_text('{"tau_hat": 1}\n{"tau": 2}\n')
    assert run_cli("evaluate", "--pred", pred, "--data", bad) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("[head]\nlamda = 1.0\n")
    assert run_cli("run", "--config", p, "--out", tmp_path / "o") == 2
    assert "lamda" in capsys.readouterr().err


def test_oracle_suite_passes(capsys):
    assert run_cli("oracle-suite") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_seed_override(small_config, tmp_path):
    out = tmp_path / "o"
    assert run_cli("run", "--config", small_config, "--seed", "3", "--out", out) == 0
    assert next(csv.DictReader(open(out / "results.csv")))["seed"] == "3"


def test_failed_cell_gives_exit_one(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text('seeds = [0]\nmethods = ["TCA"]\n[dgp]\nn = 200\nn_test = 50\n'
                 '[head]\nkind = "mlp"\n[head.mlp]\nbatch_size = 1024\n')
    assert run_cli("run", "--config", p, "--out", tmp_path / "o") == 1
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["failures"][0]["method"] == "TCA"
    assert "stage 3" in manifest["failures"][0]["error"]


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("generate", "fit", "predict", "evaluate", "oracle-suite", "run"):
        assert cmd in out
