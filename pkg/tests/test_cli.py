import json
import subprocess
import sys

import pytest

from securiot.cli import (EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_SCENARIO, EXIT_USAGE, EXIT_VERIFY,
                          main)
from securiot.evaluation import parse_report


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["--seed", "3", "--out", str(out), "train", "--synthetic", "--family", "tree"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scenario", "honest", "--out", str(out)]) == EXIT_OK
    return out


def test_train_writes_outputs_and_manifest(trained):
    names = sorted(p.name for p in trained.iterdir())
    assert names == ["manifest.json", "model.bin", "test.cache", "train_report.txt"]
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["seed"] == 3
    assert set(manifest["outputs"]) == {"model.bin", "test.cache", "train_report.txt"}
    assert "count.test.Benign=" in (trained / "train_report.txt").read_text()


def test_evaluate_on_cached_split(trained, tmp_path, capsys):
    code = main(["evaluate", "--model", str(trained / "model.bin"),
                 "--data", str(trained / "test.cache"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    kv = parse_report((tmp_path / "report.txt").read_text())
    assert float(kv["accuracy"]) >= 0.99
    assert "accuracy=" in capsys.readouterr().out
    for name in ("report.json", "confusion.csv", "confusion_normalized.csv", "heatmap.txt"):
        assert (tmp_path / name).is_file()


def test_evaluate_on_csv(trained, tmp_path):
    from securiot.ids.data import write_csv
    from securiot.ids.synthetic import synthetic_corpus
    write_csv(synthetic_corpus(3), tmp_path / "flows.csv")
    out = tmp_path / "ev"
    assert main(["evaluate", "--model", str(trained / "model.bin"), "--data",
                 str(tmp_path / "flows.csv"), "--out", str(out)]) == EXIT_OK


def test_global_flags_work_after_subcommand(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["--seed", "5", "--out", str(a), "train", "--synthetic", "--scale", "0.5"])
    main(["train", "--synthetic", "--scale", "0.5", "--seed", "5", "--out", str(b)])
    assert (a / "model.bin").read_bytes() == (b / "model.bin").read_bytes()


def test_config_file_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# family and seed from file\nfamily = gnb\nseed = 4\nscale = 0.5\n")
    out = tmp_path / "o"
    assert main(["--config", str(cfg), "--out", str(out), "train", "--synthetic"]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["family"] == "gnb" and manifest["seed"] == 4
    cfg.write_text("colour = blue\n")
    assert main(["--config", str(cfg), "--out", str(out), "train", "--synthetic"]) == EXIT_USAGE


def test_param_overrides(tmp_path):
    out = tmp_path / "g"
    assert main(["train", "--synthetic", "--scale", "0.3", "--family", "gbt", "--param", "n_rounds=2",
                 "--param", "max_depth=2", "--out", str(out)]) == EXIT_OK
    from securiot.models import read_model
    assert read_model(out / "model.bin").train_config["n_rounds"] == 2
    assert main(["train", "--synthetic", "--param", "oops", "--out", str(out)]) == EXIT_USAGE


def test_simulate_outputs(simulated, capsys):
    summary = parse_report((simulated / "summary.txt").read_text())
    assert summary["conservation"] == "true" and summary["committed_updates"] == "20"
    for name in ("ledger.ndjson", "registry.csv", "trace.tsv", "decisions.tsv", "summary.json"):
        assert (simulated / name).stat().st_size > 0


def test_ledger_subcommands(simulated, capsys):
    ledger = str(simulated / "ledger.ndjson")
    assert main(["ledger", "verify", ledger]) == EXIT_OK
    assert main(["ledger", "verify", ledger, "--registry", str(simulated / "registry.csv")]) == EXIT_OK
    assert capsys.readouterr().out == "OK\nOK\n"
    assert main(["ledger", "inspect", ledger]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("height=0 proposer=genesis")
    assert main(["ledger", "query", ledger, "sensor-0"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("sensor=sensor-0 device=dev-0 value=")
    assert main(["ledger", "query", ledger, "dev-1"]) == EXIT_OK
    assert "status=active" in capsys.readouterr().out
    assert main(["ledger", "query", ledger, "ghost"]) == EXIT_DATA


def test_ledger_verify_detects_tamper(simulated, tmp_path, capsys):
    lines = (simulated / "ledger.ndjson").read_text().splitlines(keepends=True)
    lines[2] = lines[2].replace('"timestamp":', '"timestamp":1', 1)
    bad = tmp_path / "bad.ndjson"
    bad.write_text("".join(lines))
    assert main(["ledger", "verify", str(bad)]) == EXIT_VERIFY
    assert capsys.readouterr().out.startswith("FAIL height=2")


def test_exit_codes(tmp_path, trained):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["train", "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path)]) == EXIT_DATA
    assert main(["evaluate", "--model", str(trained / "train_report.txt"), "--synthetic",
                 "--out", str(tmp_path)]) == EXIT_MODEL
    bad = tmp_path / "bad.scn"
    bad.write_text("validators 2\n")
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path)]) == EXIT_SCENARIO
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == EXIT_USAGE


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "securiot", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
