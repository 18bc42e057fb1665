"""CLI exit codes, env-var resolution, and the CSV round trip."""

import json
import os

import pytest

from coldflow.cli import main
from coldflow.docstore import open_store
from coldflow.fridgesim import WORKORDER_PATTERNS


def write_config(tmp_path, extra=None, name="run.json"):
    cfg = {
        "seed": 11,
        "pool_width": 2,
        "wrangle": {"window_len": 16, "leads": [0.0],
                    "target_band_s": [300.0, 8100.0]},
        "simulate": {"n_fridges": 3, "days": 4},
        "learn": [{"name": "m", "task": "regression", "cell": "rnn",
                   "layers": 1, "hidden": 6, "epochs": 2}],
        "infer": [{"model": "m", "split": "test"}],
        "report": {"models": ["m"], "tag": "r"},
    }
    if extra:
        cfg.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_validate_config_ok(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["validate-config", "--config", path]) == 0
    out = capsys.readouterr().out
    assert "config ok" in out
    assert "wrangle -> learn -> infer -> serve" in out


def test_validate_config_bad_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"seed": 1, "bogus": True}))
    assert main(["validate-config", "--config", str(path)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_unknown_subcommand_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_missing_config_exit_2(capsys):
    assert main(["run"]) == 2
    assert "needs --config" in capsys.readouterr().err


def test_missing_store_exit_2(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["wrangle", "--config", path]) == 2
    assert "no store given" in capsys.readouterr().err


def test_task_failure_exit_1(tmp_path, capsys):
    # Wrangling an empty store is a task failure, not a config error.
    path = write_config(tmp_path)
    code = main(["wrangle", "--config", path,
                 "--store", str(tmp_path / "empty_store")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_run_then_stepwise_commands(tmp_path, capsys):
    config = write_config(tmp_path, extra={
        "store_path": str(tmp_path / "store"),
        "select": {"model": "m", "target_kw": 0.5, "tag": "t"},
        "report": {"models": ["m"], "tag": "r", "selection_tag": "t"},
    })
    assert main(["run", "--config", config]) == 0
    out = capsys.readouterr().out
    assert "stage wrangle: ok" in out
    assert "stage serve: ok" in out
    assert "m " in out

    with open_store(str(tmp_path / "store"), read_only=True) as store:
        assert store.get("reports", "report:r")["rows"]

    # Stepwise commands are idempotent over the same store.
    assert main(["select", "--config", config]) == 0
    assert main(["report", "--config", config]) == 0
    assert "improvement" in capsys.readouterr().out


def test_simulate_ingest_csv_round_trip(tmp_path, capsys):
    config = write_config(tmp_path, extra={
        "simulate": {"n_fridges": 2, "days": 4,
                     "faults": {"count": 2, "noise_workorders": 1}},
        "faults": {"patterns": WORKORDER_PATTERNS, "horizon_s": 21600.0,
                   "window_len": 16, "test_fraction": 0.3, "val_fraction": 0.3},
    })
    out_dir = tmp_path / "csv"
    assert main(["simulate", "--config", config, "--out", str(out_dir)]) == 0
    csvs = sorted((out_dir / "telemetry").glob("*.csv"))
    assert len(csvs) == 2
    assert (out_dir / "setpoints.json").is_file()
    assert (out_dir / "workorders.json").is_file()

    store = tmp_path / "store"
    assert main(["ingest", "--from", str(out_dir), "--store", str(store)]) == 0
    summary = capsys.readouterr().out
    assert "ingested" in summary
    with open_store(str(store), read_only=True) as handle:
        rows = handle.aggregate("telemetry", [
            {"$group": {"_id": "$fridge_id", "n": {"$count": {}}}},
            {"$sort": {"_id": 1}},
        ])
        assert len(rows) == 2
        # Both fleets carry an injected fault, and a faulted stream stops
        # at the fault, so each fridge has somewhat under 4 full days.
        assert all(3000 < r["n"] <= 5760 for r in rows)
        assert len(handle.find_all("workorders")) == 3

    # Ingest is write-once: a second pass adds nothing.
    assert main(["ingest", "--from", str(out_dir), "--store", str(store)]) == 0
    assert "ingested 0 telemetry records" in capsys.readouterr().out


def test_store_path_env_honored(tmp_path, capsys, monkeypatch):
    config = write_config(tmp_path)
    monkeypatch.setenv("STORE_PATH", str(tmp_path / "env_store"))
    monkeypatch.setenv("CONFIG_PATH", config)
    assert main(["run"]) == 0
    assert (tmp_path / "env_store").is_dir()


def test_seed_flag_overrides_config(tmp_path):
    config = write_config(tmp_path)
    assert main(["run", "--config", config,
                 "--store", str(tmp_path / "a"), "--seed", "5"]) == 0
    assert main(["run", "--config", config,
                 "--store", str(tmp_path / "b"), "--seed", "6"]) == 0
    docs = {}
    for sub in ("a", "b"):
        with open_store(str(tmp_path / sub), read_only=True) as store:
            docs[sub] = store.find_all("dsr_examples")
    ids_a = {d["_id"] for d in docs["a"]}
    ids_b = {d["_id"] for d in docs["b"]}
    # Different seeds draw different fleets, so the example ids differ.
    assert ids_a != ids_b
