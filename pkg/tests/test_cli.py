import csv
import json

import pytest

from ssl_batchlab import config
from ssl_batchlab.cli import main, mean_std, sample_trials, summarize, SweepSpec
from ssl_batchlab.metrics import write_csv

TINY = {
    "spec_version": 1,
    "name": "tiny",
    "data": {"n": 160, "n_test": 80, "n_labeled": [4]},
    "model": {"hidden": [6]},
    "sampler": {"mode": "explicit", "batch_size": 16},
    "train": {"budget_epochs": 3},
    "replicates": {"seeds": [0, 1], "split_seeds": [0]},
}


@pytest.fixture
def tiny(tmp_path, monkeypatch):
    monkeypatch.setenv("SSL_BATCHLAB_DIR", str(tmp_path / "runs"))
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


def test_run_writes_replicates_and_summary(tiny, tmp_path, capsys):
    assert main(["run", str(tiny)]) == 0
    root = tmp_path / "runs" / "tiny"
    assert sorted(d.name for d in root.iterdir() if d.is_dir()) == ["seed0_split0", "seed1_split0"]
    summary = json.loads((root / "summary.json").read_text())
    assert summary["runs"] == 2
    recomputed = summarize([root / "seed0_split0", root / "seed1_split0"])
    assert recomputed == summary
    assert "+-" in capsys.readouterr().out


def test_single_replicate_std_zero():
    assert mean_std([0.7]) == (0.7, 0.0)
    m, s = mean_std([0.5, 0.7])
    assert m == pytest.approx(0.6) and s == pytest.approx(0.1414213562373095)


def test_invalid_key_exit_code(tiny, capsys):
    assert main(["run", str(tiny), "-o", "sampler.mode=foo"]) == 2
    assert "sampler.mode" in capsys.readouterr().err
    assert main(["run", "not_a_preset"]) == 2


def test_divergence_exit_code(tiny):
    assert main(["run", str(tiny), "-o", "train.lr0=1e6", "-o", "train.budget_epochs=30", "--seeds", "0"]) == 3


def test_audit_tiny_ratio(tmp_path, capsys):
    out = tmp_path / "audit.csv"
    assert main(["audit-sampler", "tiny_explicit", "--steps", "5", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 20
    lab = [int(r["exposure_count"]) for r in rows if r["configuration"] == "1"]
    unl = [int(r["exposure_count"]) for r in rows if r["configuration"] == "0"]
    assert sum(lab) / len(lab) == 2.5 and sum(unl) / len(unl) == 0.625
    assert "ratio=4" in capsys.readouterr().err


def test_audit_implicit_epoch(tmp_path):
    out = tmp_path / "audit.csv"
    assert main(["audit-sampler", "tiny_implicit", "--steps", "5", "--out", str(out)]) == 0
    assert {r["exposure_count"] for r in csv.DictReader(out.open())} == {"1"}


def test_audit_multitask_groups(capsys):
    assert main(["audit-sampler", "tiny_multitask", "--steps", "1"]) == 0
    err = capsys.readouterr().err
    assert err.count("configuration") == 4


def test_audit_infeasible_exit_code(capsys):
    assert main(["audit-sampler", "tiny_multitask", "--steps", "1", "-o", "sampler.batch_size=3",
                 "-o", "sampler.group_sizes=null"]) == 3
    assert "configurations" in capsys.readouterr().err


def test_export_plots(tiny, tmp_path):
    main(["run", str(tiny), "--seeds", "0"])
    d = tmp_path / "runs" / "tiny" / "seed0_split0"
    assert main(["export-plots", str(d)]) == 0
    svgs = sorted(p.name for p in d.glob("*.svg"))
    assert svgs == ["confidence.svg", "errors.svg", "losses.svg", "privileged.svg"]
    text = (d / "losses.svg").read_text()
    assert 'viewBox="0 0 800 500"' in text and text.count("<polyline") == 2


def test_export_plots_compare(tiny, tmp_path):
    main(["run", str(tiny), "--seeds", "0", "--out", str(tmp_path / "e")])
    main(["run", str(tiny), "--seeds", "0", "--out", str(tmp_path / "i"), "-o", "sampler.mode=implicit"])
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"runs": [{"dir": "e/seed0_split0", "label": "explicit"},
                                             {"dir": "i/seed0_split0", "label": "implicit"}]}))
    assert main(["export-plots", str(tmp_path), "--compare", str(manifest), "--out", str(tmp_path / "cmp")]) == 0
    text = (tmp_path / "cmp" / "errors.svg").read_text()
    assert text.count("<polyline") == 4 and text.count("stroke-dasharray") == 3  # 2 lines + legend
    assert "explicit" in text and "implicit" in text


def test_export_plots_empty_metrics(tmp_path):
    write_csv([], tmp_path / "metrics.csv")
    assert main(["export-plots", str(tmp_path)]) == 2


def test_sweep(tiny, tmp_path):
    spec = {"base": str(tiny), "trial_budget": 3, "seed": 7, "name": "sw",
            "params": {"train.lr0": {"scale": "log", "low": 0.01, "high": 0.1},
                       "sampler.batch_size": {"choices": [8, 16]},
                       "sampler.labeled_fraction": {"low": 0.1, "high": 0.5}}}
    sp = tmp_path / "sweep.json"
    sp.write_text(json.dumps(spec))
    assert main(["sweep", str(sp)]) == 0
    root = tmp_path / "runs" / "sw"
    assert sorted(d.name for d in root.iterdir() if d.is_dir()) == ["trial_0000", "trial_0001", "trial_0002"]
    board = list(csv.DictReader((root / "leaderboard.csv").open()))
    vals = [float(r["val_acc"]) for r in board]
    assert vals == sorted(vals, reverse=True)
    best = config.load(root / "best_config.json")
    assert best.train.lr0 == float(board[0]["train.lr0"])
    again = sample_trials(SweepSpec(base=None, params=spec["params"], trial_budget=3, seed=7))
    assert [t["train.lr0"] for t in again] == [float(r["train.lr0"]) for r in sorted(board, key=lambda r: r["trial"])]


def test_sweep_records_failed_trials(tiny, tmp_path):
    spec = {"base": str(tiny), "trial_budget": 2, "seed": 2, "name": "bad",
            "overrides": {"train.budget_epochs": 30},
            "params": {"train.lr0": {"choices": [1e6, 0.03]}}}
    sp = tmp_path / "sweep.json"
    sp.write_text(json.dumps(spec))
    main(["sweep", str(sp), "--trial-budget", "4"])
    board = list(csv.DictReader((tmp_path / "runs" / "bad" / "leaderboard.csv").open()))
    assert len(board) == 4
    assert [r["status"] for r in board] == ["ok", "ok", "failed", "failed"]
    assert all("DivergenceError" in r["error"] for r in board[2:])


def test_sweep_spec_validation(tmp_path):
    sp = tmp_path / "s.json"
    sp.write_text(json.dumps({"base": "moons_explicit", "trial_budget": 0, "params": {"train.lr0": {"choices": [1]}}}))
    assert main(["sweep", str(sp)]) == 2
    sp.write_text(json.dumps({"base": "moons_explicit", "params": {"train.lr0": {"low": 1, "high": 1}}}))
    assert main(["sweep", str(sp)]) == 2


def test_resume(tiny, tmp_path, capsys):
    main(["run", str(tiny), "--seeds", "0"])
    ck = tmp_path / "runs" / "tiny" / "seed0_split0" / "ckpt_final"
    assert main(["resume", str(ck), "--override", "fixmatch.lambda_s=0", "--out", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert "collapse:" in out
    cfg = config.load(tmp_path / "r" / "config.json")
    assert cfg.fixmatch.lambda_s == 0.0 and cfg.train.init_checkpoint == str(ck.resolve())


def test_resume_missing_checkpoint(tmp_path):
    assert main(["resume", str(tmp_path / "nope")]) == 2
