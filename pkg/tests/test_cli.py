import json
import subprocess
import sys

import numpy as np
import pytest

from sdlab.cli import main
from sdlab.trace import TraceHeader, TraceRecord, save_trace


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_generate_prints_tokens_and_metrics(capsys):
    code, out, _ = run_cli(capsys, "--vocab", "32", "--gamma", "4", "generate", "--pair", "linear",
                           "--max-new-tokens", "40")
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"tokens", "metrics"}
    assert len(payload["tokens"]) >= 40
    assert 0.0 <= payload["metrics"]["acceptance_rate"] <= 1.0


def test_generate_report_path_jsonl(capsys, tmp_path):
    path = tmp_path / "reports.jsonl"
    code, _, _ = run_cli(capsys, "--vocab", "32", "--gamma", "4", "generate", "--pair", "linear",
                         "--max-new-tokens", "20",
                         "--report-path", str(path))
    assert code == 0
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert rows
    assert all("appended_tokens" in row for row in rows)


def test_generate_deterministic(capsys):
    args = ("--seed", "3", "--vocab", "32", "--gamma", "4", "generate",
            "--pair", "ngram", "--corpus-len", "4000", "--max-new-tokens", "30",
            "--draft-mode", "sample")
    _, out1, _ = run_cli(capsys, *args)
    _, out2, _ = run_cli(capsys, *args)
    assert out1 == out2


def test_sweep_writes_byte_identical_reports(capsys, tmp_path):
    paths = []
    for name in ("a", "b"):
        csv_path = tmp_path / f"{name}.csv"
        json_path = tmp_path / f"{name}.json"
        code, _, _ = run_cli(capsys, "--vocab", "32", "--gamma", "4", "sweep", "--pair", "linear",
                             "--policies", "lossless;kl:tau=0.4",
                             "--seeds", "0,1", "--max-new-tokens", "40",
                             "--csv", str(csv_path),
                             "--json", str(json_path))
        assert code == 0
        paths.append((csv_path, json_path))
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert paths[0][1].read_bytes() == paths[1][1].read_bytes()


def test_sweep_default_out_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SDLAB_OUT_DIR", str(tmp_path))
    code, _, _ = run_cli(capsys, "--vocab", "32", "--gamma", "4", "sweep", "--pair", "linear",
                         "--policies", "lossless", "--seeds", "0",
                         "--max-new-tokens", "20")
    assert code == 0
    assert (tmp_path / "sweep.csv").exists()


def test_theory_check_passes(capsys, tmp_path):
    path = tmp_path / "checks.json"
    code, out, _ = run_cli(capsys, "theory-check", "--json", str(path))
    assert code == 0
    lines = [line for line in out.splitlines() if line]
    assert len(lines) == 7
    assert all(line.startswith("[PASS]") for line in lines)
    reports = json.loads(path.read_text())
    assert all(r["passed"] for r in reports)


def test_mine_then_train_judge(capsys, tmp_path):
    mined = tmp_path / "mined.jsonl"
    code, out, _ = run_cli(capsys, "--vocab", "64", "mine", "--pair", "linear",
                           "--coupling", "0.7", "--prompts", "8",
                           "--rollouts", "4", "--horizon", "16",
                           "--out", str(mined))
    assert code == 0
    summary = json.loads(out)
    assert summary["labels"] > 0
    assert sum(summary["consistency_histogram"]) == summary["labels"]
    rows = [json.loads(line) for line in mined.read_text().splitlines()]
    assert len(rows) == summary["labels"]
    assert all(row["label"] in (0, 1) for row in rows)

    judge_path = tmp_path / "judge.json"
    code, out, _ = run_cli(capsys, "train-judge", "--data", str(mined),
                           "--epochs", "300", "--out", str(judge_path))
    assert code == 0
    assert json.loads(out)["dim"] * 2 == len(rows[0]["x"])

    corr_path = tmp_path / "corr.json"
    code, out, _ = run_cli(capsys, "--vocab", "64", "correlate", "--pair", "linear",
                           "--coupling", "0.7", "--judge", str(judge_path),
                           "--prompts", "5", "--horizon", "8",
                           "--out", str(corr_path))
    assert code == 0
    fig = json.loads(corr_path.read_text())
    assert sum(fig["counts"]) == 5 * 8


def _write_trace(path, n_steps=6, v=8, prompt_len=3):
    rng = np.random.default_rng(0)
    records = []
    for step in range(n_steps):
        z = rng.normal(size=v)
        records.append(TraceRecord(step=step, prefix_len=prompt_len + step,
                                   sampled_token=int(np.argmax(z)),
                                   draft_logits=list(z), target_logits=list(z)))
    save_trace(records, path, header=TraceHeader(schema_version=1, vocab_size=v))
    return records


def test_trace_replay_matches(capsys, tmp_path):
    path = tmp_path / "trace.jsonl"
    records = _write_trace(path)
    code, out, _ = run_cli(capsys, "--gamma", "4", "trace-replay", "--trace", str(path))
    assert code == 0
    payload = json.loads(out)
    assert payload["match"] is True
    assert payload["tokens"] == [r.sampled_token for r in records]


def test_empty_trace_is_an_error(capsys, tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    code, _, err = run_cli(capsys, "trace-replay", "--trace", str(path))
    assert code == 1
    assert "error:" in err


def test_bad_policy_exits_one(capsys):
    code, _, err = run_cli(capsys, "generate", "--pair", "linear",
                           "--policy", "frobnicate:tau=1")
    assert code == 1
    assert "error:" in err


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "sdlab.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sweep" in proc.stdout
