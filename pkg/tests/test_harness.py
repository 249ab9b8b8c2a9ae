import json

import numpy as np
import pytest

from sdlab.errors import ConfigError
from sdlab.harness import (
    CSV_HEADER,
    SweepSpec,
    correlation_figure_data,
    emit_report,
    figure_data_to_json,
    load_report,
    run_sweep,
)
from sdlab.judge import JudgeModel
from sdlab.models import ModelPairSpec, synthetic_pair
from sdlab.policies import KlThreshold, Lossless


@pytest.fixture(scope="module")
def pair():
    return synthetic_pair(ModelPairSpec(vocab_size=24, feature_dim=8,
                                        coupling=0.7, seed=0))


@pytest.fixture(scope="module")
def rows(pair):
    draft, target = pair
    spec = SweepSpec(policies=[Lossless(), KlThreshold(tau=0.5)],
                     seeds=[0, 1], gamma=4, max_new_tokens=40)
    return run_sweep(draft, target, spec)


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(policies=[], seeds=[0])
    with pytest.raises(ConfigError):
        SweepSpec(policies=[Lossless()], seeds=[])


def test_run_sweep_shape(rows):
    assert [r.policy for r in rows] == ["lossless", "kl:tau=0.5,mask=0.9"]
    assert rows[0].tau is None
    assert rows[1].tau == 0.5
    for row in rows:
        assert len(row.per_seed) == 2
        assert 1.0 <= row.mat_mean <= 5.0
        assert row.mat_std >= 0.0


def test_run_sweep_deterministic(pair):
    draft, target = pair
    spec = SweepSpec(policies=[Lossless()], seeds=[0], gamma=4,
                     max_new_tokens=20)
    a = run_sweep(draft, target, spec)[0].to_dict()
    b = run_sweep(draft, target, spec)[0].to_dict()
    assert a == b


def test_row_aggregates_match_numpy(rows):
    row = rows[0]
    mats = [m.mat for m in row.per_seed]
    assert row.mat_mean == pytest.approx(np.mean(mats))
    assert row.mat_std == pytest.approx(np.std(mats))
    d = row.to_dict()
    assert d["per_seed_mat"] == mats
    assert d["seed_count"] == 2


def test_emit_csv(rows, tmp_path):
    path = tmp_path / "sweep.csv"
    emit_report(rows, "csv", path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",") == CSV_HEADER
    assert len(lines) == 1 + len(rows)
    first = lines[1].split(",")
    assert first[0] == "lossless"
    assert first[1] == ""  # lossless has no threshold column value
    assert float(first[3]) == pytest.approx(rows[0].mat_mean, abs=1e-6)


def test_emit_json_round_trip(rows, tmp_path):
    path = tmp_path / "sweep.json"
    emit_report(rows, "json", path)
    loaded = load_report(path)
    assert loaded == [r.to_dict() for r in rows]


def test_emit_unknown_format(rows, tmp_path):
    with pytest.raises(ConfigError):
        emit_report(rows, "xml", tmp_path / "x")


def test_re_emission_byte_identical(rows, tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(rows, "csv", p1)
    emit_report(rows, "csv", p2)
    assert p1.read_bytes() == p2.read_bytes()
    j1, j2 = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(rows, "json", j1)
    emit_report(rows, "json", j2)
    assert j1.read_bytes() == j2.read_bytes()


def test_correlation_figure_data_counts(pair):
    draft, target = pair
    judge = JudgeModel(w=np.zeros(16), b=0.0, feature_dim=8)
    prefixes = [[0], [0, 1], [0, 1, 2], [3, 4]]
    rep = correlation_figure_data(draft, target, judge, prefixes, n_bins=5)
    assert sum(rep.counts) == len(prefixes)
    assert set(rep.extra_means) == {"entropy_target", "entropy_draft"}
    # constant judge puts everything in one bin
    assert sum(1 for c in rep.counts if c > 0) == 1
    assert rep.rank_correlation is None


def test_figure_data_to_json(pair, tmp_path):
    draft, target = pair
    judge = JudgeModel(w=np.linspace(-0.2, 0.2, 16), b=0.0, feature_dim=8)
    prefixes = [[int(i)] for i in range(12)]
    rep = correlation_figure_data(draft, target, judge, prefixes)
    path = tmp_path / "fig.json"
    payload = figure_data_to_json(rep, path=path)
    assert json.loads(payload) == json.loads(path.read_text())
    assert len(json.loads(payload)["mean_kl"]) == 10
