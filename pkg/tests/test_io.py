import json

import numpy as np
import pytest

from approxloo.datasets import fixture_parameters, load_fixture
from approxloo.errors import ConfigError
from approxloo.estimators import PointwiseLogLik, compare_models, elpd_psis_loo, waic
from approxloo.io import emit_reports, ingest_csv, parse_config, read_elpd_table
from approxloo.pipeline import ReportBundle


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_drops_incomplete_rows(tmp_path):
    path = write(tmp_path, "d.csv", "a,b,y\n1,2,1\n3,,0\n5,6,0\n")
    data, dropped = ingest_csv(path, "y", ["a", "b"])
    assert data.n == 2 and dropped == 1
    np.testing.assert_array_equal(data.X, [[1, 2], [5, 6]])
    np.testing.assert_array_equal(data.y, [1, 0])
    assert data.names == ("a", "b")


def test_ingest_yes_no_outcome_and_unused_columns(tmp_path):
    path = write(tmp_path, "d.csv", 'a,note,y\n1,"x, y",Yes\n2,NA,no\nfoo,z,NO\n4,q,NA\n')
    data, dropped = ingest_csv(path, "y", ["a"])
    np.testing.assert_array_equal(data.y, [1, 0])
    assert dropped == 2


def test_ingest_errors(tmp_path):
    path = write(tmp_path, "d.csv", "a,y\n1,maybe\n")
    with pytest.raises(ConfigError):
        ingest_csv(path, "y", ["a"])
    with pytest.raises(ConfigError):
        ingest_csv(write(tmp_path, "e.csv", "a,y\n1,1\n"), "y", ["b"])
    with pytest.raises(ConfigError):
        ingest_csv(write(tmp_path, "f.csv", "a,y\n,1\n"), "y", ["a"])
    with pytest.raises(ConfigError):
        ingest_csv(tmp_path / "missing.csv", "y", ["a"])
    with pytest.raises(ConfigError):
        ingest_csv(write(tmp_path, "g.csv", "a,y\n1,2\n"), "y", ["a"])


def test_fixture_matches_its_metadata():
    data = load_fixture()
    meta = fixture_parameters()
    assert data.n == 200 and data.names == ("x1", "x2", "x3")
    assert len(meta["theta"]) == 4 and "seed" in meta


CONFIG = """
# comment
dataset = data.csv
outcome = y
estimators = psis_loo, waic, kfold5   ; inline comment
inference = mcmc
subsample_m = 0.1
seed = 17
standardize = yes

[model small]
predictors = a

[model big]
predictors = a, b
prior_scale = 1.5
"""


def test_parse_config(tmp_path):
    cfg = parse_config(CONFIG, base_dir=tmp_path)
    assert cfg.dataset_path == str(tmp_path / "data.csv")
    assert cfg.estimators == ("psis_loo", "waic", "kfold")
    assert cfg.kfold_k == 5 and cfg.seed == 17 and cfg.standardize
    assert [m.name for m in cfg.models] == ["small", "big"]
    assert cfg.models[1].predictors == ["a", "b"] and cfg.models[1].prior_scale == 1.5
    assert cfg.subsample_size(3140) == 314


def test_subsample_size_forms(tmp_path):
    base = "dataset = d.csv\noutcome = y\n[model A]\npredictors = a\n"
    assert parse_config("subsample_m = 157\n" + base).subsample_size(3140) == 157
    assert parse_config(base).subsample_size(100) is None
    with pytest.raises(ConfigError):
        parse_config("subsample_m = 2.5\n" + base)


@pytest.mark.parametrize(
    "text",
    [
        "outcome = y\n[model A]\npredictors = a\n",
        "dataset = d.csv\noutcome = y\n",
        "dataset = d.csv\noutcome = y\nestimators = magic\n[model A]\npredictors = a\n",
        "dataset = d.csv\noutcome = y\nflavour = 3\n[model A]\npredictors = a\n",
        "dataset = d.csv\noutcome = y\n[model A]\npredictors = a\n[model A]\npredictors = b\n",
        "dataset = d.csv\noutcome = y\n[other]\nx = 1\n",
        "dataset = d.csv\noutcome = y\ninference = vb\n[model A]\npredictors = a\n",
        "dataset = d.csv\noutcome = y\nchains = four\n[model A]\npredictors = a\n",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def small_bundle(tmp_path):
    cfg = parse_config(CONFIG, base_dir=tmp_path)
    rng = np.random.default_rng(0)
    reports = {}
    for name in ("small", "big"):
        ll = PointwiseLogLik(-rng.gamma(2.0, 0.3, size=(30, 1)) + rng.normal(0, 0.05, size=(30, 200)))
        reports[name] = {"psis_loo": elpd_psis_loo(ll, model=name), "waic": waic(ll, model=name)}
    bundle = ReportBundle(cfg, reports=reports, n=30, dropped_rows=0)
    for est in ("psis_loo", "waic"):
        bundle.comparisons[est] = compare_models([reports["small"][est], reports["big"][est]])
    for name in reports:
        rep = reports[name]["psis_loo"]
        bundle.khat[name] = (rep.observation_index, rep.khat)
    return bundle


def test_emit_round_trip(tmp_path):
    bundle = small_bundle(tmp_path)
    paths = emit_reports(bundle, tmp_path / "out")
    names = sorted(p.name for p in paths)
    assert names == ["comparison.csv", "elpd_table.csv", "khat_big.csv", "khat_small.csv", "run_manifest.json"]
    table = read_elpd_table(tmp_path / "out" / "elpd_table.csv")
    for model, by_est in bundle.reports.items():
        for est, rep in by_est.items():
            row = table[(model, est)]
            assert abs(row["elpd_sum"] - rep.elpd_sum) < 1e-9
            assert abs(row["se_loo"] - rep.se_loo) < 1e-9
    raw = (tmp_path / "out" / "elpd_table.csv").read_bytes()
    assert b"\r\n" in raw
    manifest = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
    assert manifest["seed"] == 17 and manifest["config"]["seed"] == 17


def test_emit_empty_bundle_writes_only_manifest(tmp_path):
    cfg = parse_config(CONFIG, base_dir=tmp_path)
    paths = emit_reports(ReportBundle(cfg), tmp_path / "empty")
    assert [p.name for p in paths] == ["run_manifest.json"]
    assert sorted(p.name for p in (tmp_path / "empty").iterdir()) == ["run_manifest.json"]


def test_emit_reports_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError) as info:
        emit_reports(small_bundle(tmp_path), blocker / "sub")
    assert str(blocker) in str(info.value)
