import os

import pandas as pd
import pytest

from config import ConfigError
from conftest import PROJECT_ROOT, model_path
from harness import (AGGREGATE_COLUMNS, RUN_COLUMNS, ExperimentConfig, RunRecord, column_order_instability,
                     derive_seed, instability_demo, report, run_suite, score_kind_for)
from scoring import ScoreKind
from search import HC, HC_STABLE, TABU, TABU_STABLE

STABLE = (HC_STABLE, TABU_STABLE)


def small_config(output_dir, models=("asia", "gauss6"), **overrides):
    values = dict(models=[model_path(m) for m in models], sample_sizes=[300], n_randomizations=3,
                  time_limit_s=None, output_dir=str(output_dir), workers=1, use_sqlite=False)
    values.update(overrides)
    return ExperimentConfig(**values)


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    return out, run_suite(small_config(out), verbose=False)


def test_suite_writes_every_table(suite):
    out, result = suite
    assert len(result.records) == 2 * 1 * 4 * 3
    for name in ("runs.csv", "timings.csv", "aggregate.csv", "summary.csv", "series_asia.csv",
                 "series_gauss6.csv"):
        assert os.path.isfile(out / name)
    runs = pd.read_csv(out / "runs.csv")
    assert list(runs.columns) == RUN_COLUMNS
    assert "wall_time_s" not in runs.columns
    assert set(runs["status"]) == {"ok"}
    assert list(pd.read_csv(out / "aggregate.csv").columns) == AGGREGATE_COLUMNS
    with open(out / "runs.csv", "rb") as f:
        assert b"\r\n" not in f.read()


def test_stable_learners_have_zero_spread(suite):
    _, result = suite
    aggregate = result.tables["aggregate.csv"]
    for model in ("asia", "gauss6"):
        if (model, 300) in result.duplicates:
            continue
        rows = aggregate[(aggregate["model"] == model) & aggregate["algorithm"].isin(STABLE)]
        assert len(rows) == 2
        assert (rows["n_distinct_cpdags"] == 1).all()
        assert (rows["f1_sd"] == 0.0).all()
        assert (rows["nbic_sd"] == 0.0).all()


def test_baseline_rows(suite):
    _, result = suite
    aggregate = result.tables["aggregate.csv"]
    for model in ("asia", "gauss6"):
        empty = aggregate[(aggregate["model"] == model) & (aggregate["algorithm"] == "empty")]
        truth = aggregate[(aggregate["model"] == model) & (aggregate["algorithm"] == "truth")]
        assert len(empty) == len(truth) == 1
        assert truth["nbic_mean"].iloc[0] > empty["nbic_mean"].iloc[0]


def test_records_are_sorted_and_seeded(suite):
    _, result = suite
    keys = [(r.model, r.algorithm, r.randomization) for r in result.records]
    assert keys[0] == ("asia", "hc", 0)
    assert keys[-1] == ("gauss6", "tabu-stable", 2)
    assert all(0 <= r.seed < 2 ** 63 for r in result.records)


def test_rerun_is_byte_identical(suite, tmp_path):
    out, _ = suite
    run_suite(small_config(tmp_path), verbose=False)
    for name in ("runs.csv", "aggregate.csv", "summary.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_parallel_workers_match_serial(tmp_path):
    serial = run_suite(small_config(tmp_path / "one", models=("gauss6",), n_randomizations=2), verbose=False)
    parallel = run_suite(small_config(tmp_path / "two", models=("gauss6",), n_randomizations=2, workers=2),
                         verbose=False)
    assert [r.to_row() for r in serial.records] == [r.to_row() for r in parallel.records]


def test_report_needs_records(tmp_path):
    with pytest.raises(ValueError):
        report([], str(tmp_path))


def test_report_keeps_timeouts_out_of_aggregates(tmp_path):
    records = [
        RunRecord("m", 10, "hc", 0, 1, "ok", "abc", -5.0, -0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 2),
        RunRecord("m", 10, "hc", 1, 2, "timeout"),
    ]
    aggregate = report(records, str(tmp_path))["aggregate.csv"]
    row = aggregate.iloc[0]
    assert row["n_ok"] == 1 and row["n_timeout"] == 1
    assert row["f1_mean"] == 1.0 and row["f1_sd"] == 0.0


GRID_MODELS = ("asia", "sachs", "child", "gauss6")
CATEGORICAL_MODELS = ("asia", "sachs", "child")


@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    cfg = small_config(out, models=GRID_MODELS, sample_sizes=[100, 1000, 10000], n_randomizations=6)
    return run_suite(cfg, verbose=False)


def grid_rows(result, algorithms):
    aggregate = result.tables["aggregate.csv"]
    return aggregate[aggregate["algorithm"].isin(algorithms)]


@pytest.mark.slow
def test_grid_stable_learners_never_vary(grid):
    rows = grid_rows(grid, STABLE)
    assert len(rows) == len(GRID_MODELS) * 3 * 2
    for _, row in rows.iterrows():
        if (row["model"], row["n_rows"]) in grid.duplicates:
            continue
        assert row["n_timeout"] == 0
        assert row["n_distinct_cpdags"] == 1, (row["model"], row["n_rows"], row["algorithm"])
        assert row["f1_sd"] == 0.0 and row["bsf_sd"] == 0.0 and row["nbic_sd"] == 0.0


@pytest.mark.slow
def test_grid_baselines_vary_with_column_order(grid):
    rows = grid_rows(grid, (HC, TABU))
    rows = rows[rows["model"].isin(CATEGORICAL_MODELS)]
    assert (rows["f1_sd"] > 0).any()
    assert (rows["n_distinct_cpdags"] > 1).any()


@pytest.mark.slow
def test_grid_stable_learners_score_at_least_as_well(grid):
    aggregate = grid.tables["aggregate.csv"]
    mean_nbic = aggregate.groupby(["model", "algorithm"])["nbic_mean"].mean()
    for stable, baseline in ((TABU_STABLE, TABU), (HC_STABLE, HC)):
        wins = sum(1 for m in CATEGORICAL_MODELS if mean_nbic[(m, stable)] >= mean_nbic[(m, baseline)])
        assert wins >= 2, (stable, baseline)


def test_derive_seed():
    assert derive_seed(0, "asia", 100, 3) == derive_seed(0, "asia", 100, 3)
    assert derive_seed(0, "asia", 100, 3) != derive_seed(0, "asia", 100, 4)
    assert derive_seed(1, "asia", 100, 3) != derive_seed(0, "asia", 100, 3)
    assert 0 <= derive_seed(7, "x") < 2 ** 63


def test_experiment_file_resolves_models():
    cfg = ExperimentConfig.from_file(os.path.join(PROJECT_ROOT, "experiment.toml"))
    assert [os.path.basename(m) for m in cfg.models] == ["asia.json", "sachs.json", "child.json", "gauss6.json"]
    assert cfg.sample_sizes == [100, 1000, 10000]
    assert cfg.search_config().score_kind is ScoreKind.BIC


def test_experiment_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"models": ["asia"], "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"sample_sizes": [10]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"models": ["no-such-model"]})
    with pytest.raises(ConfigError):
        small_config(tmp_path, algorithms=["hc", "k2"])
    with pytest.raises(ConfigError):
        small_config(tmp_path, n_randomizations=0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(str(tmp_path / "missing.toml"))
    broken = tmp_path / "broken.toml"
    broken.write_text("models = [", encoding="utf-8")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(str(broken))


def test_score_kind_for_models(asia_model, gauss_model):
    assert score_kind_for(gauss_model, ScoreKind.BIC) is ScoreKind.BIC_G
    assert score_kind_for(asia_model, ScoreKind.BDEU) is ScoreKind.BDEU
    with pytest.raises(ConfigError):
        score_kind_for(asia_model, ScoreKind.BIC_G)


def test_column_order_changes_hc_result(collider_data):
    demos = [column_order_instability(collider_data, seed) for seed in range(30)]
    assert any(demo.differ for demo in demos)
    assert all(demo.column_orders[0] == ["A", "B", "C"] for demo in demos)


def test_instability_demo_output(asia_model):
    demo = instability_demo(asia_model, 500, seed=1, tries=5)
    payload = demo.to_dict()
    assert len(payload["runs"]) == 2
    assert payload["runs"][0]["column_order"] == sorted(asia_model.labels)
    assert sorted(payload["runs"][1]["column_order"]) == sorted(asia_model.labels)
    with pytest.raises(ValueError):
        instability_demo(asia_model, 500, seed=1, tries=0)
