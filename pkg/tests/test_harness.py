import csv
import io
import json

import numpy as np
import pytest

from loadcast.baselines import wma_cross_validate
from loadcast.harness import (
    ALL_MODELS,
    ConfigError,
    ExperimentConfig,
    LogUniform,
    cross_validate_baseline,
    derive_seed,
    enumerate_space,
    parse_space,
    random_grid_search,
    run_benchmark,
    sample_configs,
    strip_time_columns,
    table1_csv,
    table2_csv,
    table3_csv,
)
from loadcast.metrics import mape, mpe

# the short series has no holiday after burn-in, so MQR sees a constant column
pytestmark = pytest.mark.filterwarnings("ignore:design matrix is rank deficient")

SMALL = {"synthetic": {"n_hours": 24 * 60}}


def small_config(**kw):
    base = dict(dataset=SMALL, epoch_budgets=[2, 3], search_budget=2, search_epochs=1)
    base.update(kw)
    return ExperimentConfig(**base)


# ---- search ---------------------------------------------------------------------


def test_single_point_space():
    res = random_grid_search({"a": [7]}, 1, 0, lambda i, p: p["a"])
    assert res.best == {"a": 7} and len(res.trials) == 1


def test_full_budget_equals_exhaustive():
    space = {"a": [1, 2, 3], "b": [0.5, 1.5]}
    score = lambda p: (p["a"] - 2.2) ** 2 + p["b"]
    res = random_grid_search(space, 6, 4, lambda i, p: score(p))
    assert res.best == min(enumerate_space(space), key=score)
    assert sorted(map(str, (t.params for t in res.trials))) == sorted(map(str, enumerate_space(space)))


def test_search_is_deterministic():
    space = {"lr": LogUniform(1e-4, 1e-1), "b": [16, 32, 64]}
    a = random_grid_search(space, 5, 11, lambda i, p: p["lr"])
    b = random_grid_search(space, 5, 11, lambda i, p: p["lr"])
    assert [t.params for t in a.trials] == [t.params for t in b.trials]
    assert a.best == b.best
    assert all(1e-4 <= t.params["lr"] <= 1e-1 for t in a.trials)


def test_ties_go_to_earliest_and_failures_score_inf():
    def objective(i, p):
        if i == 0:
            raise ValueError("boom")
        return 1.0

    res = random_grid_search({"a": [1, 2, 3]}, 3, 0, objective)
    assert res.trials[0].score == float("inf") and "boom" in res.trials[0].error
    assert res.best == res.trials[1].params


def test_budget_clamped_with_warning():
    with pytest.warns(RuntimeWarning, match="clamping"):
        configs = sample_configs({"a": [1, 2]}, 5, 0)
    assert len(configs) == 2


def test_empty_space_and_bad_ranges():
    with pytest.raises(ConfigError):
        sample_configs({}, 1, 0)
    with pytest.raises(ConfigError):
        parse_space({"lr": {"loguniform": [0, 1]}})
    with pytest.raises(ConfigError):
        parse_space({"lr": []})


def test_derive_seed_stable_and_distinct():
    assert derive_seed(42, "MLP", 0) == derive_seed(42, "MLP", 0)
    assert derive_seed(42, "MLP", 0) != derive_seed(42, "MLP", 1)
    assert 0 <= derive_seed(1) < 2**63


# ---- baseline selection ----------------------------------------------------------


def test_wma_grid_matches_sweep(year_split):
    grid = [{"alpha": a / 20} for a in range(21)]
    res = cross_validate_baseline("WMA", grid, year_split)
    best, sweep = wma_cross_validate(year_split.validation)
    assert res.best["alpha"] == best.alpha
    assert res.best_score == pytest.approx(dict(sweep)[best], rel=1e-12)


def test_tree_grid_picks_minimum(year_split):
    grid = [{"min_leaf": k} for k in (4, 8, 16)]
    res = cross_validate_baseline("RT", grid, year_split)
    scores = [t.score for t in res.trials]
    assert res.best_score == min(scores)
    assert res.best == grid[scores.index(min(scores))]


def test_grid_of_one_and_empty(year_split):
    assert cross_validate_baseline("MLR", [{}], year_split).best == {}
    with pytest.raises(ConfigError):
        cross_validate_baseline("MLR", [], year_split)


# ---- config ----------------------------------------------------------------------


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.models == list(ALL_MODELS) and len(ALL_MODELS) == 16
    assert cfg.search_budget == 20 and cfg.budgets == [200, 400] and cfg.seed == 42


@pytest.mark.parametrize(
    "kw, message",
    [
        ({"models": ["GPT"]}, "unknown model"),
        ({"search_budget": 0}, "search_budget"),
        ({"epoch_budgets": []}, "epoch_budgets"),
        ({"dataset": {}}, "dataset"),
        ({"train": {"dropout": 0.1}}, "train setting"),
        ({"spaces": {"MLP": {"lr": "fast"}}}, "search dimension"),
    ],
)
def test_config_validation(kw, message):
    with pytest.raises(ConfigError, match=message):
        ExperimentConfig(**kw)


def test_config_json_round_trip_and_hash(tmp_path):
    cfg = small_config(models=["MLR", "MLP"])
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    back = ExperimentConfig.load(p)
    assert back == cfg and back.config_hash() == cfg.config_hash()
    assert small_config(seed=1).config_hash() != cfg.config_hash()


def test_config_unknown_field():
    with pytest.raises(ConfigError, match="unknown config field"):
        ExperimentConfig.from_dict({"sead": 3})


def test_env_seed_override():
    cfg = small_config()
    assert cfg.with_env_seed({"LOADCAST_SEED": "7"}).seed == 7
    assert cfg.with_env_seed({}).seed == cfg.seed
    with pytest.raises(ConfigError):
        cfg.with_env_seed({"LOADCAST_SEED": "x"})


# ---- benchmark -------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    cfg = small_config(models=["WMA", "MLR", "MQR", "RT", "SVR", "MLP", "DNN-SA3", "CNN-LSTM"])
    return run_benchmark(cfg, out), out


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_table_shapes(small_run):
    result, out = small_run
    t1 = read_csv(out / "table1.csv")
    assert [r["algorithm"] for r in t1] == ["WMA", "MLR", "MQR", "RT", "SVR"]
    t2 = read_csv(out / "table2.csv")
    assert [r["algorithm"] for r in t2] == ["MLP", "DNN-SA3", "CNN-LSTM"]
    assert set(t2[0]) >= {"mape_2", "mpe_2", "time_s_2", "mape_3", "mpe_3", "time_s_3"}
    t3 = read_csv(out / "table3.csv")
    assert len(t3) == 8 and list(t3[0])[1:] == ["sun", "mon", "tue", "wed", "thu", "fri", "sat"]


def test_tables_match_persisted_predictions(small_run):
    result, out = small_run
    t1 = {r["algorithm"]: r for r in read_csv(out / "table1.csv")}
    t2 = {r["algorithm"]: r for r in read_csv(out / "table2.csv")}
    for name, row in t1.items():
        p = read_csv(out / "predictions" / f"{name}.csv")
        y = np.array([float(r["actual"]) for r in p])
        yhat = np.array([float(r["predicted"]) for r in p])
        assert abs(float(row["mape"]) - mape(y, yhat)) < 1e-9
        assert abs(float(row["mpe"]) - mpe(y, yhat)) < 1e-9
    for name, row in t2.items():
        for b in (2, 3):
            p = read_csv(out / "predictions" / f"{name}_e{b}.csv")
            y = np.array([float(r["actual"]) for r in p])
            yhat = np.array([float(r["predicted"]) for r in p])
            assert abs(float(row[f"mape_{b}"]) - mape(y, yhat)) < 1e-9


def test_sequence_predictions_drop_warmup(small_run):
    result, out = small_run
    n_test = result.split_sizes[2]
    assert len(read_csv(out / "predictions" / "CNN-LSTM_e3.csv")) == n_test - 7
    assert len(read_csv(out / "predictions" / "MLP_e3.csv")) == n_test


def test_one_test_pass_per_final_model(small_run):
    result, _ = small_run
    expected = {"WMA", "MLR", "MQR", "RT", "SVR"} | {f"{m}@{b}" for m in ("MLP", "DNN-SA3", "CNN-LSTM") for b in (2, 3)}
    assert result.test_accesses == {k: 1 for k in expected}


def test_result_json(small_run):
    result, out = small_run
    doc = json.loads((out / "result.json").read_text())
    assert doc["config_hash"] == result.config.config_hash()
    assert doc["environment"] and doc["split_sizes"] == list(result.split_sizes)
    mlp = next(m for m in doc["models"] if m["name"] == "MLP")
    assert mlp["status"] == "ok" and len(mlp["trials"]) == 2 and "learning_rate" in mlp["params"]
    assert "MLP" in doc["search_spaces"] and "RT" in doc["baseline_grids"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failure_is_isolated(tmp_path):
    cfg = small_config(models=["MLR", "MLP"], spaces={"MLP": {"learning_rate": [1e6], "batch_size": [16]}})
    result = run_benchmark(cfg, tmp_path)
    mlp = result.outcome("MLP")
    assert not mlp.ok and result.outcome("MLR").ok
    assert "error" in table2_csv(result)
    assert "MLR" in table1_csv(result)
    assert table3_csv(result).splitlines()[2] == "MLP,,,,,,,"


def test_rerun_is_identical(small_run, tmp_path):
    result, out = small_run
    again = run_benchmark(result.config, tmp_path)
    for name in ("table1.csv", "table2.csv", "table3.csv"):
        assert strip_time_columns((out / name).read_text()) == strip_time_columns((tmp_path / name).read_text())
    a = sorted(p.name for p in (out / "predictions").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "predictions").iterdir())
    for name in a:
        assert (out / "predictions" / name).read_bytes() == (tmp_path / "predictions" / name).read_bytes()
    assert again.config_hash == result.config_hash
