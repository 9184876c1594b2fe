"""
Tests for plan parsing and the recursive forecasting harness.
"""
import numpy as np
import pandas as pd
import pytest

from backend.ingestion.panel import PanelDataset
from backend.services.data_access.forecast_store import ForecastStore
from backend.services.harness import (
    ExperimentPlan,
    ModelSpec,
    dry_run,
    load_plan,
    parse_spec_line,
    plan_origins,
    run_experiment,
    run_unit,
)
from backend.services.model import McmcConfig
from backend.services.registry import registry
from backend.services.scoring import QuantileGrid
from backend.utils.errors import ConfigError, DesignError
from backend.tests.helpers import SMALL_PLAN


def test_origins_span_the_holdout():
    plan = ExperimentPlan(targets=["headline"], horizons=[3], initial_window=("2002-01", "2010-12"),
                          holdout_end="2020-12")
    origins = plan_origins(plan)
    assert len(origins) == 118
    assert origins[0] == pd.Period("2010-12", "M")
    assert origins[-1] == pd.Period("2020-09", "M")


def test_origins_need_room_for_the_horizon():
    plan = ExperimentPlan(targets=["headline"], horizons=[6], initial_window=("2002-01", "2010-12"),
                          holdout_end="2011-03")
    with pytest.raises(DesignError):
        plan_origins(plan)


@pytest.mark.parametrize("text, spec_id", [
    ("benchmark", "benchmark"),
    ("svd industry Big9", "svd:industry:Big9"),
    ("pca all EA 3", "pca:all:EA:3"),
    ("pca consumer All", "pca:consumer:All:5"),
])
def test_parse_spec_line(text, spec_id):
    assert parse_spec_line(text).spec_id == spec_id


@pytest.mark.parametrize("text", ["svd industry", "svd farming EA", "pca all Big7 2", "ridge all EA", "pca all EA x"])
def test_parse_spec_line_errors(text):
    with pytest.raises(ConfigError):
        parse_spec_line(text, line=4)


def test_load_plan(plan_file):
    plan = load_plan(plan_file)
    assert plan.targets == ["headline"]
    assert plan.horizons == [1, 3]
    assert [s.spec_id for s in plan.model_specs] == ["benchmark", "svd:industry:Big6", "pca:all:Big9:2"]
    assert plan.mcmc == McmcConfig(burn=20, retain=30)
    assert plan.seed == 7
    assert plan.survey_lags == (0, 1)
    assert plan.plan_hash() == load_plan(plan_file).plan_hash()


@pytest.mark.parametrize("replace, addition, line", [
    ("spec = benchmark\n", "", None),
    ("", "wobble = 1\n", 12),
    ("", "c0 = -1\n", 12),
    ("", "survey_lags = 2 3\n", 12),
    ("spec = svd industry Big6\n", "spec = svd industry Big66\n", 11),
])
def test_bad_plans(tmp_path, replace, addition, line):
    text = SMALL_PLAN.replace(replace, "") if replace else SMALL_PLAN
    path = tmp_path / "bad.plan"
    path.write_text(text + addition)
    with pytest.raises(ConfigError) as exc:
        load_plan(path)
    if line is not None:
        assert exc.value.line == line


def test_registry_knows_every_kind():
    assert set(registry.list_kinds()) >= {"benchmark", "svd", "pca"}
    with pytest.raises(ConfigError):
        registry.get_builder("lasso")


def test_dry_run_dimensions(plan_file, small_panel):
    table = dry_run(load_plan(plan_file), small_panel)
    assert len(table) == 1 * 3 * 2 * 2
    first = table[(table["which"] == "first") & (table["horizon"] == 3)].set_index("spec")
    assert first.loc["benchmark", "T"] == 25
    assert first.loc["benchmark", "K"] == 0
    assert first.loc["svd:industry:Big6", "K"] == 2 * 3
    assert first.loc["pca:all:Big9:2", "K"] == 0
    assert first.loc["pca:all:Big9:2", "M"] == first.loc["benchmark", "M"] + 2


def test_unknown_target_is_a_config_error(tmp_path, small_panel):
    path = tmp_path / "bad.plan"
    path.write_text(SMALL_PLAN.replace("targets = headline", "targets = unemployment"))
    with pytest.raises(ConfigError):
        run_experiment(load_plan(path), small_panel)


def test_holdout_beyond_data_is_a_config_error(tmp_path, small_panel):
    path = tmp_path / "long.plan"
    path.write_text(SMALL_PLAN.replace("holdout_end = 2005-12", "holdout_end = 2007-12"))
    with pytest.raises(ConfigError):
        dry_run(load_plan(path), small_panel)


def test_run_experiment_issues_every_forecast(plan_file, small_panel):
    plan = load_plan(plan_file)
    store = run_experiment(plan, small_panel)
    origins = plan_origins(plan)
    assert len(origins) == 16
    assert len(store) == 3 * 16 * 2
    assert store.failures() == []

    dist = store.get("headline", "svd:industry:Big6", origins[0], 3)
    assert dist.n_components == plan.mcmc.retain
    assert dist.target_period == origins[0] + 3
    assert dist.realized == pytest.approx(small_panel.frame.at[origins[0] + 3, "headline"])
    assert (dist.K, dist.T) == (6, 25)
    assert store.get("headline", "benchmark", origins[-1], 1).T == 25 + 15 + 2


def test_thread_count_does_not_change_results(plan_file, small_panel):
    plan = load_plan(plan_file)
    alphas = QuantileGrid().alphas
    serial = run_experiment(plan, small_panel, threads=1).summary_frame(alphas)
    parallel = run_experiment(plan, small_panel, threads=8).summary_frame(alphas)
    pd.testing.assert_frame_equal(serial, parallel)


@pytest.mark.parametrize("kind_line", ["benchmark", "svd all Big9", "pca all Big9 2"])
def test_post_origin_data_does_not_leak(plan_file, small_panel, kind_line):
    """Shuffling every row after the origin leaves the issued forecast bit-identical."""
    plan = load_plan(plan_file)
    spec = parse_spec_line(kind_line)
    origins = plan_origins(plan)
    i, origin = 4, origins[4]
    frame = small_panel.frame.copy()
    after = frame.index > origin
    rng = np.random.default_rng(0)
    frame.loc[after] = frame.loc[after].to_numpy()[rng.permutation(int(after.sum()))]
    shuffled = PanelDataset(frame, small_panel.meta)

    for horizon in plan.horizons:
        a = run_unit(plan, small_panel, "headline", spec, i, origin, horizon)
        b = run_unit(plan, shuffled, "headline", spec, i, origin, horizon)
        np.testing.assert_array_equal(a.component_means, b.component_means)
        np.testing.assert_array_equal(a.component_vars, b.component_vars)


def test_seed_changes_draws(plan_file, small_panel):
    plan = load_plan(plan_file)
    a = run_experiment(plan, small_panel).distributions()[0]
    b = run_experiment(plan.model_copy(update={"seed": 8}), small_panel).distributions()[0]
    assert not np.allclose(a.component_means, b.component_means)


def test_failed_units_are_recorded(tmp_path, small_panel):
    """Asking for more factors than survey columns fails that spec only."""
    path = tmp_path / "pca.plan"
    path.write_text(SMALL_PLAN.replace("spec = pca all Big9 2", "spec = pca industry EA 9"))
    store = ForecastStore()
    run_experiment(load_plan(path), small_panel, store=store)
    failures = store.failures()
    assert len(failures) == 16 * 2
    assert {f.key.spec for f in failures} == {"pca:industry:EA:9"}
    assert all("DesignError" in f.error for f in failures)
    assert len(store) == 2 * 16 * 2


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(kind="benchmark", category="all")
    with pytest.raises(ValueError):
        ModelSpec(kind="svd", category="all", group="EA", factors=2)
    assert ModelSpec(kind="pca", category="all", group="EA").factors == 5
