"""
Tests for gain matrices, cumulative series and the manifest.
"""
import json

import numpy as np
import pandas as pd
import pytest

from backend.services.reporting import (
    OVERALL_BEST,
    ROW_BEST,
    best_spec,
    cumulative_lpl_frame,
    gain_matrix,
    qs_over_time,
    render_text,
    write_gain_matrix,
    write_manifest,
    write_report,
)
from backend.services.scoring import QuantileGrid
from backend.utils.common import sha256_file
from backend.utils.errors import ScoringError
from backend.tests.helpers import panel_of


@pytest.fixture
def scores():
    return panel_of({
        "benchmark": -1.0,
        "svd:industry:EA": -0.9,
        "svd:industry:Big6": -0.8,
        "svd:consumer:EA": -0.95,
        "svd:consumer:Big9": -0.8,
        "pca:all:Big9:5": -0.85,
    })


def test_gain_matrix_layout_and_markers(scores):
    matrix = gain_matrix(scores, "mse", "headline", 1)
    assert list(matrix.values.index) == ["main", "building", "consumer", "industry", "retail", "services", "all"]
    assert list(matrix.values.columns) == ["EA", "Big6", "Big9", "Big12", "All"]
    assert matrix.values.loc["industry", "EA"] == pytest.approx(10.0)
    assert matrix.values.loc["industry", "Big6"] == pytest.approx(20.0)
    assert np.isnan(matrix.values.loc["main", "EA"])
    assert matrix.row_best["industry"] == ["Big6"]
    assert matrix.row_best["main"] == []
    # industry/Big6 and consumer/Big9 tie for the overall best
    assert matrix.overall_tied
    assert set(matrix.overall_best) == {("industry", "Big6"), ("consumer", "Big9")}


def test_pca_matrix_only_holds_pca_specs(scores):
    matrix = gain_matrix(scores, "lpl", "headline", 1, kind="pca")
    assert matrix.values.loc["all", "Big9"] == pytest.approx(1.5)
    assert matrix.values.notna().sum().sum() == 1


def test_gain_matrix_errors(scores):
    with pytest.raises(ScoringError):
        gain_matrix(scores, "median", "headline", 1)
    with pytest.raises(ScoringError):
        gain_matrix(scores[scores["spec"] != "benchmark"], "mse", "headline", 1)


def test_render_text_marks_best_cells(scores):
    text = render_text(gain_matrix(scores, "mse", "headline", 1))
    assert text.splitlines()[0] == "headline h=1 metric=mse"
    industry = next(line for line in text.splitlines() if line.startswith("industry"))
    assert "10.00" in industry and f"20.00{OVERALL_BEST}" in industry
    assert "overall tie" in text

    single = panel_of({"benchmark": -1.0, "svd:industry:EA": -0.9, "svd:industry:Big6": -0.95})
    text = render_text(gain_matrix(single, "mse", "headline", 1))
    industry = next(line for line in text.splitlines() if line.startswith("industry"))
    assert f"10.00{OVERALL_BEST}" in industry
    assert f"5.00{ROW_BEST}" not in industry


def test_write_gain_matrix(tmp_path, scores):
    paths = write_gain_matrix(gain_matrix(scores, "mse", "headline", 1), tmp_path)
    assert [p.name for p in paths] == ["gains_headline_mse_h1.csv", "gains_headline_mse_h1.txt"]
    frame = pd.read_csv(paths[0], index_col="category")
    assert frame.loc["industry", "row_best"] == "Big6"
    assert frame.loc["consumer", "overall_best"] == "Big9"


def test_best_spec_breaks_ties_in_sorted_order(scores):
    assert best_spec(scores, "headline", 1, "mse") == "svd:consumer:Big9"
    assert best_spec(scores, "headline", 1, "mse", kind="pca") == "pca:all:Big9:5"
    assert best_spec(scores, "headline", 3, "mse") is None


def test_cumulative_lpl_frame(scores):
    frame = cumulative_lpl_frame(scores, "headline", 1)
    np.testing.assert_allclose(frame["benchmark"], -np.arange(1, 11))
    np.testing.assert_allclose(frame["rel:svd:industry:EA"], 0.1 * np.arange(1, 11))
    np.testing.assert_allclose(frame["best_svd"], frame["rel:svd:consumer:Big9"])
    np.testing.assert_allclose(frame["best_pca"], frame["rel:pca:all:Big9:5"])


def test_qs_over_time(scores):
    heat = qs_over_time(scores, "headline", "svd:industry:EA", 1)
    assert heat.shape == (19, 10)
    np.testing.assert_allclose(heat.iloc[:, -1], -1.0)
    with pytest.raises(ScoringError):
        qs_over_time(scores, "headline", "svd:retail:EA", 1)


def test_write_report_and_manifest(tmp_path, scores):
    written = write_report(scores, tmp_path, metrics=("mse", "lpl"), grid=QuantileGrid())
    names = {p.name for p in written}
    assert "gains_long.csv" in names
    assert "gains_headline_lpl_h1.txt" in names
    assert "cumlpl_headline_h1.csv" in names
    assert "qsheat_headline_svd_industry_ea_h1.csv" in names
    assert all(p.exists() for p in written)

    manifest = write_manifest(tmp_path, written, plan_hash="p", data_hash="d", seed=3, version="0.1.0")
    content = json.loads(manifest.read_text())
    assert content["seed"] == 3
    assert content["outputs"]["gains_long.csv"] == sha256_file(tmp_path / "gains_long.csv")
    assert list(content["outputs"]) == sorted(content["outputs"])


def test_write_report_on_empty_scores(tmp_path):
    assert write_report(pd.DataFrame(), tmp_path) == []


@pytest.mark.parametrize("metric, expected", [("mse", 0.0), ("lpl", 0.0), ("crps_tails", 0.0), ("qs", 0.0),
                                              ("pl_ratio", 1.0)])
def test_benchmark_only_matrix_is_self_relative(metric, expected):
    matrix = gain_matrix(panel_of({"benchmark": -1.0}), metric, "headline", 1)
    assert matrix.values.shape == (7, 5)
    assert (matrix.values == expected).all().all()
    assert matrix.overall_best == []
    assert all(cols == [] for cols in matrix.row_best.values())
    assert "-0.00" not in render_text(matrix)
