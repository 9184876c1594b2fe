"""
Builders for hand-made panels, designs and score panels shared by the test modules.
"""
import numpy as np
import pandas as pd

from backend.ingestion.panel import PanelDataset, Role, StandardizationStats, VariableMeta
from backend.services.model import RegressionDesign
from backend.services.predictive import PredictiveDistribution
from backend.services.scoring import QuantileGrid, score_distribution

ORIGIN = pd.Period("2012-01", "M")

SMALL_PLAN = """\
# small recursive experiment
targets = headline
horizons = 1 3
spec = benchmark
spec = svd industry Big6
spec = pca all Big9 2
initial_window = 2002-01 2004-06
holdout_end = 2005-12
burn = 20
retain = 30
seed = 7
"""


def make_design(y, X, Z=None, mean=0.0, std=1.0, origin="2010-01", horizon=1) -> RegressionDesign:
    """RegressionDesign around raw arrays, for sampler-level tests."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    T = y.shape[0]
    Z = np.empty((T, 0)) if Z is None else np.asarray(Z, dtype=float)
    origin = pd.Period(origin, freq="M")
    response = "y@F1"
    return RegressionDesign(
        y=y, X=X, Z=Z, horizon=horizon,
        stats=StandardizationStats(mean={response: mean}, std={response: std}),
        target="y", response_key=response,
        x_columns=[f"x{j}" for j in range(X.shape[1])], z_columns=[f"z{j}" for j in range(Z.shape[1])],
        periods=pd.period_range(end=origin - horizon, periods=T, freq="M"),
        x_new=np.zeros(X.shape[1]), z_new=np.zeros(Z.shape[1]), origin=origin,
    )


def tiny_panel(columns, start="2005-01") -> PanelDataset:
    """Panel from {id: (role, values)}; survey ids get category industry, group EA."""
    meta, data = {}, {}
    for var_id, (role, values) in columns.items():
        if role == Role.SURVEY:
            meta[var_id] = VariableMeta(name=var_id, role=role, survey_category="industry",
                                        country_group_tags=frozenset({"EA", "Big6", "Big9", "Big12", "All"}))
        else:
            meta[var_id] = VariableMeta(name=var_id, role=role)
        data[var_id] = np.asarray(values, dtype=float)
    n = len(next(iter(data.values())))
    index = pd.period_range(start=start, periods=n, freq="M")
    return PanelDataset(frame=pd.DataFrame(data, index=index), meta=meta)


def mixture(means, variances=None, realized=0.0, spec="benchmark", origin=ORIGIN):
    means = np.atleast_1d(np.asarray(means, dtype=float))
    variances = np.ones_like(means) if variances is None else np.atleast_1d(np.asarray(variances, dtype=float))
    return PredictiveDistribution(origin=origin, horizon=1, target="headline", component_means=means,
                                  component_vars=variances, realized=realized, spec_id=spec)


def panel_of(lpl_by_spec, origins=10):
    """ScorePanel rows with controlled values: every loss equals -lpl."""
    grid = QuantileGrid()
    rows = []
    for spec, values in lpl_by_spec.items():
        for i in range(origins):
            row = score_distribution(mixture([0.0], realized=0.0, spec=spec, origin=ORIGIN + i), grid)
            value = values[i] if np.ndim(values) else values
            row["lpl"] = value
            row["se"] = -value
            row.update({k: -value for k in row if k.startswith(("qs_", "crps_"))})
            rows.append(row)
    return pd.DataFrame(rows)
