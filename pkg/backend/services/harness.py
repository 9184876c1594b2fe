"""
Recursive out-of-sample experiments.

At every origin the estimation sample expands by one month: designs are
rebuilt from data up to the origin, the sampler is rerun and a direct
h-step predictive distribution is issued. Work units are
(target, spec, origin, horizon); each draws from its own stream derived from
the plan seed, so the thread count never changes the numbers.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from backend.config import DEFAULT_FACTORS, DEFAULT_HORIZONS, SURVEY_LAGS
from backend.ingestion.panel import ALL_CATEGORIES, COUNTRY_GROUPS, SURVEY_CATEGORIES, PanelDataset, Role, subset_survey
from backend.ingestion.parsers.config_parser import ConfigEntry, read_entries, split_list
from backend.services.data_access.forecast_store import ForecastKey, ForecastStore
from backend.services.model import McmcConfig, PriorConfig, RegressionDesign, build_design, forecast, gibbs_run
from backend.services.pca_baseline import pca_design
from backend.services.predictive import PredictiveDistribution
from backend.services.registry import registry
from backend.utils.common import derive_rng, sha256_text
from backend.utils.errors import ConfigError, DesignError, RidgecastError

logger = logging.getLogger(__name__)


class ModelSpec(BaseModel):
    """One model in the comparison: the benchmark, an SVD survey model or a PCA comparator."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["benchmark", "svd", "pca"]
    category: Optional[str] = None
    group: Optional[str] = None
    factors: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _default_factors(cls, data):
        if isinstance(data, dict) and data.get("kind") == "pca" and data.get("factors") is None:
            data = {**data, "factors": DEFAULT_FACTORS}
        return data

    @model_validator(mode="after")
    def _fields_for_kind(self):
        if self.kind == "benchmark":
            if self.category or self.group or self.factors is not None:
                raise ValueError("benchmark takes no category, group or factor count")
            return self
        if self.category != ALL_CATEGORIES and self.category not in SURVEY_CATEGORIES:
            raise ValueError(f"unknown survey category '{self.category}'")
        if self.group not in COUNTRY_GROUPS:
            raise ValueError(f"unknown country group '{self.group}'")
        if self.kind == "svd" and self.factors is not None:
            raise ValueError("svd specs take no factor count")
        return self

    @property
    def spec_id(self) -> str:
        if self.kind == "benchmark":
            return "benchmark"
        if self.kind == "svd":
            return f"svd:{self.category}:{self.group}"
        return f"pca:{self.category}:{self.group}:{self.factors}"


def parse_spec_line(text: str, line: Optional[int] = None) -> ModelSpec:
    """``benchmark`` | ``svd <category> <group>`` | ``pca <category> <group> [F]``."""
    parts = text.split()
    try:
        if not parts:
            raise ValueError("empty spec")
        kind = parts[0]
        if kind == "benchmark" and len(parts) == 1:
            return ModelSpec(kind="benchmark")
        if kind == "svd" and len(parts) == 3:
            return ModelSpec(kind="svd", category=parts[1], group=parts[2])
        if kind == "pca" and len(parts) in (3, 4):
            factors = int(parts[3]) if len(parts) == 4 else None
            return ModelSpec(kind="pca", category=parts[1], group=parts[2], factors=factors)
        raise ValueError(f"cannot parse spec {text!r}")
    except (ValidationError, ValueError) as e:
        raise ConfigError(f"Invalid spec line {text!r}: {e}", line=line, key="spec") from e


class ExperimentPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    targets: List[str]
    horizons: List[int] = Field(default_factory=lambda: list(DEFAULT_HORIZONS))
    model_specs: List[ModelSpec] = Field(default_factory=lambda: [ModelSpec(kind="benchmark")])
    initial_window: Tuple[str, str]
    holdout_end: str
    mcmc: McmcConfig = Field(default_factory=McmcConfig)
    prior: PriorConfig = Field(default_factory=PriorConfig)
    seed: int = 0
    survey_lags: Tuple[int, int] = SURVEY_LAGS

    @field_validator("horizons")
    @classmethod
    def _positive_horizons(cls, value):
        if not value or any(h < 1 for h in value):
            raise ValueError("horizons must be a non-empty list of integers >= 1")
        return sorted(set(value))

    @field_validator("survey_lags")
    @classmethod
    def _survey_lags(cls, value):
        if tuple(value) not in ((0, 1), (1, 2)):
            raise ValueError("survey_lags must be '0 1' or '1 2'")
        return tuple(value)

    @model_validator(mode="after")
    def _windows(self):
        if not self.targets:
            raise ValueError("plan needs at least one target")
        start, end = (pd.Period(p, freq="M") for p in self.initial_window)
        if start >= end:
            raise ValueError("initial_window start must precede its end")
        if not end < pd.Period(self.holdout_end, freq="M"):
            raise ValueError("initial_window end must precede holdout_end")
        ids = [s.spec_id for s in self.model_specs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate model specs")
        if "benchmark" not in ids:
            raise ValueError("model specs must include the benchmark")
        return self

    @property
    def window_start(self) -> pd.Period:
        return pd.Period(self.initial_window[0], freq="M")

    @property
    def window_end(self) -> pd.Period:
        return pd.Period(self.initial_window[1], freq="M")

    @property
    def holdout_period(self) -> pd.Period:
        return pd.Period(self.holdout_end, freq="M")

    def plan_hash(self) -> str:
        return sha256_text(json.dumps(self.model_dump(mode="json"), sort_keys=True))


PRIOR_KEYS = ("c0", "c1", "sigma2_shape", "sigma2_rate", "horseshoe_scale", "intercept_var", "fixed_delta")
MCMC_KEYS = ("burn", "retain", "thin")


def _plan_fields(entries: Sequence[ConfigEntry]) -> dict:
    fields: dict = {"prior": {}, "mcmc": {}}
    specs = []
    for entry in entries:
        key, value = entry.key, entry.value
        if key == "spec":
            specs.append(parse_spec_line(value, entry.line))
        elif key == "targets":
            fields["targets"] = split_list(value)
        elif key == "horizons":
            fields["horizons"] = split_list(value)
        elif key == "initial_window":
            parts = split_list(value)
            if len(parts) != 2:
                raise ConfigError("initial_window needs '<start> <end>'", line=entry.line, key=key)
            fields["initial_window"] = tuple(parts)
        elif key == "survey_lags":
            fields["survey_lags"] = tuple(split_list(value))
        elif key in ("holdout_end", "seed"):
            fields[key] = value
        elif key in PRIOR_KEYS:
            fields["prior"][key] = value
        elif key in MCMC_KEYS:
            fields["mcmc"][key] = value
        else:
            raise ConfigError(f"Unknown plan key '{key}'", line=entry.line, key=key)
    if specs:
        fields["model_specs"] = specs
    return fields


def load_plan(path: Union[str, Path]) -> ExperimentPlan:
    """Read and validate an experiment plan file."""
    entries = read_entries(path)
    lines = {e.key: e.line for e in entries}
    fields = _plan_fields(entries)
    try:
        fields["prior"] = PriorConfig(**fields["prior"])
        fields["mcmc"] = McmcConfig(**fields["mcmc"])
        plan = ExperimentPlan(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        raise ConfigError(f"Invalid plan {Path(path).name}: {first['msg']}", line=lines.get(key), key=key) from e
    logger.info(f"Loaded plan {Path(path).name}: {len(plan.targets)} targets, {len(plan.model_specs)} specs, "
                f"horizons {plan.horizons}")
    return plan


def plan_origins(plan: ExperimentPlan) -> List[pd.Period]:
    """Forecast origins from the initial window's end to holdout_end - max(h)."""
    last = plan.holdout_period - max(plan.horizons)
    if last < plan.window_end:
        raise DesignError(
            f"No origin leaves room for h={max(plan.horizons)} between {plan.window_end} and {plan.holdout_end}",
            earliest_feasible_origin=None,
        )
    return list(pd.period_range(plan.window_end, last, freq="M"))


@registry.register("benchmark")
def benchmark_design(data: PanelDataset, target: str, spec: ModelSpec, horizon: int,
                     window: Tuple[pd.Period, pd.Period], survey_lags=SURVEY_LAGS) -> RegressionDesign:
    return build_design(data, target, [], horizon, window, survey_lags=survey_lags)


@registry.register("svd")
def svd_design(data: PanelDataset, target: str, spec: ModelSpec, horizon: int,
               window: Tuple[pd.Period, pd.Period], survey_lags=SURVEY_LAGS) -> RegressionDesign:
    survey_ids = subset_survey(data, spec.category, spec.group)
    return build_design(data, target, survey_ids, horizon, window, survey_lags=survey_lags)


@registry.register("pca")
def factor_design(data: PanelDataset, target: str, spec: ModelSpec, horizon: int,
                  window: Tuple[pd.Period, pd.Period], survey_lags=SURVEY_LAGS) -> RegressionDesign:
    design = svd_design(data, target, spec, horizon, window, survey_lags=survey_lags)
    if design.fallback:
        return design
    return pca_design(design, spec.factors)


def check_plan(plan: ExperimentPlan, data: PanelDataset) -> None:
    """Fail fast on plan/data mismatches that would break every origin."""
    targets = set(data.ids_with_role(Role.TARGET))
    for target in plan.targets:
        if target not in data.meta:
            raise ConfigError(f"Unknown target id '{target}'", key="targets")
        if target not in targets:
            raise ConfigError(f"'{target}' is not tagged as a target in the metadata", key="targets")
    if plan.holdout_period > data.time_index[-1]:
        raise ConfigError(f"holdout_end {plan.holdout_end} is beyond the last data period {data.time_index[-1]}",
                          key="holdout_end")
    if plan.window_end < data.time_index[0]:
        raise ConfigError(f"initial_window ends before the data start {data.time_index[0]}", key="initial_window")


def design_for(plan: ExperimentPlan, data: PanelDataset, target: str, spec: ModelSpec, horizon: int,
               origin: pd.Period) -> RegressionDesign:
    builder = registry.get_builder(spec.kind)
    return builder(data, target, spec, horizon, (plan.window_start, origin), survey_lags=plan.survey_lags)


def dry_run(plan: ExperimentPlan, data: PanelDataset) -> pd.DataFrame:
    """Dimensions (M, K, T) of every design at the first and last origins.

    Raises:
        ConfigError: unknown targets or windows outside the data.
        DesignError: a design cannot be built; carries the earliest feasible origin.
    """
    check_plan(plan, data)
    origins = plan_origins(plan)
    rows = []
    for target in plan.targets:
        for spec in plan.model_specs:
            for horizon in plan.horizons:
                for label, origin in (("first", origins[0]), ("last", origins[-1])):
                    design = design_for(plan, data, target, spec, horizon, origin)
                    rows.append({"target": target, "spec": spec.spec_id, "horizon": horizon, "origin": str(origin),
                                 "which": label, "M": design.M, "K": design.K, "T": design.T,
                                 "fallback": design.fallback})
    return pd.DataFrame(rows)


def realized_value(data: PanelDataset, target: str, period: pd.Period) -> Optional[float]:
    if period not in data.time_index:
        return None
    value = float(data.frame.at[period, target])
    return value if pd.notna(value) else None


def run_unit(plan: ExperimentPlan, data: PanelDataset, target: str, spec: ModelSpec, origin_index: int,
             origin: pd.Period, horizon: int) -> PredictiveDistribution:
    """Estimate one model at one origin and issue its h-step forecast."""
    rng = derive_rng(plan.seed, target, spec.spec_id, origin_index, horizon)
    design = design_for(plan, data, target, spec, horizon, origin)
    draws = gibbs_run(design, plan.prior, plan.mcmc, rng)
    return forecast(design, draws, spec_id=spec.spec_id)


def run_experiment(plan: ExperimentPlan, data: PanelDataset, threads: int = 1,
                   store: Optional[ForecastStore] = None) -> ForecastStore:
    """Run every (target, spec, origin, horizon) unit and collect the forecasts.

    Units that fail are logged and recorded in the store; configuration
    errors abort the run.
    """
    check_plan(plan, data)
    store = store if store is not None else ForecastStore()
    origins = plan_origins(plan)
    units = [
        (target, spec, i, origin, horizon)
        for target in plan.targets
        for spec in plan.model_specs
        for i, origin in enumerate(origins)
        for horizon in plan.horizons
    ]
    logger.info(f"Running {len(units)} units over {len(origins)} origins ({origins[0]}..{origins[-1]}) "
                f"with {threads} thread(s)")

    def work(unit):
        target, spec, i, origin, horizon = unit
        key = ForecastKey(target, spec.spec_id, origin, horizon)
        try:
            dist = run_unit(plan, data, target, spec, i, origin, horizon)
        except ConfigError:
            raise
        except (RidgecastError, ValueError, FloatingPointError) as e:
            store.record_failure(key, e)
            return
        store.add(dist.with_realized(realized_value(data, target, origin + horizon)))

    if threads <= 1:
        for unit in units:
            work(unit)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for future in [pool.submit(work, unit) for unit in units]:
                future.result()

    failed = len(store.failures())
    logger.info(f"Finished: {len(store)} forecasts, {failed} failed units")
    return store
