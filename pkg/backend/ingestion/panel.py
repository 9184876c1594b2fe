"""
Monthly panel dataset, variable metadata and standardization.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from backend.utils.errors import ConfigError, PanelValidationError

logger = logging.getLogger(__name__)


class Role(str, Enum):
    TARGET = "target"
    CORE_PREDICTOR = "core_predictor"
    SURVEY = "survey"


SURVEY_CATEGORIES: Tuple[str, ...] = ("main", "building", "consumer", "industry", "retail", "services")
ALL_CATEGORIES = "all"

# Nested from narrowest to broadest
COUNTRY_GROUPS: Tuple[str, ...] = ("EA", "Big6", "Big9", "Big12", "All")

# Two target lags, unemployment, industrial production, M2 (intercept excluded)
N_CORE_PREDICTORS = 5


def group_tags(smallest_group: str) -> FrozenSet[str]:
    """Tags for a variable first available in ``smallest_group``: that group and every broader one."""
    if smallest_group not in COUNTRY_GROUPS:
        raise ConfigError(f"Unknown country group '{smallest_group}'. Available: {', '.join(COUNTRY_GROUPS)}")
    return frozenset(COUNTRY_GROUPS[COUNTRY_GROUPS.index(smallest_group):])


class VariableMeta(BaseModel):
    """Metadata of one panel variable."""
    model_config = ConfigDict(frozen=True)

    name: str
    role: Role
    survey_category: Optional[str] = None
    country_group_tags: FrozenSet[str] = frozenset()
    extra_categories: FrozenSet[str] = frozenset()
    lags: int = 2

    @field_validator("survey_category")
    @classmethod
    def _known_category(cls, value):
        if value is not None and value not in SURVEY_CATEGORIES:
            raise ValueError(f"unknown survey category '{value}'")
        return value

    @field_validator("extra_categories")
    @classmethod
    def _known_extras(cls, value):
        unknown = set(value) - set(SURVEY_CATEGORIES)
        if unknown:
            raise ValueError(f"unknown survey categories {sorted(unknown)}")
        return frozenset(value)

    @field_validator("country_group_tags")
    @classmethod
    def _nested_tags(cls, value):
        tags = frozenset(value)
        unknown = tags - set(COUNTRY_GROUPS)
        if unknown:
            raise ValueError(f"unknown country groups {sorted(unknown)}")
        if tags:
            smallest = min(tags, key=COUNTRY_GROUPS.index)
            if tags != group_tags(smallest):
                raise ValueError("country group tags must be nested (EA ⊆ Big6 ⊆ Big9 ⊆ Big12 ⊆ All)")
        return tags

    @field_validator("lags")
    @classmethod
    def _lag_count(cls, value):
        if value not in (1, 2):
            raise ValueError("survey variables enter with 1 or 2 lags")
        return value

    @model_validator(mode="after")
    def _category_iff_survey(self):
        if (self.role == Role.SURVEY) != (self.survey_category is not None):
            raise ValueError("survey_category is required for survey variables and forbidden otherwise")
        if self.role == Role.SURVEY and not self.country_group_tags:
            raise ValueError("survey variables need a country group")
        return self

    @property
    def categories(self) -> FrozenSet[str]:
        if self.survey_category is None:
            return frozenset()
        return frozenset({self.survey_category}) | self.extra_categories

    @property
    def smallest_group(self) -> Optional[str]:
        if not self.country_group_tags:
            return None
        return min(self.country_group_tags, key=COUNTRY_GROUPS.index)


@dataclass(frozen=True)
class PanelDataset:
    """Aligned monthly series plus metadata. Treated as immutable."""
    frame: pd.DataFrame
    meta: Mapping[str, VariableMeta]

    def __post_init__(self):
        index = self.frame.index
        if not isinstance(index, pd.PeriodIndex) or index.freqstr not in ("M", "ME"):
            raise PanelValidationError("time index must be a monthly PeriodIndex")
        if len(index) > 1:
            steps = np.diff(index.asi8)
            if np.any(steps != 1):
                bad = int(np.argmax(steps != 1)) + 1
                raise PanelValidationError(f"time index not consecutive at {index[bad]}")
        columns = list(self.frame.columns)
        if len(set(columns)) != len(columns):
            raise PanelValidationError("duplicate variable ids")
        missing_meta = set(columns) - set(self.meta)
        if missing_meta:
            raise PanelValidationError(f"variables without metadata: {sorted(missing_meta)}")
        extra_meta = set(self.meta) - set(columns)
        if extra_meta:
            raise PanelValidationError(f"metadata without series: {sorted(extra_meta)}")

    @property
    def time_index(self) -> pd.PeriodIndex:
        return self.frame.index

    @property
    def variable_ids(self) -> List[str]:
        return list(self.frame.columns)

    def series(self, variable_id: str) -> np.ndarray:
        return self.frame[variable_id].to_numpy(dtype=float, copy=True)

    def ids_with_role(self, role: Role) -> List[str]:
        return sorted(v for v, m in self.meta.items() if m.role == role)

    def window(self, start: pd.Period, end: pd.Period) -> "PanelDataset":
        """Rows with start <= period <= end."""
        frame = self.frame.loc[(self.frame.index >= start) & (self.frame.index <= end)]
        return PanelDataset(frame=frame.copy(), meta=dict(self.meta))


@dataclass(frozen=True)
class StandardizationStats:
    """Per-variable mean and sample standard deviation (n-1 denominator)."""
    mean: Dict[str, float] = field(default_factory=dict)
    std: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.mean) != set(self.std):
            raise ValueError("mean and std must cover the same variables")
        for var, s in self.std.items():
            if not s > 0:
                raise ValueError(f"non-positive std for {var}")

    def apply(self, variable_id: str, values):
        return (np.asarray(values, dtype=float) - self.mean[variable_id]) / self.std[variable_id]

    def invert(self, variable_id: str, values):
        return np.asarray(values, dtype=float) * self.std[variable_id] + self.mean[variable_id]


def subset_survey(data: PanelDataset, category: str, group: str) -> List[str]:
    """Survey variables of a category (or "all") available in a country group, sorted by id."""
    if category != ALL_CATEGORIES and category not in SURVEY_CATEGORIES:
        raise ConfigError(f"Unknown survey category '{category}'")
    if group not in COUNTRY_GROUPS:
        raise ConfigError(f"Unknown country group '{group}'")
    selected = []
    for var_id, meta in data.meta.items():
        if meta.role != Role.SURVEY or group not in meta.country_group_tags:
            continue
        if category == ALL_CATEGORIES or category in meta.categories:
            selected.append(var_id)
    return sorted(selected)


def predictor_count(data: PanelDataset, category: str, group: str) -> int:
    """Explanatory-variable count M+K "including lags" for a survey subset."""
    ids = subset_survey(data, category, group)
    return N_CORE_PREDICTORS + sum(data.meta[v].lags for v in ids)


def standardize(data: PanelDataset, window: Tuple[pd.Period, pd.Period]) -> Tuple[PanelDataset, StandardizationStats]:
    """Standardize every variable with mean/std estimated over ``window``.

    Missing edges are skipped. Variables with zero (or undefined) variance over
    the window are dropped with a warning.
    """
    start, end = window
    if start > end:
        raise ConfigError(f"empty standardization window {start}..{end}")
    in_window = (data.frame.index >= start) & (data.frame.index <= end)
    if not in_window.any():
        raise ConfigError(f"standardization window {start}..{end} does not overlap the panel")

    sample = data.frame.to_numpy(dtype=float)[in_window]
    counts = np.sum(~np.isnan(sample), axis=0)
    means = _safe_nanmean(sample)
    stds = _safe_nanstd(sample)

    keep, mean, std = [], {}, {}
    for j, var_id in enumerate(data.frame.columns):
        s = stds[j]
        if counts[j] < 2 or not np.isfinite(s) or s <= 0.0:
            logger.warning(f"Dropping {var_id}: zero variance over {start}..{end}")
            continue
        keep.append(var_id)
        mean[var_id] = float(means[j])
        std[var_id] = float(s)

    frame = pd.DataFrame(
        {v: (data.frame[v].to_numpy(dtype=float) - mean[v]) / std[v] for v in keep},
        index=data.frame.index,
        columns=keep,
    )
    standardized = PanelDataset(frame=frame, meta={v: data.meta[v] for v in keep})
    return standardized, StandardizationStats(mean=mean, std=std)


def destandardize(data: PanelDataset, stats: StandardizationStats) -> PanelDataset:
    """Inverse of ``standardize`` for every variable covered by ``stats``."""
    frame = pd.DataFrame(
        {v: stats.invert(v, data.frame[v].to_numpy(dtype=float)) for v in data.frame.columns},
        index=data.frame.index,
        columns=list(data.frame.columns),
    )
    return PanelDataset(frame=frame, meta=dict(data.meta))


def _safe_nanmean(sample: np.ndarray) -> np.ndarray:
    counts = np.sum(~np.isnan(sample), axis=0)
    totals = np.nansum(sample, axis=0)
    out = np.full(sample.shape[1], np.nan)
    np.divide(totals, counts, out=out, where=counts > 0)
    return out


def _safe_nanstd(sample: np.ndarray) -> np.ndarray:
    counts = np.sum(~np.isnan(sample), axis=0)
    means = _safe_nanmean(sample)
    dev = np.where(np.isnan(sample), 0.0, sample - means)
    ssq = np.sum(dev * dev, axis=0)
    out = np.full(sample.shape[1], np.nan)
    np.divide(ssq, counts - 1, out=out, where=counts > 1)
    return np.sqrt(out)
