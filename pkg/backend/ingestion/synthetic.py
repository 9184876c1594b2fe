"""
Synthetic monthly panels with a known data-generating process.

The survey block follows a persistent common factor plus idiosyncratic noise,
core predictors are AR(1), and each target is generated as a direct h-step
regression on core predictors and a sparse set of survey series.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from backend.ingestion.panel import (
    ALL_CATEGORIES,
    COUNTRY_GROUPS,
    N_CORE_PREDICTORS,
    SURVEY_CATEGORIES,
    PanelDataset,
    Role,
    VariableMeta,
    group_tags,
)
from backend.ingestion.parsers.config_parser import as_bool, read_entries, split_list, write_sidecar
from backend.ingestion.parsers.panel_parser import write_panel
from backend.utils.errors import ConfigError

logger = logging.getLogger(__name__)

# Explanatory-variable counts M+K "including lags", by country group (rows)
# and survey part (columns main, building, consumer, industry, retail, services, all).
PREDICTOR_COUNTS: Dict[str, Tuple[int, ...]] = {
    "EA": (23, 31, 35, 25, 23, 21, 99),
    "Big6": (93, 133, 165, 105, 89, 85, 541),
    "Big9": (135, 189, 241, 153, 125, 121, 793),
    "Big12": (177, 247, 319, 201, 163, 159, 1053),
    "All": (219, 298, 423, 265, 211, 171, 1332),
}
COUNT_COLUMNS: Tuple[str, ...] = SURVEY_CATEGORIES + (ALL_CATEGORIES,)

CORE_PREDICTORS: Tuple[str, ...] = ("unemployment", "industrial_production", "m2")


def predictor_count_cell(category: str, group: str) -> int:
    return PREDICTOR_COUNTS[group][COUNT_COLUMNS.index(category)]


class DgpSpec(BaseModel):
    """Parameters of the synthetic data-generating process."""
    start: str = "2002-01"
    periods: int = Field(default=228, ge=4)
    horizon: int = Field(default=1, ge=1)
    targets: List[str] = Field(default_factory=lambda: ["headline"])
    intercept: float = 2.0
    core_coef: List[float] = Field(default_factory=lambda: [0.5, -0.3, 0.2])
    core_persistence: float = Field(default=0.8, gt=-1.0, lt=1.0)
    noise_sd: float = Field(default=0.1, gt=0.0)
    n_signals: int = Field(default=5, ge=0)
    signal_scale: float = Field(default=1.0, ge=0.0)
    factor_strength: float = Field(default=1.0, ge=0.0)
    factor_persistence: float = Field(default=0.7, gt=-1.0, lt=1.0)
    mirror_counts: bool = False
    # base variable counts keyed "category.group": primary category and smallest country group
    counts: Dict[str, int] = Field(default_factory=dict)

    @field_validator("start")
    @classmethod
    def _monthly_start(cls, value):
        try:
            pd.Period(value, freq="M")
        except (ValueError, TypeError) as e:
            raise ValueError(f"start must be YYYY-MM, got {value!r}") from e
        return value

    @field_validator("counts")
    @classmethod
    def _known_cells(cls, value):
        for key, n in value.items():
            category, _, group = key.partition(".")
            if category not in SURVEY_CATEGORIES or group not in COUNTRY_GROUPS:
                raise ValueError(f"count key must be '<category>.<group>', got '{key}'")
            if n < 0:
                raise ValueError(f"negative count for '{key}'")
        return value

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.core_coef) != len(CORE_PREDICTORS):
            raise ValueError(f"core_coef needs {len(CORE_PREDICTORS)} values")
        if self.periods <= self.horizon + 2:
            raise ValueError("periods must exceed horizon + 2")
        if not self.targets or len(set(self.targets)) != len(self.targets):
            raise ValueError("targets must be non-empty and unique")
        reserved = set(self.targets) & set(CORE_PREDICTORS)
        if reserved:
            raise ValueError(f"target ids clash with core predictors: {sorted(reserved)}")
        if self.mirror_counts and self.counts:
            raise ValueError("count.* lines cannot be combined with mirror_counts")
        return self


@dataclass(frozen=True)
class SyntheticTruth:
    """True coefficients behind a synthetic panel."""
    intercept: float
    core_coef: Dict[str, float]
    signals: Dict[str, Dict[str, float]]  # target -> survey id -> coefficient on its lag-0 value
    horizon: int


def mirror_layout() -> List[VariableMeta]:
    """Survey metadata whose subset counts reproduce every reference predictor count.

    Works level by level through the nested country groups. The increment of
    each cell over the previous level fixes how many new lagged columns a
    category gains; the "all" increment fixes how many new variables exist.
    Questions belonging to several survey parts are cross-listed. An odd
    increment is met with a variable that enters with a single lag.
    """
    layout: List[VariableMeta] = []
    previous = {c: N_CORE_PREDICTORS for c in COUNT_COLUMNS}
    for group in COUNTRY_GROUPS:
        delta = {c: predictor_count_cell(c, group) - previous[c] for c in COUNT_COLUMNS}
        previous = {c: predictor_count_cell(c, group) for c in COUNT_COLUMNS}
        if any(d < 0 for d in delta.values()):
            raise ConfigError(f"Predictor counts shrink at {group}")

        odd = [c for c in SURVEY_CATEGORIES if delta[c] % 2]
        if (delta[ALL_CATEGORIES] - len(odd)) % 2:
            raise ConfigError(f"Predictor count parity cannot be met at {group}")
        n_two_lag = (delta[ALL_CATEGORIES] - len(odd)) // 2
        memberships = {c: (delta[c] - (c in odd)) // 2 for c in SURVEY_CATEGORIES}

        remaining = n_two_lag
        primaries: List[str] = []
        for c in SURVEY_CATEGORIES:
            take = min(memberships[c], remaining)
            primaries += [c] * take
            remaining -= take
        if remaining:
            raise ConfigError(f"Too few category memberships at {group} to place {n_two_lag} variables")

        extras: List[set] = [set() for _ in primaries]
        for c in SURVEY_CATEGORIES:
            needed = memberships[c] - primaries.count(c)
            for i, primary in enumerate(primaries):
                if needed == 0:
                    break
                if primary != c:
                    extras[i].add(c)
                    needed -= 1
            if needed:
                raise ConfigError(f"Cannot cross-list {c} at {group}")

        tags = group_tags(group)
        counters = {c: 0 for c in SURVEY_CATEGORIES}

        def next_id(category: str) -> str:
            counters[category] += 1
            return f"svy_{category}_{group.lower()}_{counters[category]:03d}"

        for primary, extra in zip(primaries, extras):
            layout.append(VariableMeta(name=next_id(primary), role=Role.SURVEY, survey_category=primary,
                                       country_group_tags=tags, extra_categories=frozenset(extra)))
        for c in odd:
            layout.append(VariableMeta(name=next_id(c), role=Role.SURVEY, survey_category=c,
                                       country_group_tags=tags, lags=1))
        logger.debug(f"Mirror level {group}: {n_two_lag} two-lag and {len(odd)} single-lag variables")
    return layout


def count_layout(counts: Dict[str, int]) -> List[VariableMeta]:
    layout = []
    for group in COUNTRY_GROUPS:
        for category in SURVEY_CATEGORIES:
            n = counts.get(f"{category}.{group}", 0)
            for i in range(1, n + 1):
                layout.append(VariableMeta(name=f"svy_{category}_{group.lower()}_{i:03d}", role=Role.SURVEY,
                                           survey_category=category, country_group_tags=group_tags(group)))
    return layout


def _ar1(rng: np.random.Generator, n_periods: int, n_series: int, persistence: float) -> np.ndarray:
    shocks = rng.standard_normal((n_periods, n_series))
    out = np.empty_like(shocks)
    out[0] = shocks[0] / np.sqrt(1.0 - persistence ** 2)
    for t in range(1, n_periods):
        out[t] = persistence * out[t - 1] + shocks[t]
    return out


def generate_synthetic_with_truth(spec: DgpSpec, seed: int) -> Tuple[PanelDataset, SyntheticTruth]:
    """Generate a panel and return the coefficients used to build it."""
    rng = np.random.default_rng(seed)
    layout = mirror_layout() if spec.mirror_counts else count_layout(spec.counts)
    survey_ids = [m.name for m in layout]
    if spec.n_signals > len(survey_ids) and survey_ids:
        raise ConfigError(f"n_signals={spec.n_signals} exceeds the {len(survey_ids)} survey variables")
    n, h = spec.periods, spec.horizon

    core = _ar1(rng, n, len(CORE_PREDICTORS), spec.core_persistence)
    factor = _ar1(rng, n, 1, spec.factor_persistence)[:, 0]
    loadings = spec.factor_strength * rng.uniform(0.5, 1.5, size=len(survey_ids))
    survey = np.outer(factor, loadings) + rng.standard_normal((n, len(survey_ids)))

    columns: Dict[str, np.ndarray] = {}
    signals: Dict[str, Dict[str, float]] = {}
    core_coef = np.asarray(spec.core_coef)
    for target in spec.targets:
        n_signals = min(spec.n_signals, len(survey_ids))
        chosen = np.sort(rng.choice(len(survey_ids), size=n_signals, replace=False)) if n_signals else np.array([], int)
        signs = rng.choice([-1.0, 1.0], size=n_signals)
        gamma = np.zeros(len(survey_ids))
        gamma[chosen] = signs * spec.signal_scale
        signals[target] = {survey_ids[i]: float(gamma[i]) for i in chosen}

        y = spec.intercept + spec.noise_sd * rng.standard_normal(n)
        y[h:] += core[:-h] @ core_coef + survey[:-h] @ gamma
        columns[target] = y

    for j, name in enumerate(CORE_PREDICTORS):
        columns[name] = core[:, j]
    for j, name in enumerate(survey_ids):
        columns[name] = survey[:, j]

    meta: Dict[str, VariableMeta] = {t: VariableMeta(name=t, role=Role.TARGET) for t in spec.targets}
    meta.update({c: VariableMeta(name=c, role=Role.CORE_PREDICTOR) for c in CORE_PREDICTORS})
    meta.update({m.name: m for m in layout})

    index = pd.period_range(start=pd.Period(spec.start, freq="M"), periods=n, freq="M")
    index.name = "date"
    frame = pd.DataFrame(columns, index=index, columns=list(meta))
    truth = SyntheticTruth(intercept=spec.intercept, core_coef=dict(zip(CORE_PREDICTORS, spec.core_coef)),
                           signals=signals, horizon=h)
    logger.info(f"Generated synthetic panel: {len(meta)} variables x {n} months (seed {seed})")
    return PanelDataset(frame=frame, meta=meta), truth


def generate_synthetic(spec: DgpSpec, seed: int) -> PanelDataset:
    """Deterministic synthetic panel for ``(spec, seed)``."""
    data, _ = generate_synthetic_with_truth(spec, seed)
    return data


def load_dgp_spec(path: Union[str, Path]) -> DgpSpec:
    """Read a DGP spec file.

    Scalar keys map onto ``DgpSpec`` fields; ``count.<category>.<group> = n``
    lines fill the survey layout; ``targets`` and ``core_coef`` take lists.
    """
    fields: Dict[str, object] = {}
    counts: Dict[str, int] = {}
    lines: Dict[str, int] = {}
    for entry in read_entries(path):
        lines[entry.key] = entry.line
        try:
            if entry.key.startswith("count."):
                counts[entry.key[len("count."):]] = int(entry.value)
            elif entry.key == "mirror_counts":
                fields["mirror_counts"] = as_bool(entry)
            elif entry.key == "targets":
                fields["targets"] = split_list(entry.value)
            elif entry.key == "core_coef":
                fields["core_coef"] = [float(v) for v in split_list(entry.value)]
            elif entry.key in DgpSpec.model_fields and entry.key != "counts":
                fields[entry.key] = entry.value
            else:
                raise ConfigError(f"Unknown DGP key '{entry.key}'", line=entry.line, key=entry.key)
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid value for '{entry.key}': {entry.value!r}", line=entry.line, key=entry.key) from e
    if counts:
        fields["counts"] = counts
    try:
        return DgpSpec(**fields)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        raise ConfigError(f"Invalid DGP spec: {first['msg']}", line=lines.get(key), key=key) from e


def write_synthetic(data: PanelDataset, out_path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the panel CSV and its ``<out>.meta`` sidecar."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path = write_panel(data, out_path)
    meta_path = write_sidecar(dict(data.meta), out_path.with_name(out_path.name + ".meta"))
    logger.info(f"Wrote {csv_path} and {meta_path}")
    return csv_path, meta_path
