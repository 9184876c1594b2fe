"""
Presentation tables built from a ScorePanel: gain matrices with best-cell
markers, cumulative LPL series, cumulative quantile-score panels and the run
manifest. Everything is data (CSV and aligned text); plotting is left to
external tools.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from backend.ingestion.panel import ALL_CATEGORIES, COUNTRY_GROUPS, SURVEY_CATEGORIES
from backend.services.scoring import (
    BENCHMARK,
    METRICS,
    QuantileGrid,
    cumulative_lpl,
    gain_table,
    metric_gain,
    qs_column,
)
from backend.utils.common import sha256_file, slugify
from backend.utils.errors import ScoringError

logger = logging.getLogger(__name__)

try:
    from config import FLOAT_FORMAT
except ImportError:
    import os
    FLOAT_FORMAT = os.getenv("RIDGECAST_FLOAT_FORMAT", "%.12g")

ROW_LABELS: Tuple[str, ...] = SURVEY_CATEGORIES + (ALL_CATEGORIES,)
ROW_BEST = "•"
OVERALL_BEST = "⊙"
TIE_TOL = 1e-12


@dataclass(frozen=True)
class GainMatrix:
    target: str
    horizon: int
    metric: str
    values: pd.DataFrame                     # categories x country groups, NaN where no spec ran
    row_best: Dict[str, List[str]]           # category -> best groups (several when tied)
    overall_best: List[Tuple[str, str]]      # (category, group) cells sharing the maximum

    @property
    def row_ties(self) -> Dict[str, List[str]]:
        return {row: cols for row, cols in self.row_best.items() if len(cols) > 1}

    @property
    def overall_tied(self) -> bool:
        return len(self.overall_best) > 1


def _best(values: pd.Series) -> List:
    finite = values.dropna()
    if finite.empty:
        return []
    top = finite.max()
    return [label for label, v in finite.items() if abs(v - top) <= TIE_TOL]


def gain_matrix(scores: pd.DataFrame, metric: str, target: str, horizon: int, kind: str = "svd") -> GainMatrix:
    """Gains of the ``kind`` specs over the benchmark, laid out category x country group.

    Raises:
        ScoringError: no benchmark records or unknown metric.
    """
    if metric not in METRICS:
        raise ScoringError(f"Unknown metric '{metric}'. Available: {', '.join(METRICS)}")
    sel = scores[(scores["target"] == target) & (scores["horizon"] == horizon)]
    if BENCHMARK not in set(sel["spec"]):
        raise ScoringError(f"No benchmark records for {target} at h={horizon}")

    values = pd.DataFrame(np.nan, index=list(ROW_LABELS), columns=list(COUNTRY_GROUPS))
    values.index.name = "category"
    if set(sel["spec"]) == {BENCHMARK}:
        # benchmark-only run: every cell is the benchmark against itself, nothing to mark
        values.loc[:, :] = metric_gain(scores, target, BENCHMARK, horizon, metric)
        return GainMatrix(target=target, horizon=horizon, metric=metric, values=values,
                          row_best={row: [] for row in values.index}, overall_best=[])
    for spec in sorted(set(sel["spec"])):
        parts = spec.split(":")
        if parts[0] != kind:
            continue
        category, group = parts[1], parts[2]
        values.loc[category, group] = metric_gain(scores, target, spec, horizon, metric)

    row_best = {row: _best(values.loc[row]) for row in values.index}
    cells = pd.Series({(r, c): values.loc[r, c] for r in values.index for c in values.columns})
    overall = _best(cells)
    return GainMatrix(target=target, horizon=horizon, metric=metric, values=values,
                      row_best=row_best, overall_best=[tuple(cell) for cell in overall])


def render_text(matrix: GainMatrix, digits: int = 2) -> str:
    """Aligned plain-text table; • marks the row best, ⊙ the overall best."""
    overall = set(matrix.overall_best)
    header = ["category"] + list(matrix.values.columns)
    body = []
    for row in matrix.values.index:
        cells = [row]
        for col in matrix.values.columns:
            v = matrix.values.loc[row, col]
            if pd.isna(v):
                cells.append("·")
                continue
            mark = OVERALL_BEST if (row, col) in overall else ROW_BEST if col in matrix.row_best[row] else ""
            cells.append(f"{v:.{digits}f}{mark}")
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + body]
    notes = [f"{matrix.target} h={matrix.horizon} metric={matrix.metric}"]
    for row, cols in matrix.row_ties.items():
        notes.append(f"tie in row {row}: {', '.join(cols)}")
    if matrix.overall_tied:
        notes.append("overall tie: " + ", ".join(f"{r}/{c}" for r, c in matrix.overall_best))
    return "\n".join(notes[:1] + lines + notes[1:]) + "\n"


def write_gain_matrix(matrix: GainMatrix, out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    stem = f"gains_{slugify(matrix.target)}_{matrix.metric}_h{matrix.horizon}"
    frame = matrix.values.copy()
    overall = set(matrix.overall_best)
    frame["row_best"] = ["|".join(matrix.row_best[r]) for r in frame.index]
    frame["overall_best"] = ["|".join(c for c in matrix.values.columns if (r, c) in overall) for r in frame.index]
    csv_path = out_dir / f"{stem}.csv"
    frame.to_csv(csv_path, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    txt_path = out_dir / f"{stem}.txt"
    txt_path.write_text(render_text(matrix), encoding="utf-8")
    return [csv_path, txt_path]


def qs_over_time(scores: pd.DataFrame, target: str, spec: str, horizon: int,
                 grid: QuantileGrid = QuantileGrid()) -> pd.DataFrame:
    """alpha x origin matrix of running-sum QS(spec) minus running-sum QS(benchmark)."""
    sel = scores[(scores["target"] == target) & (scores["horizon"] == horizon)]
    model = sel[sel["spec"] == spec].set_index("origin").sort_index()
    bench = sel[sel["spec"] == BENCHMARK].set_index("origin").sort_index()
    if model.empty or bench.empty:
        raise ScoringError(f"Missing records for {target}/{spec} or the benchmark at h={horizon}")
    common = model.index.intersection(bench.index)
    cols = [qs_column(a) for a in grid.alphas]
    diff = (model.loc[common, cols].cumsum() - bench.loc[common, cols].cumsum()).T
    diff.index = pd.Index([float(a) for a in grid.alphas], name="alpha")
    return diff


def best_spec(scores: pd.DataFrame, target: str, horizon: int, metric: str = "lpl",
              kind: str = "svd") -> Optional[str]:
    """Spec of the given kind with the highest gain (first in sorted order on ties)."""
    sel = scores[(scores["target"] == target) & (scores["horizon"] == horizon)]
    candidates = sorted(s for s in set(sel["spec"]) if s.split(":")[0] == kind)
    if not candidates:
        return None
    gains = [metric_gain(scores, target, s, horizon, metric) for s in candidates]
    return candidates[int(np.argmax(gains))]


def cumulative_lpl_frame(scores: pd.DataFrame, target: str, horizon: int) -> pd.DataFrame:
    """Benchmark running LPL plus every spec's running LPL relative to it."""
    sel = scores[(scores["target"] == target) & (scores["horizon"] == horizon)]
    bench = cumulative_lpl(scores, target, BENCHMARK, horizon)
    frame = pd.DataFrame({BENCHMARK: bench["cum_lpl"]})
    for spec in sorted(set(sel["spec"]) - {BENCHMARK}):
        frame[f"rel:{spec}"] = cumulative_lpl(scores, target, spec, horizon)["relative"]
    for kind in ("svd", "pca"):
        best = best_spec(scores, target, horizon, "lpl", kind)
        if best is not None:
            frame[f"best_{kind}"] = frame[f"rel:{best}"]
    frame.index.name = "origin"
    return frame


def write_report(scores: pd.DataFrame, out_dir: Union[str, Path], metrics: Sequence[str] = METRICS,
                 grid: QuantileGrid = QuantileGrid()) -> List[Path]:
    """Write every gain matrix, cumulative-LPL and QS-over-time file for a ScorePanel."""
    out_dir = Path(out_dir)
    written: List[Path] = []
    if scores.empty:
        logger.warning("No scored forecasts; nothing to report")
        return written

    long = gain_table(scores, metrics)
    long_path = out_dir / "gains_long.csv"
    long.to_csv(long_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    written.append(long_path)

    for (target, horizon), group in scores.groupby(["target", "horizon"], sort=True):
        horizon = int(horizon)
        for metric in metrics:
            written += write_gain_matrix(gain_matrix(scores, metric, target, horizon), out_dir)

        cum_path = out_dir / f"cumlpl_{slugify(target)}_h{horizon}.csv"
        cumulative_lpl_frame(scores, target, horizon).to_csv(cum_path, float_format=FLOAT_FORMAT,
                                                             lineterminator="\n")
        written.append(cum_path)

        for spec in sorted(set(group["spec"]) - {BENCHMARK}):
            heat_path = out_dir / f"qsheat_{slugify(target)}_{slugify(spec)}_h{horizon}.csv"
            qs_over_time(scores, target, spec, horizon, grid).to_csv(heat_path, float_format=FLOAT_FORMAT,
                                                                      lineterminator="\n")
            written.append(heat_path)

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written


def write_manifest(out_dir: Union[str, Path], outputs: Sequence[Path], plan_hash: str, data_hash: str,
                   seed: int, version: str) -> Path:
    """manifest.json: run identity plus the sha256 of every output file."""
    out_dir = Path(out_dir)
    manifest = {
        "plan_hash": plan_hash,
        "data_hash": data_hash,
        "seed": seed,
        "version": version,
        "outputs": {p.name: sha256_file(p) for p in sorted(outputs, key=lambda p: p.name)},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
