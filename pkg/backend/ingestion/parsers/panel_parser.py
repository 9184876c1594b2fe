import re
import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from backend.ingestion.panel import PanelDataset, VariableMeta
from backend.utils.errors import PanelValidationError
from backend.utils.validators import validate_file

logger = logging.getLogger(__name__)

try:
    from config import MISSING_TOKEN
except ImportError:
    import os
    MISSING_TOKEN = os.getenv("RIDGECAST_MISSING_TOKEN", "NA")

PERIOD_PATTERN = re.compile(r'^(\d{4})-(\d{2})$')
FIELD_COUNT_PATTERN = re.compile(r'Expected (\d+) fields in line (\d+), saw (\d+)')


def parse_period(text: str, row: Optional[int] = None, column: str = "date") -> pd.Period:
    match = PERIOD_PATTERN.match(text.strip())
    if not match or not 1 <= int(match.group(2)) <= 12:
        raise PanelValidationError(f"malformed period {text!r} (expected YYYY-MM)", row=row, column=column)
    return pd.Period(f"{match.group(1)}-{match.group(2)}", freq="M")


def load_panel(path: Union[str, Path], schema: Mapping[str, VariableMeta],
               missing_token: Optional[str] = None) -> PanelDataset:
    """Load a monthly panel CSV.

    The first column is ``date`` (YYYY-MM); every other column is a variable
    described in ``schema``. Rows are reported 1-based with the header as row 1.

    Raises:
        PanelValidationError: wrong field count, malformed period, non-monotone dates, gap in months,
            interior missing value, non-numeric cell, duplicate or unknown variable id.
    """
    path = Path(path)
    token = MISSING_TOKEN if missing_token is None else missing_token
    if not validate_file(path, kind="data"):
        raise PanelValidationError(f"Data file failed validation: {path}")

    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise PanelValidationError("empty data file") from e
    except pd.errors.ParserError as e:
        match = FIELD_COUNT_PATTERN.search(str(e))
        if match is None:
            raise PanelValidationError(f"unreadable CSV: {e}") from e
        expected, line, seen = (int(g) for g in match.groups())
        raise PanelValidationError(f"row has {seen} fields, expected {expected}", row=line) from e
    if raw.shape[0] < 1 or raw.shape[1] < 1:
        raise PanelValidationError("empty data file")
    # fields absent from a short row come back as NaN; present-but-empty cells are ""
    short = raw.isna().any(axis=1).to_numpy()
    if short.any():
        i = int(np.argmax(short))
        n_fields = int(raw.iloc[i].notna().sum())
        column = str(raw.iat[0, n_fields]).strip() if i > 0 else None
        raise PanelValidationError(f"row has {n_fields} fields, expected {raw.shape[1]}", row=i + 1, column=column)

    header = [h.strip() for h in raw.iloc[0].tolist()]
    if header[0] != "date":
        raise PanelValidationError(f"first column must be 'date', got {header[0]!r}", row=1, column=header[0])
    variables = header[1:]
    seen: Dict[str, int] = {}
    for position, var_id in enumerate(variables, start=2):
        if var_id in seen:
            raise PanelValidationError(f"duplicate variable id '{var_id}' (also column {seen[var_id]})",
                                       row=1, column=var_id)
        seen[var_id] = position
    unknown = [v for v in variables if v not in schema]
    if unknown:
        raise PanelValidationError(f"variable without metadata: '{unknown[0]}'", row=1, column=unknown[0])
    absent = [v for v in schema if v not in seen]
    if absent:
        raise PanelValidationError(f"metadata variable missing from data: '{absent[0]}'", column=absent[0])

    body = raw.iloc[1:]
    periods = []
    for offset, text in enumerate(body.iloc[:, 0].tolist()):
        row = offset + 2
        period = parse_period(text, row=row)
        if periods:
            step = period.ordinal - periods[-1].ordinal
            if step <= 0:
                raise PanelValidationError(f"non-monotone dates: {period} after {periods[-1]}", row=row, column="date")
            if step > 1:
                raise PanelValidationError(f"gap in months between {periods[-1]} and {period}", row=row, column="date")
        periods.append(period)

    values = np.full((len(periods), len(variables)), np.nan)
    for j, var_id in enumerate(variables):
        cells = body.iloc[:, j + 1].tolist()
        for i, cell in enumerate(cells):
            cell = cell.strip()
            if cell == token or cell == "":
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise PanelValidationError(f"non-numeric value {cell!r}", row=i + 2, column=var_id)
            if not np.isfinite(values[i, j]):
                raise PanelValidationError(f"non-finite value {cell!r}", row=i + 2, column=var_id)
        observed = np.flatnonzero(~np.isnan(values[:, j]))
        if observed.size == 0:
            logger.warning(f"Variable {var_id} has no observations")
            continue
        interior = np.flatnonzero(np.isnan(values[observed[0]:observed[-1] + 1, j]))
        if interior.size:
            i = int(observed[0] + interior[0])
            raise PanelValidationError("interior missing value", row=i + 2, column=var_id)

    frame = pd.DataFrame(values, index=pd.PeriodIndex(periods, freq="M"), columns=variables)
    frame.index.name = "date"
    dataset = PanelDataset(frame=frame, meta={v: schema[v] for v in variables})
    logger.info(f"Loaded panel {path.name}: {len(variables)} variables x {len(periods)} months")
    return dataset


def write_panel(data: PanelDataset, path: Union[str, Path], float_format: str = "%.17g",
                missing_token: Optional[str] = None) -> Path:
    """Write a panel in the format read by ``load_panel``; the default format round-trips doubles exactly."""
    path = Path(path)
    frame = data.frame.copy()
    frame.index = frame.index.strftime("%Y-%m")
    frame.index.name = "date"
    frame.to_csv(path, float_format=float_format, na_rep=MISSING_TOKEN if missing_token is None else missing_token,
                 lineterminator="\n")
    return path
