import logging
import argparse
from pathlib import Path
from typing import Dict, Optional, Union

import pandas as pd

from backend.ingestion.panel import (
    ALL_CATEGORIES,
    COUNTRY_GROUPS,
    SURVEY_CATEGORIES,
    PanelDataset,
    Role,
    predictor_count,
)
from backend.ingestion.parsers.config_parser import parse_sidecar
from backend.ingestion.parsers.panel_parser import load_panel
from backend.utils.common import sha256_file
from backend.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def default_meta_path(data_path: Union[str, Path]) -> Path:
    data_path = Path(data_path)
    return data_path.with_name(data_path.name + ".meta")


class PanelIngestService:
    """Validates and loads a panel CSV together with its metadata sidecar."""

    def __init__(self, data_path: Union[str, Path], meta_path: Optional[Union[str, Path]] = None):
        self.data_path = Path(data_path)
        self.meta_path = Path(meta_path) if meta_path else default_meta_path(self.data_path)
        self._data: Optional[PanelDataset] = None

    def load(self) -> PanelDataset:
        if self._data is not None:
            return self._data
        logger.info(f"Ingesting {self.data_path.name} with metadata {self.meta_path.name}")
        if not self.meta_path.is_file():
            raise ConfigError(f"Metadata sidecar not found: {self.meta_path}")
        schema = parse_sidecar(self.meta_path)
        self._data = load_panel(self.data_path, schema)
        logger.info(f"Subset counts (M+K including lags):\n{self.subset_counts().to_string()}")
        return self._data

    def data_hash(self) -> str:
        return sha256_file(self.data_path)

    def subset_counts(self) -> pd.DataFrame:
        """M+K counts per survey category (rows) and country group (columns)."""
        data = self.load()
        rows = SURVEY_CATEGORIES + (ALL_CATEGORIES,)
        table = pd.DataFrame(
            [[predictor_count(data, c, g) for g in COUNTRY_GROUPS] for c in rows],
            index=list(rows), columns=list(COUNTRY_GROUPS),
        )
        table.index.name = "category"
        return table

    def describe(self) -> Dict[str, object]:
        data = self.load()
        return {
            "path": str(self.data_path),
            "periods": len(data.time_index),
            "start": str(data.time_index[0]) if len(data.time_index) else None,
            "end": str(data.time_index[-1]) if len(data.time_index) else None,
            "targets": data.ids_with_role(Role.TARGET),
            "core_predictors": data.ids_with_role(Role.CORE_PREDICTOR),
            "survey_variables": len(data.ids_with_role(Role.SURVEY)),
        }


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    parser = argparse.ArgumentParser(description="Validate a panel CSV and print its subset counts")
    parser.add_argument('--data', type=str, required=True, help='Panel CSV (first column date, YYYY-MM)')
    parser.add_argument('--meta', type=str, default=None, help='Metadata sidecar (defaults to <data>.meta)')
    args = parser.parse_args()

    service = PanelIngestService(data_path=args.data, meta_path=args.meta)
    for key, value in service.describe().items():
        logger.info(f"{key}: {value}")
