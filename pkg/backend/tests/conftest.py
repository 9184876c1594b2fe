"""
Shared fixtures: small synthetic panels, their files and a small plan.
"""
import pytest

from backend.ingestion.panel import PanelDataset
from backend.ingestion.synthetic import DgpSpec, generate_synthetic, write_synthetic
from backend.tests.helpers import SMALL_PLAN

SMALL_COUNTS = {"industry.EA": 3, "consumer.Big6": 2, "services.Big9": 2}


@pytest.fixture
def small_spec() -> DgpSpec:
    return DgpSpec(periods=48, counts=SMALL_COUNTS, n_signals=2, noise_sd=0.2)


@pytest.fixture
def small_panel(small_spec) -> PanelDataset:
    return generate_synthetic(small_spec, seed=1)


@pytest.fixture
def panel_files(tmp_path, small_panel):
    csv_path, meta_path = write_synthetic(small_panel, tmp_path / "panel.csv")
    return csv_path, meta_path


@pytest.fixture
def plan_file(tmp_path):
    path = tmp_path / "small.plan"
    path.write_text(SMALL_PLAN)
    return path
