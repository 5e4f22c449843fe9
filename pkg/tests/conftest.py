import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
E2E = FIXTURES / "e2e"
GOLDEN = E2E / "golden"
E2E_INPUTS = ("grants.jsonl", "pubs.jsonl", "annotations.csv", "labels.csv", "config.json")


@pytest.fixture
def e2e_dir(tmp_path):
    """A scratch copy of the end-to-end fixture inputs (no golden outputs)."""
    for name in E2E_INPUTS:
        shutil.copy(E2E / name, tmp_path / name)
    return tmp_path
