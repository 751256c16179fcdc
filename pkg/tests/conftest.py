from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ramkit.dsl import load_model  # noqa: E402

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "ramkit" / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fig4a():
    return load_model(FIXTURES / "fig4a.ram")
