import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # expose oracles.py

CASE_DIR = Path(__file__).parent.parent / "data" / "cases"


def case_path(name: str) -> Path:
    return CASE_DIR / f"{name}.m"


@pytest.fixture(scope="session")
def cases_dir() -> Path:
    return CASE_DIR


def all_case_names():
    return sorted(p.stem for p in CASE_DIR.glob("*.m"))


@pytest.fixture(params=all_case_names())
def any_case_name(request):
    return request.param
