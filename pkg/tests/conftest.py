from importlib import resources
from pathlib import Path

import pytest


def data_path(name: str) -> Path:
    return Path(str(resources.files("offload_aco") / "data" / name))


@pytest.fixture
def four_paths_path() -> Path:
    return data_path("four_paths.json")


@pytest.fixture
def fib_path() -> Path:
    return data_path("fib.json")
