from pathlib import Path

import pytest

from roadscribe.taxonomy import default_taxonomy


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def demo_manifest(repo_root: Path) -> Path:
    return repo_root / "demo" / "manifest.jsonl"
