from __future__ import annotations

from pathlib import Path

import pytest

from marg.backend import ScriptedBackend
from marg.corpus import load_paper

DATA = Path(__file__).parent / "data"
PAPERS = DATA / "papers"
SCRIPTS = DATA / "scripts"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def two_chunk():
    return load_paper(PAPERS / "two_chunk.json")


@pytest.fixture
def three_chunk():
    return load_paper(PAPERS / "three_chunk.json")


@pytest.fixture
def scripted():
    """Factory: a fresh backend for a named script under tests/data/scripts."""

    def make(name: str, **kwargs) -> ScriptedBackend:
        return ScriptedBackend.from_file(SCRIPTS / f"{name}.json", **kwargs)

    return make
