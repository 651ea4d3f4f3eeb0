from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

from toxipipe import lexvar

FIXTURES = Path(__file__).parent.parent / "src" / "toxipipe" / "fixtures"


@pytest.fixture(scope="session")
def toy_embeddings_path() -> Path:
    return FIXTURES / "toy_embeddings.txt"


@pytest.fixture(scope="session")
def toy_model(toy_embeddings_path) -> lexvar.EmbeddingModel:
    return lexvar.load_embeddings(toy_embeddings_path)
