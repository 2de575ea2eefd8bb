from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slowfastvad.clients import HashEmbeddingClient
from slowfastvad.ingest import ScoreSeries


@pytest.fixture(scope="session")
def embedder() -> HashEmbeddingClient:
    return HashEmbeddingClient()


@pytest.fixture()
def simple_series() -> ScoreSeries:
    rng = np.random.default_rng(7)
    return ScoreSeries("v1", "s1", rng.uniform(0.0, 1.0, size=64))
