from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hhgspt.model_core import ModelParameters  # noqa: E402


@pytest.fixture
def hp():
    return ModelParameters.h_slow()


@pytest.fixture
def np_():
    return ModelParameters.n_slow()


def at(I: float, regime: str = "h_slow", **kw) -> ModelParameters:
    base = ModelParameters.h_slow(**kw) if regime == "h_slow" else ModelParameters.n_slow(**kw)
    return base.with_current(I)
