"""Sweeps shared by the acceptance and dynamics tests (computed once per session)."""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

from hhgspt.dynamics import sweep_current

WORKERS = os.cpu_count() or 1
RESOLUTION = 0.1

GRIDS = {
    ("h_slow", "low"): np.arange(5.0, 35.0 + 1e-9, 1.0),
    ("h_slow", "high"): np.arange(250.0, 290.0 + 1e-9, 5.0),
    ("n_slow", "low"): np.arange(5.0, 15.0 + 1e-9, 0.5),
    ("n_slow", "high"): np.arange(250.0, 290.0 + 1e-9, 5.0),
}


@lru_cache(maxsize=None)
def sweep(regime: str, part: str):
    g = GRIDS[(regime, part)]
    return sweep_current((g[0], g[-1]), regime, resolution=RESOLUTION, workers=WORKERS, grid=g)


def first_boundary(regime: str, part: str, left: str | None, right: str | None,
                   after: float = -np.inf) -> float:
    """Location of the first class change matching the given sides (None matches anything)."""
    for b in sweep(regime, part).boundaries:
        if b.location < after:
            continue
        if (left is None or b.left == left) and (right is None or b.right == right):
            return b.location
    return float("nan")
