"""Small helpers for ladder verdicts: log-log slopes and boundedness ratios."""
from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and the RMS fit residual.

    Returns ``(nan, nan)`` if any value is non-positive or fewer than two points are given.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        return math.nan, math.nan
    lx, ly = np.log(x), np.log(y)
    coef = np.polyfit(lx, ly, 1)
    res = ly - np.polyval(coef, lx)
    return float(coef[0]), float(np.sqrt(np.mean(res**2)))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Slope part of :func:`loglog_fit`."""
    return loglog_fit(x, y)[0]


def spread(values: Sequence[float]) -> float:
    """``max/min`` of a ladder of norms; 1 for an all-zero ladder, ``inf`` if only some vanish."""
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0 or np.all(v == 0):
        return 1.0
    if np.any(v == 0):
        return math.inf
    return float(v.max() / v.min())


def strictly_decreasing(values: Sequence[float]) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))
