"""Order-independent summary statistics and the log-log slope fit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class Moments:
    count: int
    mean: float
    var: float  # unbiased
    var_se: float
    mean_se: float


def moments(xs: Sequence[float]) -> Moments:
    """Mean and unbiased variance with exactly rounded sums (``math.fsum``).

    ``fsum`` is independent of summation order, so shuffled inputs give
    bit-identical results.  The variance SE uses the normal approximation
    ``Var(s^2) ~ (m4 - s^4 (m-3)/(m-1)) / m`` with the empirical 4th moment.
    """
    m = len(xs)
    if m < 2:
        raise ValueError("need at least two values")
    mean = math.fsum(xs) / m
    dev = [x - mean for x in xs]
    var = math.fsum(v * v for v in dev) / (m - 1)
    m4 = math.fsum(v**4 for v in dev) / m
    var_se = math.sqrt(max(m4 - var * var * (m - 3) / (m - 1), 0.0) / m)
    return Moments(m, mean, var, var_se, math.sqrt(var / m))


@dataclass(frozen=True)
class Frequency:
    hits: int
    count: int

    @property
    def p(self) -> float:
        return self.hits / self.count

    @property
    def se(self) -> float:
        p = self.p
        return math.sqrt(p * (1 - p) / self.count)


@dataclass(frozen=True)
class PowerFit:
    slope: float
    intercept: float
    r2: float
    slope_se: float
    slope_lo: float
    slope_hi: float
    points: int


def loglog_fit(x: Sequence[float], y: Sequence[float], level: float = 0.95) -> PowerFit | None:
    """OLS of log y on log x with a t-interval for the slope; None when degenerate."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.any(y <= 0) or np.any(x <= 0):
        return None
    lx, ly = np.log(x), np.log(y)
    res = sps.linregress(lx, ly)
    dof = x.size - 2
    if dof > 0 and res.stderr > 0:
        half = sps.t.ppf(0.5 + level / 2, dof) * res.stderr
    else:
        half = 0.0
    return PowerFit(float(res.slope), float(res.intercept), float(res.rvalue**2),
                    float(res.stderr), float(res.slope - half), float(res.slope + half),
                    int(x.size))
