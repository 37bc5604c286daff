"""Student-t tail probabilities and quantiles via the incomplete-beta relation."""

from __future__ import annotations

import math

from scipy.special import betainc, betaincinv


def t_two_sided_p(t: float, df: int) -> float:
    """Two-sided p-value of a t-statistic: P(|T| >= |t|) for T ~ t(df)."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def t_ppf(q: float, df: int) -> float:
    """Quantile of the t(df) distribution, any df >= 1."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    tail = 2.0 * (1.0 - q) if q > 0.5 else 2.0 * q
    z = float(betaincinv(df / 2.0, 0.5, tail))
    t = math.sqrt(df * (1.0 - z) / z)
    return t if q > 0.5 else -t
