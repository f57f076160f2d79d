"""Performance and risk statistics of a daily equity curve.

All statistics assume 252 sessions per year.  Metrics that are undefined for
the given data (a zero denominator, too few observations) are reported as
``None`` rather than as zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, InsufficientDataError

TRADING_DAYS = 252
PERCENTILES = (10, 25, 50, 75, 90)


def _values(curve) -> np.ndarray:
    return np.asarray(getattr(curve, "values", curve), dtype=float)


def daily_returns(curve) -> np.ndarray:
    """Simple returns ``p_i / p_{i-1} - 1`` of an equity curve (or raw value array)."""
    p = _values(curve)
    if p.size < 2:
        raise InsufficientDataError("at least two equity values are needed for returns")
    if np.any(~(p > 0)):
        bad = int(np.flatnonzero(~(p > 0))[0])
        raise DegenerateInputError(f"nonpositive equity value {p[bad]} at position {bad}")
    return (p[1:] - p[:-1]) / p[:-1]


def arc(r: Sequence[float]) -> float:
    """Annualised compounded return ``prod(1 + r)^(252/n) - 1``."""
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        raise InsufficientDataError("arc needs at least one return")
    return float(np.prod(1.0 + r) ** (TRADING_DAYS / r.size) - 1.0)


def asd(r: Sequence[float]) -> float:
    r = np.asarray(r, dtype=float)
    if r.size < 2:
        raise InsufficientDataError("asd needs at least two returns")
    if r.min() == r.max():
        return 0.0  # avoid round-off residue from the mean
    return float(math.sqrt(TRADING_DAYS) * np.std(r, ddof=1))


def max_drawdown(curve) -> tuple[float, tuple[int, int]]:
    """Largest relative peak-to-trough fall ``1 - p_y / p_x`` and its ``(x, y)`` indices."""
    p = _values(curve)
    if p.size == 0:
        raise InsufficientDataError("max_drawdown needs a nonempty curve")
    best, pair = 0.0, (0, 0)
    peak_i = 0
    for j in range(1, p.size):
        if p[j] > p[peak_i]:
            peak_i = j
            continue
        dd = 1.0 - p[j] / p[peak_i]
        if dd > best:
            best, pair = dd, (peak_i, j)
    return float(best), pair


def max_loss_duration(curve) -> float:
    """Longest stretch, in years, from an equity high to the first session strictly above it.

    A high never exceeded again counts up to one session past the final one,
    so a curve that peaks on day 0 of 252 and never recovers scores 1.0.
    """
    p = _values(curve)
    if p.size == 0:
        raise InsufficientDataError("max_loss_duration needs a nonempty curve")
    longest = 0
    peak_i = 0
    for j in range(1, p.size):
        if p[j] > p[peak_i]:
            if j - peak_i > 1:
                longest = max(longest, j - peak_i)
            peak_i = j
    if p.size - peak_i > 1:
        longest = max(longest, p.size - peak_i)
    return longest / TRADING_DAYS


def information_ratios(arc_: float, asd_: float, md: float, mld: float) -> tuple[float | None, ...]:
    """``(IR, IR**, IR***)``; each is ``None`` when its denominator vanishes."""
    ir = arc_ / asd_ if asd_ > 0 else None
    ir2 = ir * math.copysign(1.0, arc_) * arc_ / md if ir is not None and md > 0 else None
    if ir2 is not None and arc_ == 0:
        ir2 = 0.0
    ir3 = arc_ ** 3 / (asd_ * md * mld) * 1000 if asd_ > 0 and md > 0 and mld > 0 else None
    return ir, ir2, ir3


def var_cvar(r: Sequence[float], alpha: float = 0.05) -> tuple[float, float]:
    """Historical VaR and CVaR as signed returns.

    VaR is the ``ceil(alpha n)``-th smallest return; CVaR averages the
    ``ceil(alpha n)`` smallest returns, so ``cvar <= var`` always holds.
    """
    r = np.sort(np.asarray(r, dtype=float))
    if r.size < 20:
        raise InsufficientDataError(f"VaR needs at least 20 returns, got {r.size}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    k = max(math.ceil(alpha * r.size - 1e-12), 1)
    return float(r[k - 1]), math.fsum(r[:k]) / k


def lower_percentile(r: Sequence[float], pct: float) -> float:
    """Order statistic ``sorted(r)[ceil(pct/100 * n) - 1]`` (no interpolation)."""
    s = np.sort(np.asarray(r, dtype=float))
    k = max(math.ceil(pct / 100 * s.size - 1e-12), 1)
    return float(s[k - 1])


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std: float | None
    variance: float | None
    min: float
    p10: float
    p25: float
    p50: float
    p75: float
    p90: float
    max: float
    skew: float | None
    kurtosis: float | None


def summary_stats(r: Sequence[float]) -> SummaryStats:
    """Descriptive statistics; kurtosis is the plain fourth standardised moment (normal = 3)."""
    r = np.asarray(r, dtype=float)
    if r.size < 2:
        raise InsufficientDataError("summary statistics need at least two returns")
    constant = r.min() == r.max()
    var = 0.0 if constant else float(np.var(r, ddof=1))
    dev = r - r.mean()
    m2 = 0.0 if constant else float(np.mean(dev ** 2))
    skew = kurt = None
    if m2 > 0:
        skew = float(np.mean(dev ** 3) / m2 ** 1.5)
        if r.size >= 4:
            kurt = float(np.mean(dev ** 4) / m2 ** 2)
    pct = {f"p{p}": lower_percentile(r, p) for p in PERCENTILES}
    return SummaryStats(
        n=int(r.size), mean=float(r.mean()),
        std=math.sqrt(var) if var > 0 else None, variance=var if var > 0 else None,
        min=float(r.min()), max=float(r.max()), skew=skew, kurtosis=kurt, **pct)


@dataclass(frozen=True)
class MetricsReport:
    arc: float
    asd: float | None
    md: float
    mld: float
    ir: float | None
    ir2: float | None
    ir3: float | None
    var95: float | None
    cvar95: float | None
    mean: float
    std: float | None
    min: float
    p10: float
    p25: float
    p50: float
    p75: float
    p90: float
    max: float
    skew: float | None
    kurtosis: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=False)


REPORT_KEYS = tuple(f.name for f in fields(MetricsReport))


def compute_report(curve) -> MetricsReport:
    p = _values(curve)
    if p.size < 3:
        raise InsufficientDataError("a metrics report needs at least three equity values")
    r = daily_returns(p)
    a = arc(r)
    s = asd(r)
    md, _ = max_drawdown(p)
    mld = max_loss_duration(p)
    ir, ir2, ir3 = information_ratios(a, s, md, mld)
    try:
        var, cvar = var_cvar(r)
    except InsufficientDataError:
        var = cvar = None
    stats = summary_stats(r)
    return MetricsReport(
        arc=a, asd=s, md=md, mld=mld, ir=ir, ir2=ir2, ir3=ir3, var95=var, cvar95=cvar,
        mean=stats.mean, std=stats.std, min=stats.min, p10=stats.p10, p25=stats.p25, p50=stats.p50,
        p75=stats.p75, p90=stats.p90, max=stats.max, skew=stats.skew, kurtosis=stats.kurtosis)
