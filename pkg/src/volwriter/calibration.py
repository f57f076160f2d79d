"""Least-squares fitting of Variance-Gamma parameters to an option chain."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.optimize import least_squares

from .bsm import BsmInputs, implied_vol
from .errors import ConfigError, InsufficientDataError, NumericError, NoSolutionError
from .market_data import MarketSnapshot, TRADING_DAYS, TradingCalendar
from .vg import DEFAULT_GRID, PricingGrid, VgChainPricer, VgParams, martingale_feasible, vg_prices

DEFAULT_START = (None, 0.2, -0.1)
_FEASIBILITY_MARGIN = 1e-6


@dataclass(frozen=True)
class CalibrationConfig:
    refit_interval: int = 30
    sigma_bounds: tuple[float, float] = (0.01, 2.0)
    nu_bounds: tuple[float, float] = (1e-4, 5.0)
    theta_bounds: tuple[float, float] = (-2.0, 2.0)
    max_iterations: int = 200
    tolerance: float = 1e-12
    min_bid: float = 0.0
    min_mid: float = 0.05
    moneyness_window: float = 0.15
    min_tau_days: float = 1.0
    min_quotes: int = 5
    otm_only: bool = True
    grid: PricingGrid = DEFAULT_GRID

    def __post_init__(self):
        if self.refit_interval <= 0:
            raise ConfigError("refit_interval must be positive")
        for name in ("sigma_bounds", "nu_bounds", "theta_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"{name} must satisfy lower < upper")
        if self.sigma_bounds[0] <= 0 or self.nu_bounds[0] <= 0:
            raise ConfigError("sigma and nu bounds must be positive")
        if self.max_iterations < 1 or not self.tolerance > 0:
            raise ConfigError("max_iterations must be >= 1 and tolerance > 0")
        if self.min_quotes < 3:
            raise ConfigError("min_quotes must be at least 3 for a three-parameter fit")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.sigma_bounds[0], self.nu_bounds[0], self.theta_bounds[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.sigma_bounds[1], self.nu_bounds[1], self.theta_bounds[1]])


@dataclass(frozen=True)
class CalibrationSet:
    """Filtered quotes entering the objective."""

    spot: float
    strikes: np.ndarray
    taus: np.ndarray
    is_call: np.ndarray
    mids: np.ndarray
    rate: float
    div: float


def calibration_schedule(session: int | TradingCalendar, interval: int) -> list[int]:
    """Refit minutes ``0, interval, 2*interval, ...`` inside one session."""
    length = session.session_length if isinstance(session, TradingCalendar) else int(session)
    if interval <= 0:
        raise ValueError("interval must be positive")
    return list(range(0, length, interval))


def select_quotes(snapshot: MarketSnapshot, cfg: CalibrationConfig,
                  calendar: TradingCalendar | None = None) -> CalibrationSet:
    """Apply the quote filter; ``calendar`` (default: business days from the quote date) fixes tau."""
    if calendar is None or snapshot.t.date not in calendar:
        calendar = TradingCalendar((snapshot.t.date,))
    spot = snapshot.spot
    min_tau = cfg.min_tau_days / TRADING_DAYS
    rows = []
    tau_of = {}
    for key, quote in snapshot.chain.items():
        bar = quote.bar
        if not bar.bid > cfg.min_bid or bar.mid < cfg.min_mid:
            continue
        if abs(math.log(key.strike / spot)) > cfg.moneyness_window:
            continue
        if cfg.otm_only and (key.strike < spot if key.right.is_call else key.strike > spot):
            continue
        tau = tau_of.get(key.expiry)
        if tau is None:
            tau = tau_of[key.expiry] = calendar.year_fraction(snapshot.t, key.expiry)
        if tau < min_tau:
            continue
        rows.append((tau, key.strike, key.right.is_call, bar.mid))
    if len(rows) < cfg.min_quotes:
        raise InsufficientDataError(
            f"calibration at {snapshot.t} needs {cfg.min_quotes} quotes after filtering, got {len(rows)}")
    rows.sort()
    tau, k, call, mid = (np.array(c) for c in zip(*rows))
    return CalibrationSet(spot, k.astype(float), tau.astype(float), call.astype(bool), mid.astype(float),
                          snapshot.risk_free, snapshot.div_yield)


def atm_implied_vol(cs: CalibrationSet) -> float:
    """Implied vol of the shortest-dated option nearest the money, clipped to ``[0.05, 1]``."""
    order = np.lexsort((np.abs(np.log(cs.strikes / cs.spot)), cs.taus))
    for i in order[:6]:
        try:
            right = "C" if cs.is_call[i] else "P"
            iv = implied_vol(cs.mids[i], BsmInputs(cs.spot, cs.strikes[i], cs.taus[i], cs.rate, cs.div, 0.0, right))
            return float(np.clip(iv, 0.05, 1.0))
        except (NoSolutionError, NumericError):
            continue
    return 0.2


def objective(cs: CalibrationSet, params: VgParams, grid: PricingGrid = DEFAULT_GRID) -> float:
    """Sum of squared price errors, each option priced on its own truncation frame."""
    model = vg_prices(cs.spot, cs.strikes, cs.taus, cs.rate, cs.div, cs.is_call, params, grid)
    return float(np.sum((model - cs.mids) ** 2))


def _fit(cs: CalibrationSet, x0: np.ndarray, frame: VgParams, cfg: CalibrationConfig, width: float):
    pricer = VgChainPricer(cs.spot, cs.strikes, cs.taus, cs.is_call, cs.rate, cs.div, frame, cfg.grid, width)
    # infeasible points get a residual that grows with the violation, so the
    # solver is pushed back inside the martingale region
    base = np.sqrt(np.sum(cs.mids ** 2))

    def residuals(x):
        s, n, th = x
        slack = 1.0 - th * n - 0.5 * s * s * n
        if slack <= _FEASIBILITY_MARGIN:
            out = np.full(cs.mids.size, base * (1.0 + _FEASIBILITY_MARGIN - slack))
            return out
        return pricer.prices(s, n, th) - cs.mids

    lo, hi = cfg.lower, cfg.upper
    x0 = np.clip(x0, lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo))
    return least_squares(residuals, x0, bounds=(lo, hi), method="trf", x_scale="jac",
                         ftol=cfg.tolerance, xtol=cfg.tolerance, gtol=cfg.tolerance,
                         max_nfev=cfg.max_iterations)


def calibrate(snapshot: MarketSnapshot, warm_start: VgParams | None = None,
              cfg: CalibrationConfig = CalibrationConfig(),
              calendar: TradingCalendar | None = None) -> VgParams:
    """Fit ``(sigma, nu, theta)`` to the filtered mids of ``snapshot``.

    Starts from ``warm_start`` or from ``(ATM implied vol, 0.2, -0.1)``.  The
    search runs on a truncation frame fixed at the start (widened so it still
    covers the fitted law), then a short polish runs on the frame that
    :func:`objective` itself uses at the fitted point.  The result never has a
    larger :func:`objective` than the warm start.  If the optimiser fails, the
    warm start comes back with ``stale=True``; with no warm start the failure
    is raised.
    """
    cs = select_quotes(snapshot, cfg, calendar)
    if warm_start is not None:
        start = warm_start
    else:
        start = VgParams(atm_implied_vol(cs), DEFAULT_START[1], DEFAULT_START[2])
    width = cfg.grid.width_multiplier
    try:
        res = _fit(cs, np.array(start.as_tuple()), start, cfg, width + 2.0)
        ok = res.status >= 0 and martingale_feasible(*res.x)
        if ok:
            fitted = VgParams(*map(float, res.x))
            polish = _fit(cs, res.x, fitted, cfg, width)
            if polish.status >= 0 and martingale_feasible(*polish.x):
                fitted = VgParams(*map(float, polish.x))
    except (ValueError, NumericError, FloatingPointError):
        ok = False
    if not ok:
        if warm_start is None:
            raise NoSolutionError(f"VG calibration failed at {snapshot.t}")
        return replace(warm_start, stale=True)

    value = objective(cs, fitted, cfg.grid)
    if warm_start is not None:
        start_value = objective(cs, warm_start, cfg.grid)
        if start_value <= value:
            return replace(warm_start, fitted_at=snapshot.t, objective_value=start_value, stale=False)
    return replace(fitted, fitted_at=snapshot.t, objective_value=value)


PARAMS_COLUMNS = ("date", "minute", "sigma", "nu", "theta", "objective")


def write_params_csv(params: Iterable[VgParams], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(PARAMS_COLUMNS) + "\n")
        for p in params:
            t = p.fitted_at
            obj = "" if p.objective_value is None else repr(float(p.objective_value))
            fh.write(f"{t.date.isoformat()},{t.minute},{p.sigma!r},{p.nu!r},{p.theta!r},{obj}\n")
    return path
