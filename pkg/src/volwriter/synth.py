"""Deterministic synthetic minute-level markets.

The underlying path is simulated eagerly; option quotes are priced on demand
from the configured quote model, so a year of minute data costs no more
memory than the underlying itself.  Every random draw comes from a Philox
stream keyed by ``(seed, purpose, ...)``, which makes the output independent
of the order in which sessions or quotes are requested.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np

from .bsm import BsmInputs, implied_vol, price_array
from .errors import ConfigError
from .market_data import (
    DayBlock,
    MarketStore,
    OptionBook,
    OptionKey,
    Right,
    SESSION_LENGTH,
    TRADING_DAYS,
    TradingCalendar,
)
from .vg import DEFAULT_GRID, VgChainPricer, VgParams, vg_prices

VIX_TAU = 30 / 365
MIN_QUOTE_IV = 0.01

_STREAM_PATH, _STREAM_IV, _STREAM_NOISE = 0, 1, 2


@dataclass(frozen=True)
class GbmProcess:
    mu: float = 0.0
    sigma: float = 0.15


@dataclass(frozen=True)
class VgProcess:
    sigma: float = 0.15
    nu: float = 0.2
    theta: float = -0.1
    drift: float = 0.0


@dataclass(frozen=True)
class BsmQuotes:
    """BSM quotes with ``iv(K) = level_d + skew * ln(K / F)``.

    ``level_d`` follows a daily log-AR(1) around ``iv_level`` with annualised
    volatility ``iv_vol_of_vol``; zero keeps it flat.
    """

    iv_level: float = 0.20
    iv_skew: float = 0.0
    iv_vol_of_vol: float = 0.0
    iv_mean_reversion: float = 5.0


@dataclass(frozen=True)
class VgQuotes:
    sigma: float = 0.15
    nu: float = 0.2
    theta: float = -0.1

    @property
    def params(self) -> VgParams:
        return VgParams(self.sigma, self.nu, self.theta)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_days: int = 10
    s0: float = 4000.0
    start_date: dt.date = dt.date(2018, 1, 2)
    process: GbmProcess | VgProcess = field(default_factory=GbmProcess)
    quote_model: BsmQuotes | VgQuotes = field(default_factory=BsmQuotes)
    spread: float = 0.0
    underlying_spread: float = 0.0
    mid_noise: float = 0.0
    strike_spacing: float = 25.0
    strike_span: float = 0.10
    dte_list: tuple[int, ...] = (7, 14)
    risk_free: float = 0.02
    div_yield: float = 0.015
    vix_warmup_days: int = 260
    session_length: int = SESSION_LENGTH

    def __post_init__(self):
        object.__setattr__(self, "dte_list", tuple(sorted(int(d) for d in self.dte_list)))
        problems = []
        if self.n_days < 1:
            problems.append("n_days must be >= 1")
        if not self.s0 > 0:
            problems.append("s0 must be positive")
        if not 0 <= self.spread < 1:
            problems.append("spread must lie in [0, 1)")
        if not 0 <= self.underlying_spread < 1:
            problems.append("underlying_spread must lie in [0, 1)")
        if not 0 <= self.mid_noise <= 1:
            problems.append("mid_noise must lie in [0, 1]")
        if not self.strike_spacing > 0 or not self.strike_span > 0:
            problems.append("strike_spacing and strike_span must be positive")
        if 7 not in self.dte_list or min(self.dte_list) < 1:
            problems.append("dte_list must contain 7 and only positive values")
        if self.vix_warmup_days < 0:
            problems.append("vix_warmup_days must be >= 0")
        if isinstance(self.quote_model, BsmQuotes):
            if not self.quote_model.iv_level > 0:
                problems.append("iv_level must be positive")
            if self.quote_model.iv_vol_of_vol < 0 or not self.quote_model.iv_mean_reversion > 0:
                problems.append("iv_vol_of_vol must be >= 0 and iv_mean_reversion > 0")
        else:
            try:
                self.quote_model.params
            except ValueError as exc:
                problems.append(str(exc))
        if isinstance(self.process, GbmProcess):
            if self.process.sigma < 0:
                problems.append("process sigma must be >= 0")
        else:
            try:
                VgParams(self.process.sigma, self.process.nu, self.process.theta)
            except ValueError as exc:
                problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))

    def calendar(self) -> TradingCalendar:
        return TradingCalendar.weekdays(self.start_date, self.n_days, self.session_length)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def simulate_closes(cfg: GeneratorConfig, n_days: int, L: int) -> np.ndarray:
    """Minute closes of the underlying, ``n_days * L`` values, first bar opening at ``s0``."""
    dt_min = 1.0 / (TRADING_DAYS * L)
    inc = np.empty((n_days, L))
    proc = cfg.process
    for day in range(n_days):
        rng = _rng(cfg.seed, _STREAM_PATH, day)
        z = rng.standard_normal(L)
        if isinstance(proc, GbmProcess):
            inc[day] = (proc.mu - 0.5 * proc.sigma ** 2) * dt_min + proc.sigma * math.sqrt(dt_min) * z
        else:
            p = VgParams(proc.sigma, proc.nu, proc.theta)
            g = rng.gamma(dt_min / proc.nu, proc.nu, size=L)
            inc[day] = (proc.drift + p.omega) * dt_min + proc.theta * g + proc.sigma * np.sqrt(g) * z
    return cfg.s0 * np.exp(np.cumsum(inc.ravel()))


def iv_levels(cfg: GeneratorConfig, n_total: int) -> np.ndarray:
    """Daily ATM implied-vol levels for ``n_total`` days (warm-up days first)."""
    qm = cfg.quote_model
    if isinstance(qm, VgQuotes):
        return np.full(n_total, np.nan)
    if qm.iv_vol_of_vol == 0:
        return np.full(n_total, qm.iv_level)
    phi = math.exp(-qm.iv_mean_reversion / TRADING_DAYS)
    stat_sd = qm.iv_vol_of_vol / math.sqrt(2 * qm.iv_mean_reversion)
    step_sd = stat_sd * math.sqrt(1 - phi * phi)
    eps = _rng(cfg.seed, _STREAM_IV).standard_normal(n_total)
    x = np.empty(n_total)
    x[0] = stat_sd * eps[0]
    for i in range(1, n_total):
        x[i] = phi * x[i - 1] + step_sd * eps[i]
    return qm.iv_level * np.exp(x)


class SyntheticOptionBook(OptionBook):
    """Option chain priced on demand from a quote model.

    Expiries are every date ``d + k`` (``d`` a session, ``k`` in ``dte_list``)
    that is itself a business day, listed from ``max(dte_list)`` calendar days
    before expiry.  Strikes are multiples of ``strike_spacing`` within
    ``strike_span`` of every session open since listing, so a listed strike
    never disappears before expiry.
    """

    def __init__(self, cfg: GeneratorConfig, calendar: TradingCalendar, closes: np.ndarray,
                 day_iv: np.ndarray):
        self.cfg = cfg
        self.calendar = calendar
        self.L = calendar.session_length
        self.closes = closes
        self.day_open = np.concatenate(([cfg.s0], closes[:-1]))[:: self.L]
        self.day_iv = day_iv
        self.max_dte = max(cfg.dte_list)
        last_business = np.busday_offset(np.datetime64(calendar.dates[-1], "D"), 0, roll="forward")
        expiries = set()
        for d in calendar.dates:
            for k in cfg.dte_list:
                e = d + dt.timedelta(days=k)
                if e in calendar or (np.datetime64(e, "D") > last_business and np.is_busday(np.datetime64(e, "D"))):
                    expiries.add(e)
        self.expiries = tuple(sorted(expiries))
        self._expiry_arr = np.array([np.datetime64(e, "D") for e in self.expiries])
        self._listing_start = {e: self._first_day_on_or_after(e - dt.timedelta(days=self.max_dte))
                               for e in self.expiries}
        if isinstance(cfg.quote_model, VgQuotes):
            self._vg = cfg.quote_model.params
        else:
            self._vg = None

    def _first_day_on_or_after(self, date: dt.date) -> int:
        cal_days = np.array([np.datetime64(d, "D") for d in self.calendar.dates])
        return int(np.searchsorted(cal_days, np.datetime64(date, "D")))

    # -- listing ----------------------------------------------------------
    def listed_expiries(self, day: int) -> list[dt.date]:
        d = self.calendar.dates[day]
        lo = np.searchsorted(self._expiry_arr, np.datetime64(d, "D"))
        hi = np.searchsorted(self._expiry_arr, np.datetime64(d + dt.timedelta(days=self.max_dte), "D"), side="right")
        return list(self.expiries[lo:hi])

    def strikes(self, expiry: dt.date, day: int) -> np.ndarray:
        start = min(self._listing_start[expiry], day)
        opens = self.day_open[start:day + 1]
        sp, span = self.cfg.strike_spacing, self.cfg.strike_span
        k_lo = math.ceil(opens.min() * (1 - span) / sp)
        k_hi = math.floor(opens.max() * (1 + span) / sp)
        return np.arange(max(k_lo, 1), k_hi + 1) * sp

    @lru_cache(maxsize=64)
    def keys(self, day: int) -> tuple[OptionKey, ...]:
        out = []
        for e in self.listed_expiries(day):
            for k in self.strikes(e, day):
                for right in (Right.CALL, Right.PUT):
                    out.append(OptionKey(e, float(k), right))
        return tuple(sorted(out))

    def is_listed(self, key: OptionKey, day: int) -> bool:
        if key.expiry not in self._listing_start or key.expiry not in self.listed_expiries(day):
            return False
        strikes = self.strikes(key.expiry, day)
        k = key.strike / self.cfg.strike_spacing
        return abs(k - round(k)) < 1e-9 and strikes[0] <= key.strike <= strikes[-1]

    # -- pricing ----------------------------------------------------------
    def _model_mids(self, day: int, minutes: np.ndarray, keys) -> np.ndarray:
        cal, cfg = self.calendar, self.cfg
        L = self.L
        S = self.closes[day * L + minutes][:, None]
        K = np.array([k.strike for k in keys])[None, :]
        is_call = np.array([k.right.is_call for k in keys])[None, :]
        tau_by_expiry = {e: cal.session_year_fractions(day, e)[minutes] for e in {k.expiry for k in keys}}
        tau = np.stack([tau_by_expiry[k.expiry] for k in keys], axis=1) if keys else np.zeros((len(minutes), 0))
        r, q = cfg.risk_free, cfg.div_yield
        if self._vg is None:
            qm = cfg.quote_model
            fwd = S * np.exp((r - q) * tau)
            iv = np.maximum(self.day_iv[cfg.vix_warmup_days + day] + qm.iv_skew * np.log(K / fwd), MIN_QUOTE_IV)
            return price_array(S, K, tau, r, q, iv, is_call)
        out = np.empty((len(minutes), len(keys)))
        if len(minutes) > len(keys):
            for j, key in enumerate(keys):
                out[:, j] = vg_prices(S[:, 0], key.strike, tau[:, j], r, q, key.right.is_call, self._vg)
            return out
        for i in range(len(minutes)):
            live = tau[i] > 0
            row = np.maximum(np.where(is_call[0], S[i] - K[0], K[0] - S[i]), 0.0)
            if live.any():
                pricer = VgChainPricer(S[i, 0], K[0, live], tau[i, live], is_call[0, live], r, q, self._vg,
                                       DEFAULT_GRID, DEFAULT_GRID.width_multiplier)
                row[live] = pricer.prices(*self._vg.as_tuple())
            out[i] = row
        return out

    def _noise(self, day: int, key: OptionKey) -> np.ndarray:
        stream = (_STREAM_NOISE, day, key.expiry.toordinal(), int(round(key.strike * 10_000)), int(key.right.is_call))
        return _rng(self.cfg.seed, *stream).uniform(-1.0, 1.0, self.L)

    def _quotes(self, day: int, minutes: np.ndarray, keys) -> tuple[np.ndarray, np.ndarray]:
        mid = self._model_mids(day, minutes, keys)
        cfg = self.cfg
        if cfg.mid_noise > 0 and cfg.spread > 0:
            noise = np.stack([self._noise(day, k)[minutes] for k in keys], axis=1)
            mid = mid * (1.0 + cfg.spread * cfg.mid_noise * noise)
        return mid * (1.0 - cfg.spread), mid * (1.0 + cfg.spread)

    def day_block(self, day: int) -> DayBlock:
        keys = self.keys(day)
        bid, ask = self._quotes(day, np.arange(self.L), keys)
        return DayBlock(keys, bid, ask)

    def quotes_at(self, day: int, minute: int):
        keys = self.keys(day)
        bid, ask = self._quotes(day, np.array([minute]), keys)
        return keys, bid[0], ask[0]

    @lru_cache(maxsize=256)
    def key_day(self, key: OptionKey, day: int):
        if not self.is_listed(key, day):
            return None
        bid, ask = self._quotes(day, np.arange(self.L), (key,))
        return bid[:, 0], ask[:, 0]


def _vix_levels(cfg: GeneratorConfig, day_iv: np.ndarray) -> np.ndarray:
    if isinstance(cfg.quote_model, BsmQuotes):
        return 100.0 * day_iv
    r, q = cfg.risk_free, cfg.div_yield
    fwd = cfg.s0 * math.exp((r - q) * VIX_TAU)
    p = cfg.quote_model.params
    price = float(vg_prices(cfg.s0, fwd, VIX_TAU, r, q, True, p))
    iv = implied_vol(price, BsmInputs(cfg.s0, fwd, VIX_TAU, r, q, 0.0, Right.CALL))
    return np.full(day_iv.size, 100.0 * iv)


def generate(cfg: GeneratorConfig, calendar: TradingCalendar | None = None) -> MarketStore:
    """Build a synthetic :class:`MarketStore` from ``cfg``.

    Option mids equal the quote model's price (plus optional noise bounded by
    the spread when ``mid_noise > 0``); ``bid = mid (1 - spread)`` and
    ``ask = mid (1 + spread)``.  VIX is ``100 x`` the model's 30-day ATM
    implied volatility, one value per session, preceded by
    ``vix_warmup_days`` business days of history.
    """
    calendar = calendar or cfg.calendar()
    L = calendar.session_length
    n = len(calendar)
    closes = simulate_closes(cfg, n, L)
    opens = np.concatenate(([cfg.s0], closes[:-1]))
    und = np.empty((n * L, 6))
    und[:, 0] = opens
    und[:, 1] = np.maximum(opens, closes)
    und[:, 2] = np.minimum(opens, closes)
    und[:, 3] = closes
    und[:, 4] = closes * (1.0 - cfg.underlying_spread)
    und[:, 5] = closes * (1.0 + cfg.underlying_spread)

    n_total = cfg.vix_warmup_days + n
    day_iv = iv_levels(cfg, n_total)
    warm = np.busday_offset(np.datetime64(calendar.dates[0], "D"), -np.arange(cfg.vix_warmup_days, 0, -1),
                            roll="backward")
    vix_dates = [d.astype(dt.date) for d in warm] + list(calendar.dates)
    vix = _vix_levels(cfg, day_iv)

    book = SyntheticOptionBook(cfg, calendar, closes, day_iv)
    return MarketStore(
        calendar, und, book, vix_dates, vix,
        list(calendar.dates), [cfg.risk_free] * n, [cfg.div_yield] * n,
    )


def config_fields() -> dict[str, list[str]]:
    """Field names per config dataclass, used for config-file validation."""
    return {cls.__name__: [f.name for f in fields(cls)]
            for cls in (GeneratorConfig, GbmProcess, VgProcess, BsmQuotes, VgQuotes)}
