"""Minute-by-minute simulation of a systematic short-option book.

Each session is processed as a short list of decision events (settle, open,
hedge) in minute order.  Between events the holdings are constant, so the
per-minute equity is filled in vectorised segments from the session's mid
prices.  Orders at a minute use that minute's quotes; the equity at a minute
is measured after all of its events.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .bsm import BsmInputs, delta_array, implied_vol
from .calibration import CalibrationConfig, calibrate
from .errors import (
    ConfigError,
    InsufficientDataError,
    MarketDataError,
    NumericError,
    StaleDataError,
)
from .market_data import (
    DEFAULT_MAX_STALENESS,
    MULTIPLIER,
    MarketStore,
    OptionKey,
    QuoteBar,
    Timestamp,
    ffill_mids,
)
from .strategy import (
    LegSet,
    SizingKind,
    SizingRule,
    StrategySpec,
    delta_size,
    select_strikes,
    target_expiry,
    vix_rank,
    vix_size,
)
from .vg import VgParams, vg_deltas

ETF = "ETF"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommissionModel:
    per_option_contract: float = 0.65
    option_order_minimum: float = 1.00
    per_etf_share: float = 0.005
    etf_order_minimum: float = 1.00
    index_settlement_fee: float = 0.0

    def __post_init__(self):
        if any(v < 0 for v in (self.per_option_contract, self.option_order_minimum, self.per_etf_share,
                               self.etf_order_minimum, self.index_settlement_fee)):
            raise ConfigError("commission parameters must be >= 0")

    def fee(self, size: int, etf: bool) -> float:
        size = abs(int(size))
        if size == 0:
            return 0.0
        if etf:
            return max(self.etf_order_minimum, size * self.per_etf_share)
        return max(self.option_order_minimum, size * self.per_option_contract)


@dataclass(frozen=True)
class FillModel:
    """Pays ``spread_fraction`` of the half-spread relative to mid."""

    spread_fraction: float = 1.0

    def __post_init__(self):
        if not 0 <= self.spread_fraction <= 1:
            raise ConfigError("spread_fraction must lie in [0, 1]")

    def price(self, size: int, quote: QuoteBar) -> float:
        step = self.spread_fraction * quote.half_spread
        return quote.mid + step if size > 0 else quote.mid - step


@dataclass(frozen=True)
class HedgeSchedule:
    """``naked``, ``single`` (once a day) or an intraday interval in minutes."""

    kind: str = "naked"
    interval: int | None = None

    def __post_init__(self):
        if self.kind not in ("naked", "single", "interval"):
            raise ConfigError(f"unknown hedge schedule {self.kind!r}")
        if self.kind == "interval" and not (self.interval and self.interval > 0):
            raise ConfigError("interval hedging needs a positive interval")

    @classmethod
    def parse(cls, value) -> "HedgeSchedule":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text in ("naked", "none", "no"):
            return cls("naked")
        if text in ("single", "daily", "1d", "day"):
            return cls("single")
        try:
            return cls("interval", int(text))
        except ValueError:
            raise ConfigError(f"unknown hedge schedule {value!r}; expected naked, single or minutes") from None

    @property
    def hedged(self) -> bool:
        return self.kind != "naked"

    def minutes(self, session_length: int, before_close: int) -> list[int]:
        if self.kind == "naked":
            return []
        if self.kind == "single":
            return [session_length - before_close]
        return list(range(0, session_length, self.interval))

    @property
    def label(self) -> str:
        return str(self.interval) if self.kind == "interval" else self.kind


@dataclass(frozen=True)
class BacktestConfig:
    strategy: StrategySpec
    sizing: SizingRule = SizingRule()
    hedge: HedgeSchedule = HedgeSchedule()
    model: str = "bsm"
    initial_cash: float = 1_000_000.0
    etf_ratio: float = 0.1
    commission: CommissionModel = CommissionModel()
    fill: FillModel = FillModel()
    hedge_minute_before_close: int = 30
    max_staleness: int = DEFAULT_MAX_STALENESS
    calibration: CalibrationConfig = CalibrationConfig()
    dividend_adjusted_delta: bool = False
    start: dt.date | None = None
    end: dt.date | None = None

    def __post_init__(self):
        object.__setattr__(self, "hedge", HedgeSchedule.parse(self.hedge))
        if self.model not in ("bsm", "vg"):
            raise ConfigError(f"unknown model {self.model!r}; expected bsm or vg")
        if not self.initial_cash > 0:
            raise ConfigError("initial_cash must be positive")
        if not self.etf_ratio > 0:
            raise ConfigError("etf_ratio must be positive")
        if self.hedge_minute_before_close < 1:
            raise ConfigError("hedge_minute_before_close must be >= 1")
        if self.max_staleness < 0:
            raise ConfigError("max_staleness must be >= 0")


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trade:
    date: dt.date
    minute: int
    instrument: str
    side: str
    size: int
    price: float
    fee: float
    reason: str

    @property
    def signed_size(self) -> int:
        return self.size if self.side == "buy" else -self.size

    def csv_row(self) -> str:
        return (f"{self.date.isoformat()},{self.minute},{self.instrument},{self.side},{self.size},"
                f"{float(self.price)!r},{float(self.fee)!r},{self.reason}")


TRADE_COLUMNS = ("date", "minute", "instrument", "side", "size", "price", "fee", "reason")


@dataclass(frozen=True)
class HedgeRecord:
    t: Timestamp
    delta_before: float
    order: int
    delta_after: float


@dataclass(frozen=True)
class EquityCurve:
    dates: tuple[dt.date, ...]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise ValueError("one equity value per session required")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("equity dates must be strictly increasing")

    def __len__(self):
        return len(self.dates)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("date,equity\n")
            for d, v in zip(self.dates, self.values):
                fh.write(f"{d.isoformat()},{float(v)!r}\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "EquityCurve":
        import pandas as pd

        df = pd.read_csv(path, dtype={"date": str, "equity": float}, float_precision="round_trip")
        if list(df.columns) != ["date", "equity"]:
            raise MarketDataError(f"{path}: expected header date,equity")
        dates = tuple(dt.date.fromisoformat(d) for d in df["date"])
        return cls(dates, df["equity"].to_numpy(dtype=float))


@dataclass
class PositionBook:
    """Signed option contracts, ETF shares and cash."""

    cash: float
    legs: dict[OptionKey, int] = field(default_factory=dict)
    etf_shares: int = 0

    def value(self, option_mids: Mapping[OptionKey, float], etf_mid: float, multiplier: int = MULTIPLIER) -> float:
        total = self.cash + self.etf_shares * etf_mid
        for key, q in self.legs.items():
            total += q * option_mids[key] * multiplier
        return total

    def trade(self, instrument: OptionKey | str, size: int, price: float, fee: float,
              multiplier: int = MULTIPLIER) -> None:
        if instrument == ETF:
            self.etf_shares += size
            self.cash -= size * price + fee
            return
        self.cash -= size * price * multiplier + fee
        q = self.legs.get(instrument, 0) + size
        if q:
            self.legs[instrument] = q
        else:
            self.legs.pop(instrument, None)


@dataclass
class BacktestResult:
    config: BacktestConfig
    equity: EquityCurve
    trades: list[Trade]
    minute_equity: np.ndarray
    minute_index: np.ndarray
    hedges: list[HedgeRecord]
    params: list[VgParams]

    def __iter__(self) -> Iterator:
        return iter((self.equity, self.trades))

    def write_trades(self, path: str | Path) -> Path:
        return write_trade_log(self.trades, path)


def write_trade_log(trades, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TRADE_COLUMNS) + "\n")
        for t in trades:
            fh.write(t.csv_row() + "\n")
    return path


# ---------------------------------------------------------------------------
# primitive steps
# ---------------------------------------------------------------------------

def apply_fill(size: int, quote: QuoteBar, fill: FillModel, commission: CommissionModel,
               etf: bool = False) -> tuple[float, float]:
    """Execution price and fee for a signed order of ``size`` units (``+`` buys)."""
    if size == 0:
        raise ValueError("order size must be nonzero")
    if quote is None or not (math.isfinite(quote.bid) and math.isfinite(quote.ask)):
        raise MarketDataError("missing quote for fill")
    if quote.bid > quote.ask:
        raise MarketDataError(f"crossed quote bid={quote.bid} ask={quote.ask}")
    return fill.price(size, quote), commission.fee(size, etf)


def portfolio_delta(legs: Mapping[OptionKey, int], deltas: Mapping[OptionKey, float], etf_shares: int,
                    beta: float, multiplier: int = MULTIPLIER) -> float:
    """Dollar exposure per index point of the options plus the ETF."""
    return sum(q * deltas[k] * multiplier for k, q in legs.items()) + etf_shares * beta


def hedge_step(book: PositionBook, deltas: Mapping[OptionKey, float], beta: float,
               multiplier: int = MULTIPLIER) -> int:
    """Signed ETF order (shares) bringing net delta within ``beta / 2`` of zero."""
    exposure = portfolio_delta(book.legs, deltas, book.etf_shares, beta, multiplier)
    return -int(round(exposure / beta))


def settlement_payoff(key: OptionKey, spot: float) -> float:
    return max(spot - key.strike, 0.0) if key.right.is_call else max(key.strike - spot, 0.0)


def settle_expiry(book: PositionBook, date: dt.date, spot: float, multiplier: int = MULTIPLIER,
                  fee_per_contract: float = 0.0) -> float:
    """Cash-settle every leg expiring on ``date`` at ``spot``; returns the cash change."""
    before = book.cash
    for key in [k for k in book.legs if k.expiry == date]:
        q = book.legs[key]
        book.trade(key, -q, settlement_payoff(key, spot), fee_per_contract * abs(q), multiplier)
    return book.cash - before


def step_delta(key: OptionKey, spot: float) -> float:
    """Delta of the payoff itself, used at expiry or when no implied vol exists."""
    if spot == key.strike:
        return 0.5 if key.right.is_call else -0.5
    itm = spot > key.strike if key.right.is_call else spot < key.strike
    return (1.0 if key.right.is_call else -1.0) if itm else 0.0


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

_SETTLE, _OPEN, _HEDGE = 0, 1, 2


class _Engine:
    def __init__(self, cfg: BacktestConfig, store: MarketStore):
        self.cfg = cfg
        self.store = store
        cal = self.cal = store.calendar
        self.L = cal.session_length
        self.M = MULTIPLIER
        self.beta = cfg.etf_ratio
        first = 0 if cfg.start is None else _session_index(cal, cfg.start, "start")
        last = len(cal) - 1 if cfg.end is None else _session_index(cal, cfg.end, "end")
        if last < first:
            raise ConfigError("backtest end precedes start")
        self.days = range(first, last + 1)
        if cfg.hedge_minute_before_close >= self.L:
            raise ConfigError("hedge_minute_before_close must be shorter than the session")
        self.decision_minute = self.L - cfg.hedge_minute_before_close
        self.hedge_minutes = cfg.hedge.minutes(self.L, cfg.hedge_minute_before_close)
        self.book = PositionBook(cfg.initial_cash)
        self.trades: list[Trade] = []
        self.hedges: list[HedgeRecord] = []
        self.params_log: list[VgParams] = []
        self._params: dict[tuple[int, int], VgParams] = {}
        self._last_params: VgParams | None = None
        self._carry: dict[OptionKey, float] = {}
        self.expiry: dt.date | None = None

    # -- market access --------------------------------------------------
    def _mids(self, day: int, key: OptionKey) -> np.ndarray:
        cached = self._day_mids.get(key)
        if cached is None:
            series = self.store.option_session(key, day)
            if series is None:
                cached = np.full(self.L, self._carry.get(key, np.nan))
            else:
                cached = ffill_mids(series[0], series[1], self._carry.get(key, np.nan))
            self._day_mids[key] = cached
        return cached

    def _quote(self, key: OptionKey, t: Timestamp) -> QuoteBar:
        return self.store.last_quote(key, t, self.cfg.max_staleness).bar

    def _etf_quote(self, day: int, minute: int) -> QuoteBar:
        bid, ask = self.und_bid[minute], self.und_ask[minute]
        return QuoteBar(self.beta * bid, self.beta * ask)

    # -- model deltas ---------------------------------------------------
    def _deltas(self, keys, day: int, minute: int, model: str | None = None) -> dict[OptionKey, float]:
        if not keys:
            return {}
        cal, t = self.cal, Timestamp(self.cal.dates[day], minute)
        spot = float(self.und_mid[minute])
        r, q = self.store.rates(t.date)
        taus = {k: cal.year_fraction(t, k.expiry) for k in keys}
        out = {k: step_delta(k, spot) for k in keys if taus[k] <= 0}
        live = [k for k in keys if taus[k] > 0]
        if not live:
            return out
        if (model or self.cfg.model) == "vg":
            p = self._vg_params(day, minute)
            d = vg_deltas(spot, np.array([k.strike for k in live]), np.array([taus[k] for k in live]), r, q,
                          np.array([k.right.is_call for k in live]), p)
            out.update(zip(live, map(float, d)))
            return out
        for k in live:
            vol = self._last_iv(k, day, minute)
            if vol is None:
                out[k] = step_delta(k, spot)
            else:
                out[k] = float(delta_array(spot, k.strike, taus[k], r, q, vol, k.right.is_call,
                                           self.cfg.dividend_adjusted_delta))
        return out

    def _last_iv(self, key: OptionKey, day: int, minute: int) -> float | None:
        """Implied vol of the latest quote strictly before the decision minute (else at it)."""
        g = day * self.L + minute
        quote = None
        if g > 0:
            try:
                quote = self.store.last_quote(key, self.cal.timestamp(g - 1), self.cfg.max_staleness)
            except StaleDataError:
                quote = None
        if quote is None:
            quote = self.store.last_quote(key, self.cal.timestamp(g), self.cfg.max_staleness)
        tq = quote.t
        tau = self.cal.year_fraction(tq, key.expiry)
        if tau <= 0:
            return None
        r, q = self.store.rates(tq.date)
        try:
            return implied_vol(quote.bar.mid, BsmInputs(self.store.spot(tq), key.strike, tau, r, q, 0.0, key.right))
        except NumericError:
            return None

    def _vg_params(self, day: int, minute: int) -> VgParams:
        refit = minute - minute % self.cfg.calibration.refit_interval
        slot = (day, refit)
        p = self._params.get(slot)
        if p is not None:
            return p
        snap = self.store.snapshot(Timestamp(self.cal.dates[day], refit))
        try:
            p = calibrate(snap, self._last_params, self.cfg.calibration, self.cal)
        except InsufficientDataError:
            if self._last_params is None:
                raise
            p = VgParams(*self._last_params.as_tuple(), fitted_at=snap.t, stale=True)
        self._params[slot] = p
        self._last_params = p
        self.params_log.append(p)
        return p

    # -- events -----------------------------------------------------------
    def _record(self, day: int, minute: int, instrument, size: int, price: float, fee: float, reason: str):
        label = instrument if instrument == ETF else instrument.label
        self.trades.append(Trade(self.cal.dates[day], minute, label, "buy" if size > 0 else "sell",
                                 abs(int(size)), float(price), float(fee), reason))

    def _settle(self, day: int, minute: int) -> None:
        date = self.cal.dates[day]
        spot = float(self.und_mid[minute])
        fee = self.cfg.commission.index_settlement_fee
        for key in sorted(k for k in self.book.legs if k.expiry == date):
            q = self.book.legs[key]
            price = settlement_payoff(key, spot)
            self.book.trade(key, -q, price, fee * abs(q), self.M)
            self._record(day, minute, key, -q, price, fee * abs(q), "settle")

    def _value(self, day: int, minute: int) -> float:
        mids = {k: self._mids(day, k)[minute] for k in self.book.legs}
        return self.book.value(mids, self.beta * float(self.und_mid[minute]), self.M)

    def _open(self, day: int, minute: int) -> None:
        cfg, date = self.cfg, self.cal.dates[day]
        t = Timestamp(date, minute)
        snap = self.store.snapshot(t)
        legs = select_strikes(snap, cfg.strategy)
        self.expiry = target_expiry(date, cfg.strategy.dte)
        pv = self._value(day, minute)
        qty = self._size(legs, pv, day, minute, snap.spot)
        if qty <= 0:
            return
        for key, _ in legs.with_quantity(qty):
            quote = snap.chain[key].bar
            price, fee = apply_fill(-qty, quote, cfg.fill, cfg.commission)
            self.book.trade(key, -qty, price, fee, self.M)
            self._carry.setdefault(key, quote.mid)
            self._record(day, minute, key, -qty, price, fee, "open")

    def _size(self, legs: LegSet, pv: float, day: int, minute: int, spot: float) -> int:
        rule: SizingRule = self.cfg.sizing
        if rule.kind is SizingKind.DELTA:
            deltas = self._deltas(legs.keys, day, minute, rule.model)
            return delta_size(pv, legs, [deltas[k] for k in legs.keys], self.M)
        date = self.cal.dates[day]
        hist = self.store.vix_history(date, rule.window + 1)
        if hist.size < rule.window + 1:
            raise InsufficientDataError(
                f"VIX sizing on {date} needs {rule.window + 1} prior closes, got {hist.size}")
        rank = vix_rank(hist[:-1], float(hist[-1]), rule.window)
        return vix_size(pv, spot, rule.rho, rank, self.M if rule.per_contract_notional else None)

    def _hedge(self, day: int, minute: int) -> None:
        deltas = self._deltas(sorted(self.book.legs), day, minute)
        before = portfolio_delta(self.book.legs, deltas, self.book.etf_shares, self.beta, self.M)
        order = hedge_step(self.book, deltas, self.beta, self.M)
        if order:
            quote = self._etf_quote(day, minute)
            price, fee = apply_fill(order, quote, self.cfg.fill, self.cfg.commission, etf=True)
            self.book.trade(ETF, order, price, fee, self.M)
            self._record(day, minute, ETF, order, price, fee, "hedge")
        self.hedges.append(HedgeRecord(Timestamp(self.cal.dates[day], minute), before, order,
                                       before + order * self.beta))

    def _events(self, day: int, first: bool) -> list[tuple[int, int]]:
        date = self.cal.dates[day]
        events = [(m, _HEDGE) for m in self.hedge_minutes]
        if first:
            events.append((self.hedge_minutes[0] if self.cfg.hedge.kind == "interval" else self.decision_minute,
                           _OPEN))
        elif date == self.expiry:
            events.append((self.decision_minute, _OPEN))
        if any(k.expiry == date for k in self.book.legs) or date == self.expiry:
            events.append((self.cal.settlement_minute, _SETTLE))
        opens = {m for m, kind in events if kind == _OPEN}
        if self.cfg.hedge.hedged:
            # a fresh position is hedged straight away
            events.extend((m, _HEDGE) for m in opens if m not in self.hedge_minutes)
        return sorted(set(events))

    # -- main loop ----------------------------------------------------------
    def run(self) -> BacktestResult:
        L = self.L
        n = len(self.days)
        minute_eq = np.empty(n * L)
        closes = np.empty(n)
        for i, day in enumerate(self.days):
            self.und_bid, self.und_ask = self.store.session_quotes(day)
            self.und_mid = 0.5 * (self.und_bid + self.und_ask)
            self._day_mids: dict[OptionKey, np.ndarray] = {}
            eq = minute_eq[i * L:(i + 1) * L]
            cursor = 0
            for minute, kind in self._events(day, first=(i == 0)):
                self._fill(eq, day, cursor, minute)
                cursor = minute
                if kind == _SETTLE:
                    self._settle(day, minute)
                elif kind == _OPEN:
                    self._open(day, minute)
                else:
                    self._hedge(day, minute)
            self._fill(eq, day, cursor, L)
            closes[i] = eq[-1]
            for key in self.book.legs:
                self._carry[key] = float(self._mids(day, key)[-1])
            self._carry = {k: v for k, v in self._carry.items() if k in self.book.legs}
        dates = tuple(self.cal.dates[d] for d in self.days)
        g0 = self.days[0] * L
        return BacktestResult(self.cfg, EquityCurve(dates, closes), self.trades, minute_eq,
                              np.arange(g0, g0 + n * L), self.hedges, self.params_log)

    def _fill(self, eq: np.ndarray, day: int, lo: int, hi: int) -> None:
        if hi <= lo:
            return
        seg = self.book.cash + self.book.etf_shares * self.beta * self.und_mid[lo:hi]
        for key, q in self.book.legs.items():
            seg = seg + q * self.M * self._mids(day, key)[lo:hi]
        eq[lo:hi] = seg


def _session_index(cal, date: dt.date, what: str) -> int:
    if date not in cal:
        raise MarketDataError(
            f"backtest {what} date {date} is not covered by the data "
            f"(sessions {cal.dates[0]} to {cal.dates[-1]})")
    return cal.index(date)


def run_backtest(cfg: BacktestConfig, store: MarketStore) -> BacktestResult:
    """Simulate ``cfg`` on ``store``.  Unpacks as ``(equity_curve, trades)``."""
    return _Engine(cfg, store).run()
