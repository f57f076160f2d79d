"""Minute-indexed market data model, CSV IO and point-in-time lookups.

Every price lookup in the system goes through :class:`MarketStore`.  Option
quotes are kept per session as dense ``(minutes, keys)`` blocks with NaN for
missing rows; the underlying is a dense ``(minutes, 6)`` array.
"""
from __future__ import annotations

import datetime as dt
import math
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    CrossedQuoteError,
    MalformedRowError,
    MarketDataError,
    StaleDataError,
    UnsortedDataError,
)

SESSION_LENGTH = 390
TRADING_DAYS = 252
MULTIPLIER = 100
DEFAULT_MAX_STALENESS = 30

UNDERLYING_COLUMNS = ("date", "minute", "open", "high", "low", "close", "bid", "ask")
OPTION_COLUMNS = ("date", "minute", "expiry", "strike", "right", "bid", "ask")
VIX_COLUMNS = ("date", "close")
RATE_COLUMNS = ("date", "risk_free", "div_yield")


class Right(str, Enum):
    CALL = "C"
    PUT = "P"

    @property
    def is_call(self) -> bool:
        return self is Right.CALL

    @classmethod
    def parse(cls, value) -> "Right":
        if isinstance(value, Right):
            return value
        text = str(value).strip().lower()
        if text in ("c", "call"):
            return cls.CALL
        if text in ("p", "put"):
            return cls.PUT
        raise ValueError(f"unknown option right {value!r}")


@dataclass(frozen=True, order=True)
class Timestamp:
    date: dt.date
    minute: int

    def __str__(self) -> str:
        return f"{self.date.isoformat()}@{self.minute}"


@dataclass(frozen=True)
class QuoteBar:
    """Bid/ask quote with optional OHLC bar (index points)."""

    bid: float
    ask: float
    open: float | None = None
    high: float | None = None
    low: float | None = None
    close: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.bid) and math.isfinite(self.ask)):
            raise MarketDataError(f"non-finite quote bid={self.bid} ask={self.ask}")
        if self.bid < 0 or self.ask < 0:
            raise MarketDataError(f"negative quote bid={self.bid} ask={self.ask}")
        if self.bid > self.ask:
            raise CrossedQuoteError(f"crossed quote: bid={self.bid} > ask={self.ask}")
        ohlc = (self.open, self.high, self.low, self.close)
        if all(v is not None for v in ohlc):
            o, h, lo, c = ohlc
            if not lo <= min(o, c) <= max(o, c) <= h:
                raise MarketDataError(f"inconsistent OHLC bar {ohlc}")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    @property
    def half_spread(self) -> float:
        return 0.5 * (self.ask - self.bid)


def format_strike(strike: float) -> str:
    return repr(float(strike)).removesuffix(".0")


@dataclass(frozen=True, order=True)
class OptionKey:
    expiry: dt.date
    strike: float
    right: Right

    def __post_init__(self):
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not isinstance(self.right, Right):
            object.__setattr__(self, "right", Right.parse(self.right))

    @property
    def label(self) -> str:
        return f"{self.expiry.isoformat()}:{format_strike(self.strike)}:{self.right.value}"


@dataclass(frozen=True)
class OptionQuote:
    key: OptionKey
    bar: QuoteBar
    last_iv: float | None = None
    t: Timestamp | None = None

    def __post_init__(self):
        if self.last_iv is not None and not 0 < self.last_iv <= 5:
            raise ValueError(f"implied volatility out of range: {self.last_iv}")


@dataclass(frozen=True)
class MarketSnapshot:
    t: Timestamp
    underlying: QuoteBar
    chain: Mapping[OptionKey, OptionQuote]
    vix_close: float
    risk_free: float
    div_yield: float

    def __post_init__(self):
        object.__setattr__(self, "chain", MappingProxyType(dict(self.chain)))
        if not self.vix_close > 0:
            raise MarketDataError(f"VIX close must be positive at {self.t}")

    @property
    def spot(self) -> float:
        return self.underlying.mid

    def expiries(self) -> list[dt.date]:
        return sorted({k.expiry for k in self.chain})

    def strikes(self, expiry: dt.date, right: Right) -> list[float]:
        return sorted(k.strike for k in self.chain if k.expiry == expiry and k.right == right)


@dataclass(frozen=True)
class TradingCalendar:
    """Ordered session dates with a fixed number of one-minute bars per session.

    Time to expiry is measured in trading time: every bar is
    ``1 / (252 * session_length)`` years and expiries past the last listed
    session are counted in business days.
    """

    dates: tuple[dt.date, ...]
    session_length: int = SESSION_LENGTH
    settlement_minute: int | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dates = tuple(self.dates)
        object.__setattr__(self, "dates", dates)
        if self.session_length <= 0:
            raise ValueError("session_length must be positive")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise UnsortedDataError("calendar dates must be strictly increasing")
        if self.settlement_minute is None:
            object.__setattr__(self, "settlement_minute", self.session_length - 1)
        if not 0 <= self.settlement_minute < self.session_length:
            raise ValueError("settlement_minute must lie inside the session")
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(dates)})

    @classmethod
    def weekdays(cls, start: dt.date, n_days: int, session_length: int = SESSION_LENGTH) -> "TradingCalendar":
        days = np.busday_offset(np.datetime64(start, "D"), np.arange(n_days), roll="forward")
        return cls(tuple(d.astype(dt.date) for d in days), session_length)

    def __len__(self) -> int:
        return len(self.dates)

    def __contains__(self, date: dt.date) -> bool:
        return date in self._index

    @property
    def n_minutes(self) -> int:
        return len(self.dates) * self.session_length

    def index(self, date: dt.date) -> int:
        try:
            return self._index[date]
        except KeyError:
            raise MarketDataError(f"{date} is not a session of the trading calendar") from None

    def session_offset(self, date: dt.date) -> int:
        """Session index of ``date``; dates past the end count business days."""
        if date in self._index:
            return self._index[date]
        last = self.dates[-1]
        if date > last:
            extra = np.busday_count(np.datetime64(last, "D") + 1, np.datetime64(date, "D") + 1)
            return len(self.dates) - 1 + int(extra)
        raise MarketDataError(f"{date} is not a session of the trading calendar")

    def minute_index(self, t: Timestamp) -> int:
        if not 0 <= t.minute < self.session_length:
            raise MarketDataError(f"minute {t.minute} outside session")
        return self.index(t.date) * self.session_length + t.minute

    def timestamp(self, g: int) -> Timestamp:
        day, minute = divmod(int(g), self.session_length)
        return Timestamp(self.dates[day], minute)

    def year_fraction(self, t: Timestamp, expiry: dt.date) -> float:
        remaining = (
            self.session_offset(expiry) * self.session_length
            + self.settlement_minute
            - self.minute_index(t)
        )
        return max(remaining, 0) / (TRADING_DAYS * self.session_length)

    def session_year_fractions(self, day: int, expiry: dt.date) -> np.ndarray:
        """Time to expiry (years) at each minute of session ``day``."""
        L = self.session_length
        end = self.session_offset(expiry) * L + self.settlement_minute
        g = day * L + np.arange(L)
        return np.maximum(end - g, 0) / (TRADING_DAYS * L)


@dataclass(frozen=True)
class DayBlock:
    """All option quotes of one session: ``bid[m, j]`` is key ``keys[j]`` at minute ``m``."""

    keys: tuple[OptionKey, ...]
    bid: np.ndarray
    ask: np.ndarray
    columns: Mapping[OptionKey, int] = field(default=None, compare=False)

    def __post_init__(self):
        if self.columns is None:
            object.__setattr__(self, "columns", {k: j for j, k in enumerate(self.keys)})


class OptionBook(ABC):
    """Source of option quotes, one session at a time."""

    @abstractmethod
    def day_block(self, day: int) -> DayBlock: ...

    def quotes_at(self, day: int, minute: int) -> tuple[tuple[OptionKey, ...], np.ndarray, np.ndarray]:
        block = self.day_block(day)
        return block.keys, block.bid[minute], block.ask[minute]

    def key_day(self, key: OptionKey, day: int) -> tuple[np.ndarray, np.ndarray] | None:
        block = self.day_block(day)
        j = block.columns.get(key)
        if j is None:
            return None
        return block.bid[:, j], block.ask[:, j]


class ArrayOptionBook(OptionBook):
    """Option quotes held as row arrays, materialised into day blocks on demand."""

    def __init__(self, calendar: TradingCalendar, day: np.ndarray, minute: np.ndarray,
                 keys: Sequence[OptionKey], key_id: np.ndarray, bid: np.ndarray, ask: np.ndarray,
                 cache_size: int = 16):
        self.calendar = calendar
        self._keys = tuple(keys)
        order = np.lexsort((key_id, minute, day))
        self._day = np.asarray(day)[order]
        self._minute = np.asarray(minute)[order]
        self._key_id = np.asarray(key_id)[order]
        self._bid = np.asarray(bid, dtype=float)[order]
        self._ask = np.asarray(ask, dtype=float)[order]
        self._bounds = np.searchsorted(self._day, np.arange(len(calendar) + 1))
        self._cache: OrderedDict[int, DayBlock] = OrderedDict()
        self._cache_size = cache_size

    @classmethod
    def empty(cls, calendar: TradingCalendar) -> "ArrayOptionBook":
        z = np.zeros(0, dtype=np.int64)
        return cls(calendar, z, z, (), z, np.zeros(0), np.zeros(0))

    def day_block(self, day: int) -> DayBlock:
        block = self._cache.get(day)
        if block is not None:
            self._cache.move_to_end(day)
            return block
        lo, hi = self._bounds[day], self._bounds[day + 1]
        ids = self._key_id[lo:hi]
        uniq = np.unique(ids)
        keys = [self._keys[i] for i in uniq]
        order = sorted(range(len(keys)), key=lambda j: keys[j])
        keys = [keys[j] for j in order]
        col_of = np.empty(len(self._keys), dtype=np.int64)
        col_of[uniq[order]] = np.arange(len(keys))
        L = self.calendar.session_length
        bid = np.full((L, len(keys)), np.nan)
        ask = np.full((L, len(keys)), np.nan)
        cols = col_of[ids]
        bid[self._minute[lo:hi], cols] = self._bid[lo:hi]
        ask[self._minute[lo:hi], cols] = self._ask[lo:hi]
        block = DayBlock(tuple(keys), bid, ask)
        self._cache[day] = block
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return block


class MarketStore:
    """Immutable, time-indexed market data: underlying bars, option quotes, VIX and rates."""

    def __init__(self, calendar: TradingCalendar, underlying: np.ndarray, options: OptionBook,
                 vix_dates: Sequence[dt.date], vix_close: Sequence[float],
                 rate_dates: Sequence[dt.date], risk_free: Sequence[float], div_yield: Sequence[float]):
        self.calendar = calendar
        und = np.array(underlying, dtype=float)
        if und.shape != (calendar.n_minutes, 6):
            raise MarketDataError(
                f"underlying array must have shape ({calendar.n_minutes}, 6), got {und.shape}")
        und.setflags(write=False)
        self._und = und
        self.options = options
        self._vix_dates = np.array([np.datetime64(d, "D") for d in vix_dates], dtype="datetime64[D]")
        self._vix = np.array(vix_close, dtype=float)
        self._rate_dates = np.array([np.datetime64(d, "D") for d in rate_dates], dtype="datetime64[D]")
        self._rf = np.array(risk_free, dtype=float)
        self._dy = np.array(div_yield, dtype=float)
        for arr in (self._vix, self._rf, self._dy):
            arr.setflags(write=False)
        if np.any(np.diff(self._vix_dates.astype(np.int64)) <= 0):
            raise UnsortedDataError("VIX dates must be strictly increasing")
        if np.any(np.diff(self._rate_dates.astype(np.int64)) <= 0):
            raise UnsortedDataError("rate dates must be strictly increasing")
        if np.any(self._vix <= 0):
            raise MarketDataError("VIX closes must be positive")

    # -- underlying -------------------------------------------------------
    @property
    def underlying_array(self) -> np.ndarray:
        """Read-only ``(n_minutes, 6)`` array: open, high, low, close, bid, ask."""
        return self._und

    def session_mid(self, day: int) -> np.ndarray:
        L = self.calendar.session_length
        rows = self._und[day * L:(day + 1) * L]
        return 0.5 * (rows[:, 4] + rows[:, 5])

    def session_quotes(self, day: int) -> tuple[np.ndarray, np.ndarray]:
        L = self.calendar.session_length
        rows = self._und[day * L:(day + 1) * L]
        return rows[:, 4], rows[:, 5]

    def underlying(self, t: Timestamp) -> QuoteBar:
        o, h, lo, c, b, a = self._und[self.calendar.minute_index(t)]
        return QuoteBar(bid=b, ask=a, open=o, high=h, low=lo, close=c)

    def spot(self, t: Timestamp) -> float:
        row = self._und[self.calendar.minute_index(t)]
        return 0.5 * (row[4] + row[5])

    # -- daily series -----------------------------------------------------
    def _ffill_index(self, dates: np.ndarray, date: dt.date, what: str) -> int:
        i = int(np.searchsorted(dates, np.datetime64(date, "D"), side="right")) - 1
        if i < 0:
            raise MarketDataError(f"no {what} observation on or before {date}")
        return i

    def vix_close(self, date: dt.date) -> float:
        return float(self._vix[self._ffill_index(self._vix_dates, date, "VIX")])

    def vix_history(self, date: dt.date, window: int) -> np.ndarray:
        """The last ``window`` daily VIX closes dated strictly before ``date``."""
        end = int(np.searchsorted(self._vix_dates, np.datetime64(date, "D"), side="left"))
        return self._vix[max(end - window, 0):end].copy()

    def rates(self, date: dt.date) -> tuple[float, float]:
        i = self._ffill_index(self._rate_dates, date, "rate")
        return float(self._rf[i]), float(self._dy[i])

    @property
    def vix_series(self) -> tuple[np.ndarray, np.ndarray]:
        return self._vix_dates, self._vix

    @property
    def rate_series(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._rate_dates, self._rf, self._dy

    # -- options ----------------------------------------------------------
    def option_session(self, key: OptionKey, day: int) -> tuple[np.ndarray, np.ndarray] | None:
        """Bid and ask arrays of ``key`` over session ``day`` (NaN where not quoted)."""
        return self.options.key_day(key, day)

    def chain(self, t: Timestamp) -> dict[OptionKey, OptionQuote]:
        day = self.calendar.index(t.date)
        keys, bids, asks = self.options.quotes_at(day, t.minute)
        out = {}
        for key, b, a in zip(keys, bids, asks):
            if not (np.isnan(b) or np.isnan(a)):
                out[key] = OptionQuote(key, QuoteBar(float(b), float(a)), t=t)
        return out

    def snapshot(self, t: Timestamp) -> MarketSnapshot:
        r, q = self.rates(t.date)
        return MarketSnapshot(t, self.underlying(t), self.chain(t), self.vix_close(t.date), r, q)

    def last_quote(self, key: OptionKey, t: Timestamp,
                   max_staleness: int = DEFAULT_MAX_STALENESS) -> OptionQuote:
        """Most recent quote of ``key`` at or before ``t`` no older than ``max_staleness`` minutes."""
        cal = self.calendar
        g_now = cal.minute_index(t)
        g_min = max(g_now - max_staleness, 0)
        L = cal.session_length
        for day in range(g_now // L, g_min // L - 1, -1):
            series = self.options.key_day(key, day)
            if series is None:
                continue
            bid, ask = series
            hi = min(g_now - day * L, L - 1)
            lo = max(g_min - day * L, 0)
            ok = ~(np.isnan(bid[lo:hi + 1]) | np.isnan(ask[lo:hi + 1]))
            hits = np.flatnonzero(ok)
            if hits.size:
                m = lo + int(hits[-1])
                return OptionQuote(key, QuoteBar(float(bid[m]), float(ask[m])),
                                   t=Timestamp(cal.dates[day], m))
        raise StaleDataError(f"stale data: no quote for {key.label} within {max_staleness} minutes of {t}")

    # -- comparison -------------------------------------------------------
    def equals(self, other: "MarketStore") -> bool:
        if self.calendar != other.calendar:
            return False
        if not np.array_equal(self._und, other._und):
            return False
        for a, b in ((self._vix_dates, other._vix_dates), (self._vix, other._vix),
                     (self._rate_dates, other._rate_dates), (self._rf, other._rf), (self._dy, other._dy)):
            if not np.array_equal(a, b):
                return False
        for day in range(len(self.calendar)):
            x, y = self.options.day_block(day), other.options.day_block(day)
            if x.keys != y.keys:
                return False
            if not (np.array_equal(x.bid, y.bid, equal_nan=True) and np.array_equal(x.ask, y.ask, equal_nan=True)):
                return False
        return True


# ---------------------------------------------------------------------------
# CSV IO
# ---------------------------------------------------------------------------

def _read_csv(path: Path, columns: Sequence[str], dtypes: dict) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=dtypes, float_precision="round_trip", keep_default_na=False)
    except FileNotFoundError:
        raise MarketDataError(f"{path}: file not found") from None
    except (ValueError, pd.errors.ParserError) as exc:
        raise MalformedRowError(_locate_bad_row(path, columns, dtypes) or f"{path}: {exc}") from None
    if tuple(df.columns) != tuple(columns):
        raise MalformedRowError(f"{path}:1: expected header {','.join(columns)}, got {','.join(map(str, df.columns))}")
    return df


def _locate_bad_row(path: Path, columns: Sequence[str], dtypes: dict) -> str | None:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1:
                continue
            if len(row) != len(columns):
                return f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}"
            for name, value in zip(columns, row):
                kind = dtypes.get(name)
                try:
                    if kind is float:
                        float(value)
                    elif kind is np.int64:
                        int(value)
                except ValueError:
                    return f"{path}:{lineno}: bad value {value!r} in column {name}"
    return None


def _parse_dates(df: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    parsed = pd.to_datetime(df[column], format="%Y-%m-%d", errors="coerce")
    bad = np.flatnonzero(parsed.isna().to_numpy())
    if bad.size:
        raise MalformedRowError(f"{path}:{bad[0] + 2}: bad date {df[column].iloc[bad[0]]!r}")
    return parsed.to_numpy().astype("datetime64[D]")


def _first_bad(mask: np.ndarray) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


def _day_minute_index(dates: np.ndarray, minutes: np.ndarray, calendar: TradingCalendar, path: Path) -> np.ndarray:
    cal_days = np.array([np.datetime64(d, "D") for d in calendar.dates], dtype="datetime64[D]")
    day = np.searchsorted(cal_days, dates)
    inside = (day < len(cal_days))
    inside[inside] &= cal_days[day[inside]] == dates[inside]
    bad = _first_bad(~inside)
    if bad is not None:
        raise MarketDataError(f"{path}:{bad + 2}: date {dates[bad]} is not a calendar session")
    bad = _first_bad((minutes < 0) | (minutes >= calendar.session_length))
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: minute {minutes[bad]} outside session")
    return day * calendar.session_length + minutes


def _check_sorted(g: np.ndarray, path: Path, strict: bool) -> None:
    step = np.diff(g)
    bad = _first_bad(step <= 0 if strict else step < 0)
    if bad is not None:
        raise UnsortedDataError(f"{path}:{bad + 3}: timestamps not sorted")


def _check_quotes(bid: np.ndarray, ask: np.ndarray, path: Path) -> None:
    bad = _first_bad(~(np.isfinite(bid) & np.isfinite(ask)) | (bid < 0) | (ask < 0))
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: invalid quote bid={bid[bad]} ask={ask[bad]}")
    bad = _first_bad(bid > ask)
    if bad is not None:
        raise CrossedQuoteError(f"{path}:{bad + 2}: crossed quote bid={bid[bad]} > ask={ask[bad]}")


def infer_calendar(directory: str | Path, session_length: int = SESSION_LENGTH) -> TradingCalendar:
    path = Path(directory) / "underlying.csv"
    df = _read_csv(path, UNDERLYING_COLUMNS, {"date": str})
    dates = np.unique(_parse_dates(df, "date", path))
    return TradingCalendar(tuple(d.astype(dt.date) for d in dates), session_length)


def load_market_csv(directory: str | Path, calendar: TradingCalendar | None = None) -> MarketStore:
    """Load ``underlying.csv``, ``options.csv``, ``vix.csv`` and ``rates.csv`` from ``directory``.

    Underlying minutes missing from the file are forward-filled from the
    previous bar; missing option rows stay missing.
    """
    directory = Path(directory)
    if calendar is None:
        calendar = infer_calendar(directory)
    L = calendar.session_length

    path = directory / "underlying.csv"
    num = {c: float for c in UNDERLYING_COLUMNS[2:]}
    df = _read_csv(path, UNDERLYING_COLUMNS, {"date": str, "minute": np.int64, **num})
    g = _day_minute_index(_parse_dates(df, "date", path), df["minute"].to_numpy(), calendar, path)
    _check_sorted(g, path, strict=True)
    values = df[list(UNDERLYING_COLUMNS[2:])].to_numpy(dtype=float)
    _check_quotes(values[:, 4], values[:, 5], path)
    o, h, lo, c = values[:, 0], values[:, 1], values[:, 2], values[:, 3]
    bad = _first_bad(~((lo <= np.minimum(o, c)) & (np.maximum(o, c) <= h)) | (values[:, :4] <= 0).any(axis=1))
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: inconsistent OHLC bar")
    if g.size == 0 or g[0] != 0:
        raise MarketDataError(f"{path}: no bar at the first calendar minute")
    und = np.full((calendar.n_minutes, 6), np.nan)
    und[g] = values
    fill = np.maximum.accumulate(np.where(np.isnan(und[:, 0]), 0, np.arange(calendar.n_minutes)))
    und = und[fill]

    path = directory / "options.csv"
    df = _read_csv(path, OPTION_COLUMNS, {"date": str, "minute": np.int64, "expiry": str,
                                          "strike": float, "right": str, "bid": float, "ask": float})
    g = _day_minute_index(_parse_dates(df, "date", path), df["minute"].to_numpy(), calendar, path)
    _check_sorted(g, path, strict=False)
    bid, ask = df["bid"].to_numpy(dtype=float), df["ask"].to_numpy(dtype=float)
    _check_quotes(bid, ask, path)
    rights = df["right"].to_numpy()
    bad = _first_bad(~np.isin(rights, ("C", "P")))
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: right must be C or P, got {rights[bad]!r}")
    strikes = df["strike"].to_numpy(dtype=float)
    bad = _first_bad(~(strikes > 0))
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: strike must be positive")
    expiries = _parse_dates(df, "expiry", path)
    bad = _first_bad(expiries < _parse_dates(df, "date", path))
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: expiry before quote date")
    key_frame = pd.DataFrame({"e": expiries, "k": strikes, "r": rights})
    codes, uniq = pd.factorize(pd.MultiIndex.from_frame(key_frame))
    keys = [OptionKey(pd.Timestamp(e).date(), float(k), Right(r)) for e, k, r in uniq]
    dup = pd.Series(g * max(len(keys), 1) + codes).duplicated().to_numpy()
    bad = _first_bad(dup)
    if bad is not None:
        raise MalformedRowError(f"{path}:{bad + 2}: duplicate option row")
    book = ArrayOptionBook(calendar, g // L, g % L, keys, codes, bid, ask)

    path = directory / "vix.csv"
    df = _read_csv(path, VIX_COLUMNS, {"date": str, "close": float})
    vix_dates = _parse_dates(df, "date", path)
    _check_sorted(vix_dates.astype(np.int64), path, strict=True)

    path = directory / "rates.csv"
    df_r = _read_csv(path, RATE_COLUMNS, {"date": str, "risk_free": float, "div_yield": float})
    rate_dates = _parse_dates(df_r, "date", path)
    _check_sorted(rate_dates.astype(np.int64), path, strict=True)

    return MarketStore(
        calendar, und, book,
        [d.astype(dt.date) for d in vix_dates], df["close"].to_numpy(dtype=float),
        [d.astype(dt.date) for d in rate_dates],
        df_r["risk_free"].to_numpy(dtype=float), df_r["div_yield"].to_numpy(dtype=float),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_market_csv(store: MarketStore, directory: str | Path) -> list[Path]:
    """Write the four CSV files for ``store`` into ``directory``; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cal = store.calendar
    L = cal.session_length
    iso = [d.isoformat() for d in cal.dates]
    paths = []

    path = directory / "underlying.csv"
    und = store.underlying_array
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(UNDERLYING_COLUMNS) + "\n")
        for g in range(cal.n_minutes):
            day, m = divmod(g, L)
            fh.write(f"{iso[day]},{m}," + ",".join(map(_fmt, und[g])) + "\n")
    paths.append(path)

    path = directory / "options.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(OPTION_COLUMNS) + "\n")
        for day in range(len(cal)):
            block = store.options.day_block(day)
            labels = [f"{k.expiry.isoformat()},{_fmt(k.strike)},{k.right.value}" for k in block.keys]
            for m in range(L):
                bids, asks = block.bid[m], block.ask[m]
                for label, b, a in zip(labels, bids, asks):
                    if not (math.isnan(b) or math.isnan(a)):
                        fh.write(f"{iso[day]},{m},{label},{_fmt(b)},{_fmt(a)}\n")
    paths.append(path)

    path = directory / "vix.csv"
    vd, vc = store.vix_series
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("date,close\n")
        for d, v in zip(vd, vc):
            fh.write(f"{d.astype(dt.date).isoformat()},{_fmt(v)}\n")
    paths.append(path)

    path = directory / "rates.csv"
    rd, rf, dy = store.rate_series
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("date,risk_free,div_yield\n")
        for d, r, q in zip(rd, rf, dy):
            fh.write(f"{d.astype(dt.date).isoformat()},{_fmt(r)},{_fmt(q)}\n")
    paths.append(path)
    return paths


def ffill_mids(bid: np.ndarray, ask: np.ndarray, carry: float = np.nan) -> np.ndarray:
    """Mid prices forward-filled across missing minutes, seeded with ``carry``."""
    mid = 0.5 * (np.asarray(bid) + np.asarray(ask))
    mid = np.concatenate(([carry], mid))
    idx = np.where(np.isnan(mid), 0, np.arange(mid.size))
    np.maximum.accumulate(idx, out=idx)
    return mid[idx][1:]


def iter_sessions(calendar: TradingCalendar, start: dt.date | None = None,
                  end: dt.date | None = None) -> Iterable[int]:
    first = 0 if start is None else calendar.index(start)
    last = len(calendar) - 1 if end is None else calendar.index(end)
    return range(first, last + 1)
