"""Strategy legs, strike selection and position sizing."""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DegenerateSizeError, InsufficientDataError, MissingExpiryError
from .market_data import MULTIPLIER, MarketSnapshot, OptionKey, Right

_TIE_TOL = 1e-9


class StrategyKind(str, Enum):
    SHORT_CALL = "short_call"
    SHORT_PUT = "short_put"
    SHORT_STRADDLE = "short_straddle"
    SHORT_STRANGLE = "short_strangle"

    @classmethod
    def parse(cls, value) -> "StrategyKind":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "_")
        if not text.startswith("short_"):
            text = "short_" + text
        try:
            return cls(text)
        except ValueError:
            raise ConfigError(f"unknown strategy {value!r}; expected one of "
                              f"{', '.join(k.value for k in cls)}") from None


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    otm_pct: float = 0.0
    dte: int = 7

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind.parse(self.kind))
        if not 0 <= self.otm_pct < 1:
            raise ConfigError(f"otm_pct must lie in [0, 1), got {self.otm_pct}")
        if self.kind is StrategyKind.SHORT_STRADDLE and self.otm_pct != 0:
            raise ConfigError("a straddle is at the money: otm_pct must be 0")
        if self.kind is StrategyKind.SHORT_STRANGLE and not self.otm_pct > 0:
            raise ConfigError("a strangle needs otm_pct > 0")
        if self.dte < 1:
            raise ConfigError("dte must be at least one calendar day")


class SizingKind(str, Enum):
    DELTA = "delta"
    VIX = "vix"


@dataclass(frozen=True)
class SizingRule:
    """Either delta-based sizing with a pricing model or VIX-rank sizing.

    ``per_contract_notional`` divides the VIX-rank size by the contract
    multiplier, turning "index units" into contracts; off by default.
    """

    kind: SizingKind = SizingKind.DELTA
    model: str = "bsm"
    rho: float = 1.4
    window: int = 252
    per_contract_notional: bool = False

    def __post_init__(self):
        try:
            kind = self.kind if isinstance(self.kind, SizingKind) else SizingKind(str(self.kind).lower())
            object.__setattr__(self, "kind", kind)
        except ValueError:
            raise ConfigError(f"unknown sizing kind {self.kind!r}; expected delta or vix") from None
        if self.model not in ("bsm", "vg"):
            raise ConfigError(f"unknown sizing model {self.model!r}; expected bsm or vg")
        if not self.rho > 0:
            raise ConfigError("rho must be positive")
        if self.window < 2:
            raise ConfigError("window must be at least 2")


@dataclass(frozen=True)
class LegSet:
    legs: tuple[tuple[OptionKey, int], ...]

    def __post_init__(self):
        legs = tuple(self.legs)
        object.__setattr__(self, "legs", legs)
        if len(legs) not in (1, 2):
            raise ValueError("a leg set has one or two legs")
        if any(q > 0 for _, q in legs):
            raise ValueError("all leg quantities must be short (<= 0)")
        if len(legs) == 2 and legs[0][0].expiry != legs[1][0].expiry:
            raise ValueError("both legs must share the expiry")

    @property
    def keys(self) -> tuple[OptionKey, ...]:
        return tuple(k for k, _ in self.legs)

    def with_quantity(self, q: int) -> "LegSet":
        return LegSet(tuple((k, -abs(int(q))) for k, _ in self.legs))

    def __iter__(self):
        return iter(self.legs)

    def __len__(self):
        return len(self.legs)


def nearest_strike(strikes: Sequence[float], target: float, prefer_up: bool) -> float:
    """Listed strike closest to ``target``; exact ties go up when ``prefer_up`` else down."""
    ks = np.asarray(sorted(strikes), dtype=float)
    if ks.size == 0:
        raise MissingExpiryError("no strikes listed")
    dist = np.abs(ks - target)
    best = dist.min()
    ties = ks[dist <= best + _TIE_TOL * max(abs(target), 1.0)]
    return float(ties.max() if prefer_up else ties.min())


def target_expiry(trade_date: dt.date, dte: int) -> dt.date:
    return trade_date + dt.timedelta(days=dte)


def select_strikes(snapshot: MarketSnapshot, spec: StrategySpec) -> LegSet:
    """Legs of ``spec`` on the expiry ``dte`` calendar days after the snapshot date, quantity -1."""
    expiry = target_expiry(snapshot.t.date, spec.dte)
    if expiry not in snapshot.expiries():
        raise MissingExpiryError(f"no options expiring {expiry} ({spec.dte} days after {snapshot.t.date}) in the chain")
    S, x = snapshot.spot, spec.otm_pct
    calls = snapshot.strikes(expiry, Right.CALL)
    puts = snapshot.strikes(expiry, Right.PUT)
    kind = spec.kind
    if kind is StrategyKind.SHORT_STRADDLE:
        common = sorted(set(calls) & set(puts))
        if not common:
            raise MissingExpiryError(f"no strike listed for both rights on {expiry}")
        k = nearest_strike(common, S, prefer_up=True)
        return LegSet(((OptionKey(expiry, k, Right.CALL), -1), (OptionKey(expiry, k, Right.PUT), -1)))
    legs = []
    if kind in (StrategyKind.SHORT_CALL, StrategyKind.SHORT_STRANGLE):
        if not calls:
            raise MissingExpiryError(f"no calls listed for {expiry}")
        legs.append((OptionKey(expiry, nearest_strike(calls, S * (1 + x), True), Right.CALL), -1))
    if kind in (StrategyKind.SHORT_PUT, StrategyKind.SHORT_STRANGLE):
        if not puts:
            raise MissingExpiryError(f"no puts listed for {expiry}")
        legs.append((OptionKey(expiry, nearest_strike(puts, S * (1 - x), False), Right.PUT), -1))
    return LegSet(tuple(legs))


def delta_size(pv: float, legs: LegSet | Iterable[OptionKey], deltas: Sequence[float],
               multiplier: int = MULTIPLIER) -> int:
    """Contracts per leg ``floor(PV / sum_i K_i |delta_i| M)``; zero when ``PV <= 0``."""
    keys = legs.keys if isinstance(legs, LegSet) else tuple(legs)
    if len(keys) != len(deltas):
        raise ValueError("one delta per leg required")
    denom = sum(k.strike * abs(d) for k, d in zip(keys, deltas)) * multiplier
    if not denom > 0:
        raise DegenerateSizeError("sum of |delta| * strike is zero; delta sizing undefined")
    if pv <= 0:
        return 0
    return int(math.floor(pv / denom))


def vix_rank(history: Sequence[float], current: float, window: int = 252) -> float:
    """Share of the last ``window`` past closes that are ``<= current``."""
    hist = np.asarray(history, dtype=float)
    if hist.size < window:
        raise InsufficientDataError(f"VIX rank needs {window} past closes, got {hist.size}")
    recent = hist[-window:]
    return float(np.count_nonzero(recent <= current)) / window


def vix_size(pv: float, spot: float, rho: float, rank: float, multiplier: int | None = None) -> int:
    """``floor(PV / S * rho * (1 - rank))``, optionally divided by ``multiplier``."""
    if not spot > 0:
        raise ValueError("index level must be positive")
    if not 0 <= rank <= 1:
        raise ValueError("rank must lie in [0, 1]")
    if pv <= 0:
        return 0
    units = pv / spot * rho * (1.0 - rank)
    if multiplier:
        units /= multiplier
    return int(math.floor(units))
