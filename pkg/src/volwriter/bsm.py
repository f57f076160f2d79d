"""Closed-form Black-Scholes-Merton prices, deltas and implied volatility."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateInputError, NoSolutionError, NumericError
from .market_data import Right

IV_LOWER = 1e-4
IV_UPPER = 5.0
IV_MAX_ITER = 200


@dataclass(frozen=True)
class BsmInputs:
    spot: float
    strike: float
    tau: float
    rate: float
    div: float
    vol: float
    right: Right = Right.CALL

    def __post_init__(self):
        if not isinstance(self.right, Right):
            object.__setattr__(self, "right", Right.parse(self.right))
        values = (self.spot, self.strike, self.tau, self.rate, self.div, self.vol)
        if not all(math.isfinite(v) for v in values):
            raise DegenerateInputError(f"non-finite BSM inputs {values}")
        if self.spot <= 0 or self.strike <= 0:
            raise DegenerateInputError("spot and strike must be positive")
        if self.tau < 0 or self.vol < 0:
            raise DegenerateInputError("tau and vol must be non-negative")

    def with_vol(self, vol: float) -> "BsmInputs":
        return replace(self, vol=vol)


def _d1(S, K, tau, r, q, vol):
    sq = vol * np.sqrt(tau)
    return (np.log(S / K) + (r - q) * tau) / sq + 0.5 * sq


def price_array(S, K, tau, r, q, vol, is_call):
    """Vectorised BSM price; handles ``tau == 0`` and ``vol == 0`` limits."""
    S, K, tau, r, q, vol, is_call = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (S, K, tau, r, q, vol)), np.asarray(is_call, dtype=bool))
    fwd_s = S * np.exp(-q * tau)
    disc_k = K * np.exp(-r * tau)
    sign = np.where(is_call, 1.0, -1.0)
    degenerate = (tau <= 0) | (vol <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = _d1(S, K, tau, r, q, vol)
        d2 = d1 - vol * np.sqrt(tau)
        out = sign * (fwd_s * ndtr(sign * d1) - disc_k * ndtr(sign * d2))
    if np.any(degenerate):
        intrinsic = np.where(tau <= 0, sign * (S - K), sign * (fwd_s - disc_k))
        out = np.where(degenerate, np.maximum(intrinsic, 0.0), out)
    return out


def delta_array(S, K, tau, r, q, vol, is_call, dividend_adjusted: bool = False):
    """Vectorised delta ``N(d1)`` / ``N(d1) - 1``; callers guarantee ``tau, vol > 0``."""
    is_call = np.asarray(is_call, dtype=bool)
    nd1 = ndtr(_d1(np.asarray(S, float), K, tau, r, q, vol))
    if dividend_adjusted:
        disc = np.exp(-np.asarray(q) * tau)
        return np.where(is_call, disc * nd1, disc * (nd1 - 1.0))
    return np.where(is_call, nd1, nd1 - 1.0)


def _ncdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def price_scalar(S: float, K: float, tau: float, r: float, q: float, vol: float, is_call: bool) -> float:
    fwd_s = S * math.exp(-q * tau)
    disc_k = K * math.exp(-r * tau)
    sign = 1.0 if is_call else -1.0
    if tau <= 0:
        return max(sign * (S - K), 0.0)
    if vol <= 0:
        return max(sign * (fwd_s - disc_k), 0.0)
    sq = vol * math.sqrt(tau)
    d1 = (math.log(S / K) + (r - q) * tau) / sq + 0.5 * sq
    return sign * (fwd_s * _ncdf(sign * d1) - disc_k * _ncdf(sign * (d1 - sq)))


def bsm_price(inp: BsmInputs) -> float:
    return price_scalar(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, inp.vol, inp.right.is_call)


def bsm_delta(inp: BsmInputs, dividend_adjusted: bool = False) -> float:
    """Delta as ``N(d1)`` for calls and ``N(d1) - 1`` for puts.

    With ``dividend_adjusted`` both are scaled by ``exp(-q tau)`` (the
    textbook form); the default keeps the undiscounted form.
    """
    if inp.tau <= 0 or inp.vol <= 0:
        raise DegenerateInputError("delta undefined at zero time or zero volatility")
    d1 = float(_d1(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, inp.vol))
    nd1 = _ncdf(d1)
    scale = math.exp(-inp.div * inp.tau) if dividend_adjusted else 1.0
    return scale * (nd1 if inp.right.is_call else nd1 - 1.0)


def bsm_vega(inp: BsmInputs) -> float:
    if inp.tau <= 0 or inp.vol <= 0:
        return 0.0
    d1 = float(_d1(inp.spot, inp.strike, inp.tau, inp.rate, inp.div, inp.vol))
    return inp.spot * math.exp(-inp.div * inp.tau) * math.sqrt(inp.tau) * math.exp(-0.5 * d1 * d1) / math.sqrt(2 * math.pi)


def price_bounds(inp: BsmInputs) -> tuple[float, float]:
    """No-arbitrage (lower, upper) bounds of the option price."""
    fwd_s = inp.spot * math.exp(-inp.div * inp.tau)
    disc_k = inp.strike * math.exp(-inp.rate * inp.tau)
    if inp.right.is_call:
        return max(fwd_s - disc_k, 0.0), fwd_s
    return max(disc_k - fwd_s, 0.0), disc_k


def implied_vol(market_price: float, inp: BsmInputs) -> float:
    """Volatility reproducing ``market_price``; ``inp.vol`` is ignored.

    Safeguarded Newton on ``[1e-4, 5]``: a vega step is accepted only if it
    stays inside the current bracket, otherwise the bracket is bisected, which
    keeps convergence when vega vanishes in the wings.
    """
    if not math.isfinite(market_price):
        raise DegenerateInputError("non-finite market price")
    if inp.tau <= 0:
        raise NoSolutionError("implied volatility undefined at expiry")
    lower, upper = price_bounds(inp)
    if market_price < lower or market_price > upper:
        raise NoSolutionError(
            f"price {market_price} outside no-arbitrage bounds [{lower}, {upper}]")

    S, K, tau, r, q, call = inp.spot, inp.strike, inp.tau, inp.rate, inp.div, inp.right.is_call
    sqrt_t = math.sqrt(tau)
    log_fwd = math.log(S / K) + (r - q) * tau
    vega_scale = S * math.exp(-q * tau) * sqrt_t / math.sqrt(2 * math.pi)

    def f(vol: float) -> float:
        return price_scalar(S, K, tau, r, q, vol, call) - market_price

    lo, hi = IV_LOWER, IV_UPPER
    f_lo, f_hi = f(lo), f(hi)
    if f_lo > 0 or f_hi < 0:
        raise NoSolutionError(f"price {market_price} not attainable for vol in [{lo}, {hi}]")
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi

    # Brenner-Subrahmanyam ATM approximation as the starting point
    vol = math.sqrt(2 * math.pi / tau) * market_price / S
    if not lo < vol < hi:
        vol = 0.5 * (lo + hi)
    for _ in range(IV_MAX_ITER):
        fv = f(vol)
        if fv == 0:
            return vol
        if fv > 0:
            hi = vol
        else:
            lo = vol
        d1 = log_fwd / (vol * sqrt_t) + 0.5 * vol * sqrt_t
        vega = vega_scale * math.exp(-0.5 * d1 * d1)
        candidate = vol - fv / vega if vega > abs(fv) * 1e-12 else math.nan
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - vol) <= 1e-15 * max(vol, 1.0) or hi - lo <= 1e-15:
            vol = candidate
            break
        vol = candidate
    else:
        raise NumericError(f"implied volatility did not converge in {IV_MAX_ITER} iterations")
    residual = f(vol)
    if abs(residual) > 1e-10 * S:
        raise NumericError(f"implied volatility residual {residual} above tolerance")
    return vol
