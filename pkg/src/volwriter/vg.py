"""Variance-Gamma characteristic exponent and Fourier-cosine European pricing.

Prices are computed with a cosine expansion of the log-return density on a
truncated interval sized from the VG cumulants (10 standard deviations by
default).  Puts are expanded directly; calls follow from put-call parity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridError, NumericError
from .market_data import Right, Timestamp

PRICE_FLOOR = 1e-10
_ROW_CHUNK = 256


@dataclass(frozen=True)
class VgParams:
    sigma: float
    nu: float
    theta: float
    fitted_at: Timestamp | None = None
    objective_value: float | None = None
    stale: bool = False

    def __post_init__(self):
        if not (self.sigma > 0 and self.nu > 0):
            raise ValueError(f"VG requires sigma > 0 and nu > 0, got sigma={self.sigma}, nu={self.nu}")
        if not martingale_feasible(self.sigma, self.nu, self.theta):
            raise ValueError(
                f"martingale correction undefined: 1 - theta*nu - sigma^2*nu/2 <= 0 "
                f"for sigma={self.sigma}, nu={self.nu}, theta={self.theta}")

    @property
    def omega(self) -> float:
        """Drift correction ``-psi(-i)`` making ``exp(X_t)`` a martingale."""
        return math.log(1.0 - self.theta * self.nu - 0.5 * self.sigma ** 2 * self.nu) / self.nu

    def as_tuple(self) -> tuple[float, float, float]:
        return self.sigma, self.nu, self.theta


def martingale_feasible(sigma: float, nu: float, theta: float) -> bool:
    return 1.0 - theta * nu - 0.5 * sigma * sigma * nu > 0


@dataclass(frozen=True)
class PricingGrid:
    """Discretisation of the cosine expansion.

    ``half_width`` fixes the truncation half-width in log-price units; when
    ``None`` it is ``width_multiplier`` cumulant standard deviations.  When
    ``tolerance`` is set, pricing estimates the series tail and raises
    :class:`GridError` if ``n_points`` is too small.
    """

    n_points: int = 4096
    half_width: float | None = None
    width_multiplier: float = 10.0
    tolerance: float | None = None

    def __post_init__(self):
        n = self.n_points
        if n < 256 or n & (n - 1):
            suggested = max(256, 1 << max(n - 1, 1).bit_length())
            raise GridError(f"n_points must be a power of two >= 256, got {n}", suggested)
        if self.half_width is not None and not self.half_width > 0:
            raise GridError("half_width must be positive")


DEFAULT_GRID = PricingGrid()


def vg_symbol(xi, p: VgParams):
    """Levy exponent ``psi(xi) = -log(1 - i nu theta xi + nu sigma^2 xi^2 / 2) / nu``."""
    xi = np.asarray(xi, dtype=complex)
    z = 1.0 - 1j * p.nu * p.theta * xi + 0.5 * p.nu * p.sigma ** 2 * xi * xi
    if np.any(z.real <= 0):
        raise NumericError("VG exponent evaluated across the logarithm branch cut")
    out = -np.log(z) / p.nu
    return out if out.ndim else complex(out)


def convexity_corrected_symbol(xi, p: VgParams):
    """``i omega xi + psi(xi)``; vanishes at ``xi = -i`` so that ``E[exp(X_t)] = 1``."""
    if not martingale_feasible(p.sigma, p.nu, p.theta):
        raise NumericError("martingale correction undefined for these parameters")
    xi = np.asarray(xi, dtype=complex)
    out = 1j * p.omega * xi + vg_symbol(xi, p)
    return out if np.ndim(out) else complex(out)


def log_return_cumulants(tau, r: float, q: float, p: VgParams):
    """First, second and fourth cumulants of ``log(S_T / S_0)``."""
    s2, nu, th = p.sigma ** 2, p.nu, p.theta
    c1 = (r - q + p.omega + th) * tau
    c2 = (s2 + nu * th * th) * tau
    c4 = 3.0 * (s2 * s2 * nu + 2.0 * th ** 4 * nu ** 3 + 4.0 * s2 * th * th * nu * nu) * tau
    return c1, c2, c4


def _frame(tau, r, q, p: VgParams, grid: PricingGrid):
    c1, c2, c4 = log_return_cumulants(tau, r, q, p)
    if grid.half_width is not None:
        half = np.full_like(np.asarray(tau, dtype=float), grid.half_width)
    else:
        half = grid.width_multiplier * np.sqrt(c2 + np.sqrt(c4))
    return c1 - half, c1 + half


def _log_cf(u, tau, r, q, p: VgParams):
    """Log characteristic function of ``log(S_T/S_0)`` at real frequencies ``u``."""
    z = 1.0 - 1j * p.nu * p.theta * u + 0.5 * p.nu * p.sigma ** 2 * u * u
    return 1j * u * (r - q + p.omega) * tau - tau * np.log(z) / p.nu


def _cf_weights(u, a, tau, r, q, p: VgParams):
    """``Re[phi(u) exp(-i u a)]`` in real arithmetic (modulus and argument of the gamma base)."""
    re = 1.0 + 0.5 * p.nu * p.sigma ** 2 * u * u
    im = -p.nu * p.theta * u
    scale = tau / p.nu
    phase = u * ((r - q + p.omega) * tau - a) - scale * np.arctan2(im, re)
    return np.exp(-0.5 * scale * np.log(re * re + im * im)) * np.cos(phase)


def _put_coefficients(u, a, b, log_k, spot):
    """Cosine coefficients of ``(K - S e^y)^+`` on ``[a, b]``; broadcasts over rows."""
    d = np.clip(log_k, a, b)
    w = u * (d - a)
    ed = np.exp(d)
    chi = (np.cos(w) * ed - np.exp(a) + u * np.sin(w) * ed) / (1.0 + u * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(u == 0, d - a, np.sin(w) / np.where(u == 0, 1.0, u))
    return 2.0 * spot / (b - a) * (np.exp(log_k) * psi - chi)


def _enforce_parity(put, gap, spot):
    """Both sides from one put value, each kept at or above its lower bound.

    A put below ``K e^{-r tau} - S e^{-q tau}`` is series noise; lifting it to
    that bound (and the call to 0) keeps parity exact.  Values under
    ``PRICE_FLOOR * S`` on either side are set to 0 the same way.
    """
    floor = PRICE_FLOOR * spot
    call = put + gap
    low_call = call < floor
    low_put = ~low_call & (put < floor)
    put = np.where(low_call, -gap, np.where(low_put, 0.0, put))
    call = np.where(low_call, 0.0, np.where(low_put, gap, call))
    return put, call


def _check_tail(tau, r, q, p: VgParams, a, b, K, grid: PricingGrid) -> None:
    # series tail ~ |cf(u_N)| times the 1/k^2 decay of the payoff coefficients
    span = b - a

    def tail(n: int) -> float:
        u_n = (n - 1) * math.pi / span
        cf = np.abs(np.exp(_log_cf(u_n, tau, r, q, p)))
        return float(np.max(K * np.exp(-r * tau) * cf * 2 * span / (math.pi ** 2 * n)))

    n = grid.n_points
    while tail(n) > grid.tolerance and n < 1 << 24:
        n *= 2
    if n != grid.n_points:
        raise GridError(
            f"n_points={grid.n_points} too small for tolerance {grid.tolerance}; try n_points={n}", n)


def _unique_rows(x: np.ndarray):
    if len(x) == 1 or np.all(x == x[0]):
        return x[:1], np.zeros(len(x), dtype=int)
    u, inv = np.unique(x, axis=0, return_inverse=True)
    return u, inv.ravel()


def vg_put_prices(S, K, tau, r, q, p: VgParams, grid: PricingGrid = DEFAULT_GRID) -> np.ndarray:
    """Raw cosine-series European put prices (arrays broadcast against each other)."""
    S, K, tau, r, q = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (S, K, tau, r, q)))
    shape = S.shape
    rows = np.column_stack([x.ravel() for x in (S, K, tau, r, q)])
    # identical rows (a call and a put on one strike, say) are priced once
    rows, back = _unique_rows(rows)
    S, K, tau, r, q = rows.T
    out = np.empty(S.size)
    live = tau > 0
    out[~live] = np.maximum(K[~live] - S[~live], 0.0)
    idx = np.flatnonzero(live)
    k = np.arange(grid.n_points)
    for start in range(0, idx.size, _ROW_CHUNK):
        sel = idx[start:start + _ROW_CHUNK]
        # the frame and characteristic function depend on (tau, r, q) only
        mkt, grp = _unique_rows(rows[sel][:, 2:])
        t, rr, qq = (mkt[:, j, None] for j in range(3))
        a, b = _frame(t, rr, qq, p, grid)
        if grid.tolerance is not None:
            kmax = np.zeros(len(mkt))
            np.maximum.at(kmax, grp, K[sel])
            _check_tail(t, rr, qq, p, a, b, kmax[:, None], grid)
        u = k * (math.pi / (b - a))
        coef = _cf_weights(u, a, t, rr, qq, p)
        coef[:, 0] *= 0.5
        v = _put_coefficients(u[grp], a[grp], b[grp], np.log(K[sel, None] / S[sel, None]), S[sel, None])
        out[sel] = np.exp(-r[sel] * tau[sel]) * np.einsum("ij,ij->i", coef[grp], v)
    return out[back].reshape(shape)


def vg_prices(S, K, tau, r, q, is_call, p: VgParams, grid: PricingGrid = DEFAULT_GRID) -> np.ndarray:
    """Vectorised European prices.

    Puts come from the cosine series (bounded payoff, robust to heavy right
    tails) and calls from put-call parity, which therefore holds to rounding.
    Prices below ``1e-10 S`` are set to 0 with the other side adjusted to match.
    """
    S, K, tau, r, q, is_call = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (S, K, tau, r, q)), np.asarray(is_call, dtype=bool))
    put = vg_put_prices(S, K, tau, r, q, p, grid)
    gap = np.where(tau > 0, S * np.exp(-q * tau) - K * np.exp(-r * tau), S - K)
    put, call = _enforce_parity(put, gap, S)
    return np.where(is_call, call, put)


def vg_price(S: float, K: float, tau: float, r: float, q: float, right: Right | str,
             p: VgParams, grid: PricingGrid = DEFAULT_GRID) -> float:
    if not (S > 0 and K > 0 and tau >= 0):
        raise ValueError("VG pricing requires S > 0, K > 0 and tau >= 0")
    return float(vg_prices(S, K, tau, r, q, Right.parse(right).is_call, p, grid))


def vg_delta(S: float, K: float, tau: float, r: float, q: float, right: Right | str,
             p: VgParams, grid: PricingGrid = DEFAULT_GRID, dS: float | None = None) -> float:
    """Central finite-difference delta with bump ``dS`` (default ``1e-3 S``)."""
    dS = 1e-3 * S if dS is None else dS
    if not 0 < dS < S:
        raise ValueError("bump dS must satisfy 0 < dS < S")
    call = Right.parse(right).is_call
    up, down = vg_prices(np.array([S + dS, S - dS]), K, tau, r, q, call, p, grid)
    return float(_clip_delta((up - down) / (2.0 * dS), call))


def _clip_delta(d, is_call):
    # series truncation noise can push a far-wing difference quotient a hair outside the bounds
    return np.where(is_call, np.clip(d, 0.0, 1.0), np.clip(d, -1.0, 0.0))


def vg_deltas(S, K, tau, r, q, is_call, p: VgParams, grid: PricingGrid = DEFAULT_GRID, rel_bump: float = 1e-3):
    S = np.asarray(S, dtype=float)
    dS = rel_bump * S
    up = vg_prices(S + dS, K, tau, r, q, is_call, p, grid)
    down = vg_prices(S - dS, K, tau, r, q, is_call, p, grid)
    return _clip_delta((up - down) / (2.0 * dS), is_call)


class VgChainPricer:
    """Prices a fixed option chain repeatedly for different parameters.

    The truncation interval and payoff coefficients depend only on the chain
    and on ``frame_params``, so they are computed once; each call to
    :meth:`prices` costs one characteristic-function evaluation per expiry and
    a matrix-vector product.
    """

    def __init__(self, spot: float, strikes, taus, is_call, r: float, q: float,
                 frame_params: VgParams, grid: PricingGrid = DEFAULT_GRID, width_multiplier: float = 12.0):
        self.spot = float(spot)
        self.strikes = np.asarray(strikes, dtype=float)
        self.taus = np.asarray(taus, dtype=float)
        self.is_call = np.asarray(is_call, dtype=bool)
        if np.any(self.taus <= 0):
            raise ValueError("chain pricer needs tau > 0 for every option")
        self.r, self.q = float(r), float(q)
        wide = PricingGrid(grid.n_points, grid.half_width, width_multiplier)
        k = np.arange(grid.n_points)
        self._groups = []
        for tau in np.unique(self.taus):
            sel = np.flatnonzero(self.taus == tau)
            a, b = _frame(tau, self.r, self.q, frame_params, wide)
            a, b = float(a), float(b)
            u = k * (math.pi / (b - a))
            v = _put_coefficients(u[:, None], a, b, np.log(self.strikes[sel] / self.spot)[None, :], self.spot)
            self._groups.append((tau, sel, u, a, v))
        self._gap = self.spot * np.exp(-self.q * self.taus) - self.strikes * np.exp(-self.r * self.taus)

    def prices(self, sigma: float, nu: float, theta: float) -> np.ndarray:
        p = VgParams(sigma, nu, theta)
        out = np.empty(self.strikes.size)
        for tau, sel, u, a, v in self._groups:
            coef = _cf_weights(u, a, tau, self.r, self.q, p)
            coef[0] *= 0.5
            out[sel] = math.exp(-self.r * tau) * (coef @ v)
        put, call = _enforce_parity(out, self._gap, self.spot)
        return np.where(self.is_call, call, put)
