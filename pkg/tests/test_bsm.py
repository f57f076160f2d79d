import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from oracles import bsm_lognormal
from volwriter.bsm import (
    BsmInputs,
    bsm_delta,
    bsm_price,
    bsm_vega,
    delta_array,
    implied_vol,
    price_array,
    price_scalar,
)
from volwriter.errors import DegenerateInputError, NoSolutionError
from volwriter.market_data import Right

# Frozen from the lognormal-integration oracle in tests/oracles.py.
FROZEN = [
    ((100, 100, 1.0, 0.05, 0.0, 0.2, True), 10.450583572185561),
    ((100, 100, 1.0, 0.05, 0.0, 0.2, False), 5.573526022256946),
    ((4000, 3800, 7 / 252, 0.02, 0.015, 0.18, False), 2.0638307829666767),
]


@pytest.mark.parametrize("args,expected", FROZEN)
def test_frozen_prices(args, expected):
    assert price_scalar(*args) == pytest.approx(expected, rel=1e-12)
    assert float(price_array(*args)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("args", [
    (100, 90, 0.5, 0.03, 0.01, 0.3, True),
    (100, 120, 2.0, 0.01, 0.02, 0.15, False),
    (2500, 2600, 14 / 252, 0.0, 0.0, 0.4, True),
])
def test_matches_lognormal_integration(args):
    assert price_scalar(*args) == pytest.approx(bsm_lognormal(*args), abs=1e-9 * args[0])


spots = st.floats(10, 5000)
moneyness = st.floats(0.6, 1.6)
taus = st.floats(1 / 252, 3)
rates = st.floats(0, 0.1)
vols = st.floats(0.02, 2)


@given(spots, moneyness, taus, rates, rates, vols)
def test_put_call_parity(S, m, tau, r, q, vol):
    K = S * m
    c = price_scalar(S, K, tau, r, q, vol, True)
    p = price_scalar(S, K, tau, r, q, vol, False)
    assert c - p == pytest.approx(S * math.exp(-q * tau) - K * math.exp(-r * tau), abs=1e-10 * S)


@given(spots, moneyness, taus, rates, rates, vols, st.booleans())
def test_price_within_no_arbitrage_bounds(S, m, tau, r, q, vol, call):
    K = S * m
    price = price_scalar(S, K, tau, r, q, vol, call)
    fwd, disc = S * math.exp(-q * tau), K * math.exp(-r * tau)
    lower = max(fwd - disc, 0) if call else max(disc - fwd, 0)
    upper = fwd if call else disc
    assert lower - 1e-9 * S <= price <= upper + 1e-9 * S


@given(spots, moneyness, taus, rates, rates, st.floats(0.02, 1.9), st.booleans())
def test_price_increases_with_vol(S, m, tau, r, q, vol, call):
    K = S * m
    assert price_scalar(S, K, tau, r, q, vol + 0.1, call) >= price_scalar(S, K, tau, r, q, vol, call) - 1e-12 * S


@given(spots, moneyness, taus, rates, rates, vols, st.booleans())
def test_delta_matches_central_difference(S, m, tau, r, q, vol, call):
    K = S * m
    h = 1e-5 * S
    fd = (price_scalar(S + h, K, tau, r, q, vol, call) - price_scalar(S - h, K, tau, r, q, vol, call)) / (2 * h)
    # the closed form is dS of the price only with the exp(-q tau) factor
    d = bsm_delta(BsmInputs(S, K, tau, r, q, vol, Right.CALL if call else Right.PUT), dividend_adjusted=True)
    assert d == pytest.approx(fd, abs=1e-6)


def test_default_delta_is_undiscounted():
    inp = BsmInputs(100, 100, 1.0, 0.02, 0.03, 0.2, "C")
    assert bsm_delta(inp) == pytest.approx(bsm_delta(inp, dividend_adjusted=True) * math.exp(0.03))
    put = BsmInputs(100, 100, 1.0, 0.02, 0.03, 0.2, "P")
    assert bsm_delta(inp) - bsm_delta(put) == pytest.approx(1.0)


def test_vectorised_delta_agrees_with_scalar():
    S, K = 4000.0, np.array([3800.0, 4000.0, 4200.0])
    got = delta_array(S, K, 0.03, 0.02, 0.01, 0.2, np.array([False, True, True]))
    for k, call, g in zip(K, (False, True, True), got):
        assert g == pytest.approx(bsm_delta(BsmInputs(S, k, 0.03, 0.02, 0.01, 0.2, "C" if call else "P")), abs=1e-15)


def test_vega_matches_finite_difference():
    inp = BsmInputs(100, 105, 0.5, 0.01, 0.0, 0.25, "P")
    h = 1e-6
    fd = (bsm_price(inp.with_vol(0.25 + h)) - bsm_price(inp.with_vol(0.25 - h))) / (2 * h)
    assert bsm_vega(inp) == pytest.approx(fd, rel=1e-7)


def test_degenerate_limits():
    assert price_scalar(100, 90, 0.0, 0.05, 0.0, 0.2, True) == 10.0
    assert price_scalar(100, 90, 0.0, 0.05, 0.0, 0.2, False) == 0.0
    assert price_scalar(100, 110, 1.0, 0.0, 0.0, 0.0, False) == pytest.approx(10.0)
    np.testing.assert_allclose(price_array(100, [90, 110], 0.0, 0.0, 0.0, 0.2, True), [10.0, 0.0])
    with pytest.raises(DegenerateInputError):
        bsm_delta(BsmInputs(100, 100, 0.0, 0, 0, 0.2))
    with pytest.raises(DegenerateInputError):
        BsmInputs(-1, 100, 1, 0, 0, 0.2)


@given(st.floats(0.6, 1.6), taus, rates, rates, st.floats(0.01, 3), st.booleans())
def test_implied_vol_round_trip(m, tau, r, q, vol, call):
    S, K = 100.0, 100.0 * m
    inp = BsmInputs(S, K, tau, r, q, vol, Right.CALL if call else Right.PUT)
    # only where the price carries enough information about vol
    assume(bsm_vega(inp) > 1e-3)
    assert implied_vol(bsm_price(inp), inp) == pytest.approx(vol, abs=1e-8)


def test_implied_vol_rejects_arbitrage_prices():
    inp = BsmInputs(100, 100, 0.5, 0.02, 0.0, 0.0, "C")
    with pytest.raises(NoSolutionError):
        implied_vol(101.0, inp)
    with pytest.raises(NoSolutionError):
        implied_vol(0.0001, BsmInputs(100, 50, 0.5, 0.02, 0.0, 0.0, "C"))  # below intrinsic
    with pytest.raises(NoSolutionError):
        implied_vol(1.0, BsmInputs(100, 100, 0.0, 0.02, 0.0, 0.0, "C"))


def test_implied_vol_handles_flat_wings():
    # far wing: vega vanishes, the bracket still converges
    inp = BsmInputs(100, 200, 0.1, 0.0, 0.0, 1.5, "C")
    assert implied_vol(bsm_price(inp), inp) == pytest.approx(1.5, abs=1e-8)
