import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volwriter.errors import ConfigError, DegenerateSizeError, InsufficientDataError, MissingExpiryError
from volwriter.market_data import MarketSnapshot, OptionKey, OptionQuote, QuoteBar, Right, Timestamp
from volwriter.strategy import (
    LegSet,
    SizingKind,
    SizingRule,
    StrategyKind,
    StrategySpec,
    delta_size,
    nearest_strike,
    select_strikes,
    vix_rank,
    vix_size,
)

TODAY = dt.date(2018, 1, 2)
EXPIRY = TODAY + dt.timedelta(days=7)


def chain_snapshot(spot, strikes, expiry=EXPIRY):
    chain = {}
    for k in strikes:
        for right in (Right.CALL, Right.PUT):
            key = OptionKey(expiry, float(k), right)
            chain[key] = OptionQuote(key, QuoteBar(1.0, 1.1))
    return MarketSnapshot(Timestamp(TODAY, 360), QuoteBar(spot, spot), chain, 15.0, 0.02, 0.015)


def test_strangle_strikes():
    snap = chain_snapshot(4000.0, range(3800, 4205, 5))
    legs = select_strikes(snap, StrategySpec("strangle", 0.02))
    assert [(k.strike, k.right) for k in legs.keys] == [(4080.0, Right.CALL), (3920.0, Right.PUT)]
    assert all(q == -1 for _, q in legs)


def test_ties_go_up_for_calls_and_down_for_puts():
    snap = chain_snapshot(4002.5, [4000, 4005])
    assert select_strikes(snap, StrategySpec("call")).keys[0].strike == 4005.0
    assert select_strikes(snap, StrategySpec("put")).keys[0].strike == 4000.0


def test_straddle_uses_one_strike():
    snap = chain_snapshot(4011.0, range(3900, 4105, 25))
    legs = select_strikes(snap, StrategySpec("straddle"))
    assert {k.strike for k in legs.keys} == {4000.0}
    assert {k.right for k in legs.keys} == {Right.CALL, Right.PUT}


def test_missing_expiry():
    snap = chain_snapshot(4000.0, [4000], expiry=TODAY + dt.timedelta(days=8))
    with pytest.raises(MissingExpiryError):
        select_strikes(snap, StrategySpec("put"))


@given(st.lists(st.integers(1, 400), min_size=1, max_size=30, unique=True), st.floats(1, 2000), st.booleans())
def test_nearest_strike_is_a_minimiser(ks, target, up):
    strikes = [5.0 * k for k in ks]
    got = nearest_strike(strikes, target, up)
    assert got in strikes
    assert abs(got - target) <= min(abs(k - target) for k in strikes) + 1e-9 * target


def test_spec_validation():
    with pytest.raises(ConfigError):
        StrategySpec("straddle", 0.02)
    with pytest.raises(ConfigError):
        StrategySpec("strangle", 0.0)
    with pytest.raises(ConfigError):
        StrategySpec("butterfly")
    assert StrategySpec("short-put").kind is StrategyKind.SHORT_PUT
    assert SizingRule("VIX").kind is SizingKind.VIX
    with pytest.raises(ConfigError):
        SizingRule(model="heston")


def test_leg_set_invariants():
    k1 = OptionKey(EXPIRY, 4000.0, Right.CALL)
    k2 = OptionKey(EXPIRY + dt.timedelta(days=7), 4000.0, Right.PUT)
    with pytest.raises(ValueError):
        LegSet(((k1, -1), (k2, -1)))
    with pytest.raises(ValueError):
        LegSet(((k1, 1),))
    assert [q for _, q in LegSet(((k1, -1),)).with_quantity(5)] == [-5]


K4000 = OptionKey(EXPIRY, 4000.0, Right.CALL)
P4000 = OptionKey(EXPIRY, 4000.0, Right.PUT)


@pytest.mark.parametrize("pv,keys,deltas,expected", [
    (1_000_000, [K4000], [0.5], 5),
    (100_000, [K4000], [0.5], 0),
    (1_000_000, [K4000, P4000], [0.5, -0.5], 2),
    (-5.0, [K4000], [0.5], 0),
])
def test_delta_size_examples(pv, keys, deltas, expected):
    assert delta_size(pv, keys, deltas, 100) == expected


def test_delta_size_degenerate():
    with pytest.raises(DegenerateSizeError):
        delta_size(1e6, [K4000], [0.0])


@given(st.floats(0, 1e8), st.floats(0.01, 1), st.floats(1.0, 10.0))
def test_delta_size_floor_homogeneity(pv, delta, lam):
    x = pv / (4000 * delta * 100)
    q = delta_size(pv, [K4000], [delta])
    assert q == math.floor(x)
    assert math.floor(lam * q) <= delta_size(lam * pv, [K4000], [delta]) <= math.floor(lam * (q + 1))


def test_vix_rank_examples():
    hist = np.linspace(10, 35, 252)
    assert vix_rank(hist, 40) == 1.0
    assert vix_rank(hist, 5) == 0.0
    assert vix_rank(hist, 22.5) == sum(1 for h in hist if h <= 22.5) / 252
    with pytest.raises(InsufficientDataError):
        vix_rank(hist[:100], 20)


@given(st.lists(st.floats(5, 80), min_size=20, max_size=60), st.floats(5, 80), st.floats(0, 10))
def test_vix_rank_monotone_in_current(hist, current, bump):
    assert vix_rank(hist, current, 20) <= vix_rank(hist, current + bump, 20)


def test_vix_rank_uses_only_the_window():
    hist = [100.0] * 10 + [10.0] * 252
    assert vix_rank(hist, 20.0) == 1.0


def test_vix_size_examples():
    assert vix_size(1e6, 4000, 1.4, 0.5) == 175
    assert vix_size(1e6, 4000, 1.4, 1.0) == 0
    assert vix_size(0, 4000, 1.4, 0.2) == 0
    assert vix_size(1e6, 4000, 1.4, 0.5, multiplier=100) == 1
    with pytest.raises(ValueError):
        vix_size(1e6, 0.0, 1.4, 0.5)
