import datetime as dt
import math

import numpy as np
import pytest

from conftest import small_config
from volwriter.bsm import BsmInputs, implied_vol
from volwriter.errors import ConfigError
from volwriter.market_data import Right, Timestamp
from volwriter.synth import (
    BsmQuotes,
    GbmProcess,
    GeneratorConfig,
    VgProcess,
    VgQuotes,
    generate,
    iv_levels,
    simulate_closes,
)
from volwriter.vg import VgParams, vg_prices


def _iv(store, key, t):
    quote = store.chain(t)[key]
    r, q = store.rates(t.date)
    tau = store.calendar.year_fraction(t, key.expiry)
    return implied_vol(quote.bar.mid, BsmInputs(store.spot(t), key.strike, tau, r, q, 0.0, key.right))


def test_same_seed_same_market():
    a, b = generate(small_config(seed=5)), generate(small_config(seed=5))
    assert a.equals(b)


def test_different_seed_different_path():
    a, b = generate(small_config(seed=5)), generate(small_config(seed=6))
    assert not np.array_equal(a.underlying_array, b.underlying_array)


def test_days_are_independent_streams():
    # extending the horizon leaves earlier sessions untouched
    short = simulate_closes(small_config(), 3, 60)
    long = simulate_closes(small_config(), 6, 60)
    np.testing.assert_array_equal(short, long[:180])


def test_bars_are_consistent(small_store):
    und = small_store.underlying_array
    o, h, lo, c, b, a = und.T
    assert np.all(lo <= np.minimum(o, c)) and np.all(np.maximum(o, c) <= h)
    assert np.all(b <= a)
    assert und[0, 0] == 4000.0
    np.testing.assert_array_equal(o[1:], c[:-1])


def test_flat_iv_round_trips():
    store = generate(small_config(quote_model=BsmQuotes(iv_level=0.2)))
    t = Timestamp(store.calendar.dates[2], 17)
    for key in list(store.chain(t))[::7]:
        if store.calendar.year_fraction(t, key.expiry) > 0 and store.chain(t)[key].bar.mid > 0.05:
            assert _iv(store, key, t) == pytest.approx(0.2, abs=1e-8)


def test_skew_shapes_implied_vol():
    store = generate(small_config(quote_model=BsmQuotes(iv_level=0.2, iv_skew=-0.3)))
    t = Timestamp(store.calendar.dates[1], 30)
    S = store.spot(t)
    r, q = store.rates(t.date)
    for key, quote in store.chain(t).items():
        tau = store.calendar.year_fraction(t, key.expiry)
        if quote.bar.mid < 0.5:
            continue
        F = S * math.exp((r - q) * tau)
        assert _iv(store, key, t) == pytest.approx(0.2 - 0.3 * math.log(key.strike / F), abs=1e-7)


def test_spread_is_proportional():
    store = generate(small_config(spread=0.01))
    t = Timestamp(store.calendar.dates[0], 5)
    for quote in store.chain(t).values():
        b, a = quote.bar.bid, quote.bar.ask
        assert a - b == pytest.approx(0.02 * quote.bar.mid, rel=1e-12, abs=1e-15)


def test_mid_noise_stays_inside_spread_and_is_reproducible():
    cfg = small_config(spread=0.01, mid_noise=1.0)
    clean = generate(small_config(spread=0.01))
    noisy, again = generate(cfg), generate(cfg)
    t = Timestamp(clean.calendar.dates[0], 5)
    c, n = clean.chain(t), noisy.chain(t)
    assert c.keys() == n.keys()
    for key in c:
        m0, m1 = c[key].bar.mid, n[key].bar.mid
        assert abs(m1 - m0) <= 0.01 * m0 + 1e-12
    assert noisy.chain(t) == again.chain(t)


def test_vg_quotes_equal_model_prices():
    vq = VgQuotes(0.15, 0.2, -0.1)
    store = generate(small_config(quote_model=vq, n_days=3))
    t = Timestamp(store.calendar.dates[1], 40)
    r, q = store.rates(t.date)
    chain = store.chain(t)
    keys = sorted(chain)
    tau = np.array([store.calendar.year_fraction(t, k.expiry) for k in keys])
    K = np.array([k.strike for k in keys])
    calls = np.array([k.right.is_call for k in keys])
    ref = vg_prices(store.spot(t), K, tau, r, q, calls, vq.params)
    got = np.array([chain[k].bar.mid for k in keys])
    # quotes are priced on a shared frame per minute; allow the pricing contract
    np.testing.assert_allclose(got, ref, atol=max(1e-4, 1e-5 * store.spot(t)))


def test_strikes_on_lattice_and_within_span(small_store):
    cfg = small_config()
    t = Timestamp(small_store.calendar.dates[4], 0)
    S = small_store.spot(t)
    strikes = {k.strike for k in small_store.chain(t)}
    assert all(k % cfg.strike_spacing == 0 for k in strikes)
    assert min(strikes) <= S * (1 - 0.05) and max(strikes) >= S * (1 + 0.05)


def test_seven_day_expiry_listed_every_session(small_store):
    cal = small_store.calendar
    for d in cal.dates[:6]:
        expiries = small_store.snapshot(Timestamp(d, 30)).expiries()
        assert d + dt.timedelta(days=7) in expiries


def test_vix_history_has_warmup(small_store):
    dates, closes = small_store.vix_series
    assert len(dates) == 30 + len(small_store.calendar)
    assert np.all(np.diff(dates.astype(np.int64)) > 0)
    assert np.all(np.is_busday(dates))
    assert np.all(closes > 0)


def test_vix_tracks_iv_level():
    cfg = small_config(quote_model=BsmQuotes(iv_level=0.25, iv_vol_of_vol=0.8))
    store = generate(cfg)
    levels = iv_levels(cfg, cfg.vix_warmup_days + cfg.n_days)
    np.testing.assert_allclose(store.vix_series[1], 100 * levels)
    assert np.std(np.log(levels)) > 0


def test_vg_quote_model_vix_is_thirty_day_atm_iv():
    store = generate(small_config(quote_model=VgQuotes(0.15, 0.2, -0.1), n_days=2))
    closes = store.vix_series[1]
    assert np.all(closes == closes[0])
    assert 10 < closes[0] < 30


def test_gbm_log_returns_have_configured_variance():
    cfg = GeneratorConfig(seed=1, n_days=60, process=GbmProcess(0.0, 0.3))
    closes = simulate_closes(cfg, 60, 390)
    r = np.diff(np.log(np.concatenate(([cfg.s0], closes))))
    ann = r.var() * 252 * 390
    assert ann == pytest.approx(0.09, rel=0.03)


def test_vg_process_is_martingale_in_mean():
    cfg = GeneratorConfig(seed=2, n_days=40, process=VgProcess(0.2, 0.5, -0.2, 0.0))
    closes = simulate_closes(cfg, 40, 390).reshape(40, 390)
    daily = closes[:, -1] / np.concatenate(([cfg.s0], closes[:-1, -1]))
    p = VgParams(0.2, 0.5, -0.2)
    assert p.omega != 0
    assert abs(daily.mean() - 1) < 4 * daily.std() / math.sqrt(daily.size)


def test_config_validation():
    with pytest.raises(ConfigError, match="dte_list"):
        GeneratorConfig(dte_list=(14,))
    with pytest.raises(ConfigError, match="spread"):
        GeneratorConfig(spread=1.5)
    with pytest.raises(ConfigError, match="martingale"):
        GeneratorConfig(quote_model=VgQuotes(0.5, 3.0, 0.5))


def test_puts_and_calls_both_listed(small_store):
    t = Timestamp(small_store.calendar.dates[0], 0)
    rights = {k.right for k in small_store.chain(t)}
    assert rights == {Right.CALL, Right.PUT}
