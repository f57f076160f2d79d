import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from volwriter.errors import (
    CrossedQuoteError,
    MalformedRowError,
    MarketDataError,
    StaleDataError,
    UnsortedDataError,
)
from volwriter.market_data import (
    OptionKey,
    QuoteBar,
    Right,
    Timestamp,
    TradingCalendar,
    ffill_mids,
    load_market_csv,
    write_market_csv,
)


def test_right_parse_accepts_common_spellings():
    assert Right.parse("c") is Right.CALL
    assert Right.parse("put") is Right.PUT
    with pytest.raises(ValueError):
        Right.parse("x")


def test_quote_bar_rejects_crossed_and_negative():
    with pytest.raises(CrossedQuoteError):
        QuoteBar(2.0, 1.0)
    with pytest.raises(MarketDataError):
        QuoteBar(-1.0, 1.0)
    q = QuoteBar(1.0, 1.5)
    assert q.mid == 1.25 and q.half_spread == 0.25


def test_option_key_label_and_ordering():
    k = OptionKey(dt.date(2018, 1, 9), 2700.0, "P")
    assert k.label == "2018-01-09:2700:P"
    assert OptionKey(dt.date(2018, 1, 9), 2712.5, Right.CALL).label == "2018-01-09:2712.5:C"
    assert sorted([OptionKey(dt.date(2018, 1, 9), 2725, "C"), k])[0] == k


class TestCalendar:
    cal = TradingCalendar.weekdays(dt.date(2018, 1, 1), 10)  # Monday start

    def test_weekdays_skip_weekends(self):
        assert self.cal.dates[4] == dt.date(2018, 1, 5)
        assert self.cal.dates[5] == dt.date(2018, 1, 8)

    def test_year_fraction_counts_trading_minutes_to_settlement(self):
        t = Timestamp(dt.date(2018, 1, 1), 360)
        tau = self.cal.year_fraction(t, dt.date(2018, 1, 8))  # five sessions later
        assert tau == pytest.approx((5 * 390 + 389 - 360) / (252 * 390), abs=1e-15)

    def test_year_fraction_zero_at_and_after_settlement(self):
        assert self.cal.year_fraction(Timestamp(dt.date(2018, 1, 8), 389), dt.date(2018, 1, 8)) == 0.0
        assert self.cal.year_fraction(Timestamp(dt.date(2018, 1, 9), 0), dt.date(2018, 1, 8)) == 0.0

    def test_expiry_past_the_calendar_counts_business_days(self):
        last = self.cal.dates[-1]  # Friday 2018-01-12
        assert self.cal.session_offset(dt.date(2018, 1, 15)) == len(self.cal)
        assert self.cal.session_offset(dt.date(2018, 1, 19)) == len(self.cal) + 4
        assert last == dt.date(2018, 1, 12)

    def test_unknown_date_is_a_data_error(self):
        with pytest.raises(MarketDataError):
            self.cal.index(dt.date(2018, 1, 6))

    @given(st.integers(0, 10 * 390 - 1))
    def test_timestamp_round_trip(self, g):
        assert self.cal.minute_index(self.cal.timestamp(g)) == g

    def test_session_year_fractions_match_scalar(self):
        expiry = dt.date(2018, 1, 5)
        arr = self.cal.session_year_fractions(2, expiry)
        for m in (0, 100, 389):
            assert arr[m] == self.cal.year_fraction(Timestamp(self.cal.dates[2], m), expiry)


def test_unsorted_calendar_rejected():
    with pytest.raises(UnsortedDataError):
        TradingCalendar((dt.date(2018, 1, 3), dt.date(2018, 1, 2)))


@given(st.lists(st.one_of(st.none(), st.floats(1, 100)), min_size=1, max_size=40), st.floats(1, 100))
def test_ffill_mids_matches_loop(values, carry):
    bid = np.array([np.nan if v is None else v for v in values])
    ask = bid + 0.5
    got = ffill_mids(bid, ask, carry)
    last = carry
    for i, v in enumerate(values):
        if v is not None:
            last = v + 0.25
        assert got[i] == pytest.approx(last)


class TestStoreQueries:
    def test_snapshot_contains_quoted_chain(self, small_store):
        cal = small_store.calendar
        snap = small_store.snapshot(Timestamp(cal.dates[0], 30))
        assert snap.chain
        assert snap.spot == pytest.approx(small_store.spot(snap.t))
        assert snap.expiries() == sorted(snap.expiries())
        for key, quote in snap.chain.items():
            assert quote.bar.bid <= quote.bar.ask

    def test_vix_history_is_strictly_before(self, small_store):
        cal = small_store.calendar
        d = cal.dates[3]
        hist = small_store.vix_history(d, 5)
        dates, closes = small_store.vix_series
        pos = int(np.flatnonzero(dates == np.datetime64(d))[0])
        np.testing.assert_array_equal(hist, closes[pos - 5:pos])

    def test_rates_forward_fill(self, small_store):
        cal = small_store.calendar
        assert small_store.rates(cal.dates[-1]) == (0.02, 0.015)
        with pytest.raises(MarketDataError):
            small_store.rates(dt.date(1990, 1, 1))


def _first_key(small_store):
    return small_store.options.day_block(0).keys[0]


def test_last_quote_returns_latest_within_staleness(small_store):
    key = _first_key(small_store)
    cal = small_store.calendar
    q = small_store.last_quote(key, Timestamp(cal.dates[0], 20), 5)
    assert q.t == Timestamp(cal.dates[0], 20)


def test_last_quote_falls_back_and_goes_stale(tmp_path, small_store):
    key = _first_key(small_store)
    write_market_csv(small_store, tmp_path)
    path = tmp_path / "options.csv"
    lines = path.read_text().splitlines()
    d0 = small_store.calendar.dates[0].isoformat()
    prefix = f"{key.expiry.isoformat()},{repr(float(key.strike))},{key.right.value},"
    kept = [lines[0]] + [
        ln for ln in lines[1:]
        if not (ln.startswith(f"{d0},") and int(ln.split(",")[1]) > 10 and ln.split(",", 2)[2].startswith(prefix))
    ]
    path.write_text("\n".join(kept) + "\n")
    store = load_market_csv(tmp_path, small_store.calendar)
    t = Timestamp(small_store.calendar.dates[0], 25)
    q = store.last_quote(key, t, 30)
    assert q.t == Timestamp(t.date, 10)
    with pytest.raises(StaleDataError):
        store.last_quote(key, t, 14)


def test_csv_round_trip_is_exact(tmp_path, small_store):
    paths = write_market_csv(small_store, tmp_path / "a")
    back = load_market_csv(tmp_path / "a", small_store.calendar)
    assert back.equals(small_store)
    again = write_market_csv(back, tmp_path / "b")
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()


@pytest.fixture
def csv_dir(tmp_path, small_store):
    write_market_csv(small_store, tmp_path)
    return tmp_path


def _edit(path, line_no, func):
    lines = path.read_text().splitlines()
    lines[line_no] = func(lines[line_no])
    path.write_text("\n".join(lines) + "\n")


def test_crossed_option_quote_reports_line(csv_dir):
    def cross(line):
        parts = line.split(",")
        parts[5] = repr(float(parts[6]) + 1.0)  # bid above ask
        return ",".join(parts)

    _edit(csv_dir / "options.csv", 3, cross)
    with pytest.raises(CrossedQuoteError, match=r"options\.csv:4"):
        load_market_csv(csv_dir)


def test_bad_right_is_malformed(csv_dir):
    _edit(csv_dir / "options.csv", 2, lambda ln: ln.replace(",P,", ",X,").replace(",C,", ",X,"))
    with pytest.raises(MalformedRowError, match=r"options\.csv:3"):
        load_market_csv(csv_dir)


def test_unsorted_underlying_rejected(csv_dir):
    path = csv_dir / "underlying.csv"
    lines = path.read_text().splitlines()
    lines[2], lines[3] = lines[3], lines[2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(UnsortedDataError):
        load_market_csv(csv_dir)


def test_missing_file_is_a_data_error(csv_dir):
    (csv_dir / "vix.csv").unlink()
    with pytest.raises(MarketDataError, match="vix.csv"):
        load_market_csv(csv_dir)


def test_underlying_gaps_are_forward_filled(csv_dir, small_store):
    path = csv_dir / "underlying.csv"
    lines = path.read_text().splitlines()
    del lines[5:8]  # minutes 4, 5, 6 of the first session
    path.write_text("\n".join(lines) + "\n")
    store = load_market_csv(csv_dir)
    und = store.underlying_array
    for g in (4, 5, 6):
        np.testing.assert_array_equal(und[g], small_store.underlying_array[3])
    np.testing.assert_array_equal(und[7], small_store.underlying_array[7])


def test_non_numeric_field_names_the_row(csv_dir):
    _edit(csv_dir / "underlying.csv", 4, lambda ln: ln.rsplit(",", 1)[0] + ",abc")
    with pytest.raises(MalformedRowError, match=r"underlying\.csv:5"):
        load_market_csv(csv_dir)


def test_vix_close_forward_fills(small_store):
    dates, closes = small_store.vix_series
    last = dates[-1].astype(dt.date)
    assert small_store.vix_close(last + dt.timedelta(days=3)) == closes[-1]
    assert math.isfinite(small_store.vix_close(small_store.calendar.dates[0]))
