import datetime as dt
from dataclasses import replace

import numpy as np
import pytest

from conftest import small_config
from volwriter import calibration as cal_mod
from volwriter.calibration import (
    CalibrationConfig,
    calibrate,
    calibration_schedule,
    objective,
    select_quotes,
    write_params_csv,
)
from volwriter.errors import ConfigError, InsufficientDataError, NoSolutionError, NumericError
from volwriter.market_data import Timestamp, TradingCalendar
from volwriter.synth import BsmQuotes, VgQuotes, generate
from volwriter.vg import VgParams, martingale_feasible


def vg_market(sigma, nu, theta, seed=0, spread=0.0, noise=0.0, minute=0):
    cfg = small_config(seed=seed, n_days=2, session_length=390, strike_span=0.10,
                       quote_model=VgQuotes(sigma, nu, theta), spread=spread, mid_noise=noise,
                       dte_list=(7, 14, 30))
    store = generate(cfg)
    t = Timestamp(store.calendar.dates[0], minute)
    return store.snapshot(t), store.calendar


@pytest.mark.parametrize("truth", [(0.15, 0.2, -0.1), (0.25, 0.4, -0.25), (0.12, 0.1, -0.05)])
def test_recovers_noise_free_parameters(truth):
    snap, cal = vg_market(*truth)
    fit = calibrate(snap, calendar=cal)
    for got, want in zip(fit.as_tuple(), truth):
        assert got == pytest.approx(want, rel=0.01)
    assert fit.fitted_at == snap.t and not fit.stale
    assert fit.objective_value < 1e-6


def test_spread_noise_keeps_sigma_close():
    snap, cal = vg_market(0.15, 0.2, -0.1, seed=4, spread=0.002, noise=1.0)
    fit = calibrate(snap, calendar=cal)
    assert fit.sigma == pytest.approx(0.15, rel=0.05)


def test_warm_start_is_never_beaten_by_a_worse_fit():
    snap, cal = vg_market(0.15, 0.2, -0.1)
    truth = VgParams(0.15, 0.2, -0.1)
    fit = calibrate(snap, warm_start=truth, calendar=cal)
    cs = select_quotes(snap, CalibrationConfig(), cal)
    assert objective(cs, fit) <= objective(cs, truth) + 1e-9


def test_fit_respects_bounds_and_feasibility():
    cfg = CalibrationConfig(sigma_bounds=(0.01, 0.14), nu_bounds=(0.05, 0.5), theta_bounds=(-0.3, 0.0))
    snap, cal = vg_market(0.15, 0.2, -0.1)
    fit = calibrate(snap, cfg=cfg, calendar=cal)
    assert 0.01 <= fit.sigma <= 0.14
    assert 0.05 <= fit.nu <= 0.5 and -0.3 <= fit.theta <= 0.0
    assert martingale_feasible(*fit.as_tuple())


def test_quote_filter():
    snap, cal = vg_market(0.15, 0.2, -0.1)
    cfg = CalibrationConfig()
    cs = select_quotes(snap, cfg, cal)
    S = snap.spot
    assert np.all(np.abs(np.log(cs.strikes / S)) <= cfg.moneyness_window)
    assert np.all(cs.mids >= cfg.min_mid)
    assert np.all(np.where(cs.is_call, cs.strikes >= S, cs.strikes <= S))
    assert np.all(cs.taus >= 1 / 252)
    wide = select_quotes(snap, CalibrationConfig(otm_only=False), cal)
    assert wide.mids.size > cs.mids.size


def test_too_few_quotes_raises():
    snap, cal = vg_market(0.15, 0.2, -0.1)
    with pytest.raises(InsufficientDataError):
        calibrate(snap, cfg=CalibrationConfig(min_mid=1e9), calendar=cal)


def test_failure_returns_stale_warm_start(monkeypatch):
    snap, cal = vg_market(0.15, 0.2, -0.1)

    def boom(*args, **kwargs):
        raise NumericError("solver blew up")

    monkeypatch.setattr(cal_mod, "_fit", boom)
    warm = VgParams(0.2, 0.3, -0.2)
    got = calibrate(snap, warm_start=warm, calendar=cal)
    assert got.stale and got.as_tuple() == warm.as_tuple()
    with pytest.raises(NoSolutionError):
        calibrate(snap, calendar=cal)


def test_schedule():
    assert calibration_schedule(390, 30) == list(range(0, 390, 30))
    one_day = TradingCalendar.weekdays(dt.date(2018, 1, 2), 1)
    assert calibration_schedule(one_day, 130) == [0, 130, 260]
    with pytest.raises(ValueError):
        calibration_schedule(390, 0)


def test_config_validation():
    with pytest.raises(ConfigError):
        CalibrationConfig(refit_interval=0)
    with pytest.raises(ConfigError):
        CalibrationConfig(nu_bounds=(0.0, 1.0))
    with pytest.raises(ConfigError):
        CalibrationConfig(min_quotes=2)


def test_params_csv(tmp_path):
    snap, cal = vg_market(0.15, 0.2, -0.1)
    fit = calibrate(snap, calendar=cal)
    path = write_params_csv([fit], tmp_path / "params.csv")
    header, row = path.read_text().splitlines()
    assert header == "date,minute,sigma,nu,theta,objective"
    fields = row.split(",")
    assert fields[0] == snap.t.date.isoformat() and fields[1] == "0"
    assert float(fields[2]) == fit.sigma


def test_flat_black_scholes_chain_gives_small_nu():
    cfg = small_config(n_days=2, session_length=390, strike_span=0.10, dte_list=(7, 14, 30),
                       quote_model=BsmQuotes(0.2))
    store = generate(cfg)
    fit = calibrate(store.snapshot(Timestamp(store.calendar.dates[0], 0)), calendar=store.calendar)
    assert fit.nu < 0.05
    assert fit.sigma == pytest.approx(0.2, rel=0.05)


def test_three_quotes_are_not_enough():
    snap, cal = vg_market(0.15, 0.2, -0.1)
    keep = sorted(snap.chain, key=lambda k: abs(k.strike - snap.spot))
    keep = [k for k in keep if (k.strike >= snap.spot) == k.right.is_call][:3]
    thin = replace(snap, chain={k: snap.chain[k] for k in keep})
    with pytest.raises(InsufficientDataError):
        calibrate(thin, calendar=cal)
