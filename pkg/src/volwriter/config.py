"""INI configuration files mapped onto the library's config objects.

Every section and key is validated against a schema; an unknown name is a
:class:`ConfigError` that suggests the closest valid spelling.
"""
from __future__ import annotations

import configparser
import datetime as dt
import difflib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .backtest import BacktestConfig, CommissionModel, FillModel, HedgeSchedule
from .calibration import CalibrationConfig
from .errors import ConfigError
from .strategy import SizingRule, StrategySpec
from .synth import BsmQuotes, GbmProcess, GeneratorConfig, VgProcess, VgQuotes


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def _list(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        return tuple(conv(part.strip()) for part in text.replace("\n", ",").split(",") if part.strip())
    return parse


def _str(text: str) -> str:
    return text.strip().lower()


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "generator": {
        "seed": int, "n_days": int, "s0": float, "start_date": _date, "session_length": int,
        "process": _str, "mu": float, "sigma": float, "nu": float, "theta": float, "drift": float,
        "quote_model": _str, "iv_level": float, "iv_skew": float, "iv_vol_of_vol": float,
        "iv_mean_reversion": float, "quote_sigma": float, "quote_nu": float, "quote_theta": float,
        "spread": float, "underlying_spread": float, "mid_noise": float,
        "strike_spacing": float, "strike_span": float, "dte_list": _list(int),
        "risk_free": float, "div_yield": float, "vix_warmup_days": int,
    },
    "data": {"start": _date, "end": _date},
    "backtest": {
        "model": _str, "initial_cash": float, "max_staleness": int, "dividend_adjusted_delta": _bool,
        "start": _date, "end": _date,
    },
    "strategy": {"kind": _str, "otm_pct": float, "dte": int},
    "sizing": {"kind": _str, "model": _str, "rho": float, "window": int, "per_contract_notional": _bool},
    "hedging": {"schedule": _str, "etf_ratio": float, "minute_before_close": int},
    "costs": {
        "per_option_contract": float, "option_order_minimum": float, "per_etf_share": float,
        "etf_order_minimum": float, "index_settlement_fee": float, "spread_fraction": float,
    },
    "calibration": {
        "refit_interval": int, "sigma_min": float, "sigma_max": float, "nu_min": float, "nu_max": float,
        "theta_min": float, "theta_max": float, "max_iterations": int, "tolerance": float,
        "min_mid": float, "moneyness_window": float, "min_tau_days": float, "min_quotes": int,
    },
    "grid": {
        "options": _list(_str), "models": _list(_str), "sizing": _list(_str),
        "rehedging": _list(_str), "otm": _list(float), "seeds": _list(int),
    },
}


def _suggest(name: str, candidates) -> str:
    close = difflib.get_close_matches(name, list(candidates), n=1, cutoff=0.5)
    return f"; did you mean {close[0]!r}?" if close else ""


@dataclass
class ConfigFile:
    """Typed values of a parsed config file, per section."""

    path: Path | None
    sections: dict[str, dict[str, Any]] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.sections.get(name, {}))


def parse_config_text(text: str, path: Path | None = None) -> ConfigFile:
    where = str(path) if path else "<config>"
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=where)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from None
    out = ConfigFile(path)
    for section in parser.sections():
        schema = SCHEMA.get(section)
        if schema is None:
            raise ConfigError(f"{where}: unknown section [{section}]{_suggest(section, SCHEMA)}")
        values = {}
        for key, raw in parser.items(section):
            conv = schema.get(key)
            if conv is None:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]{_suggest(key, schema)}")
            try:
                values[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {section}.{key}: {raw!r} ({exc})") from None
        out.sections[section] = values
    return out


def load_config(path: str | Path) -> ConfigFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, path)


def generator_config(cf: ConfigFile, seed: int | None = None) -> GeneratorConfig:
    g = cf.section("generator")
    kwargs: dict[str, Any] = {}
    for name in ("seed", "n_days", "s0", "start_date", "session_length", "spread", "underlying_spread",
                 "mid_noise", "strike_spacing", "strike_span", "dte_list", "risk_free", "div_yield",
                 "vix_warmup_days"):
        if name in g:
            kwargs[name] = g[name]
    if seed is not None:
        kwargs["seed"] = seed
    process = g.get("process", "gbm")
    if process == "gbm":
        kwargs["process"] = GbmProcess(g.get("mu", 0.0), g.get("sigma", 0.15))
    elif process == "vg":
        kwargs["process"] = VgProcess(g.get("sigma", 0.15), g.get("nu", 0.2), g.get("theta", -0.1),
                                      g.get("drift", 0.0))
    else:
        raise ConfigError(f"unknown generator.process {process!r}; expected gbm or vg")
    quotes = g.get("quote_model", "bsm")
    if quotes == "bsm":
        kwargs["quote_model"] = BsmQuotes(g.get("iv_level", 0.20), g.get("iv_skew", 0.0),
                                          g.get("iv_vol_of_vol", 0.0), g.get("iv_mean_reversion", 5.0))
    elif quotes == "vg":
        kwargs["quote_model"] = VgQuotes(g.get("quote_sigma", 0.15), g.get("quote_nu", 0.2),
                                         g.get("quote_theta", -0.1))
    else:
        raise ConfigError(f"unknown generator.quote_model {quotes!r}; expected bsm or vg")
    return GeneratorConfig(**kwargs)


def calibration_config(cf: ConfigFile) -> CalibrationConfig:
    c = cf.section("calibration")
    d = CalibrationConfig()
    return CalibrationConfig(
        refit_interval=c.get("refit_interval", d.refit_interval),
        sigma_bounds=(c.get("sigma_min", d.sigma_bounds[0]), c.get("sigma_max", d.sigma_bounds[1])),
        nu_bounds=(c.get("nu_min", d.nu_bounds[0]), c.get("nu_max", d.nu_bounds[1])),
        theta_bounds=(c.get("theta_min", d.theta_bounds[0]), c.get("theta_max", d.theta_bounds[1])),
        max_iterations=c.get("max_iterations", d.max_iterations),
        tolerance=c.get("tolerance", d.tolerance),
        min_mid=c.get("min_mid", d.min_mid),
        moneyness_window=c.get("moneyness_window", d.moneyness_window),
        min_tau_days=c.get("min_tau_days", d.min_tau_days),
        min_quotes=c.get("min_quotes", d.min_quotes),
    )


def backtest_config(cf: ConfigFile) -> BacktestConfig:
    s = cf.section("strategy")
    if "kind" not in s:
        raise ConfigError("missing required key strategy.kind")
    b = {**cf.section("data"), **cf.section("backtest")}
    z = cf.section("sizing")
    h = cf.section("hedging")
    c = cf.section("costs")
    model = b.get("model", "bsm")
    strategy = StrategySpec(s["kind"], s.get("otm_pct", 0.0), s.get("dte", 7))
    sizing = SizingRule(z.get("kind", "delta"), z.get("model", model), z.get("rho", 1.4), z.get("window", 252),
                        z.get("per_contract_notional", False))
    commission = CommissionModel(**{k: v for k, v in c.items() if k != "spread_fraction"})
    return BacktestConfig(
        strategy=strategy, sizing=sizing, hedge=HedgeSchedule.parse(h.get("schedule", "naked")),
        model=model, initial_cash=b.get("initial_cash", 1_000_000.0), etf_ratio=h.get("etf_ratio", 0.1),
        commission=commission, fill=FillModel(c.get("spread_fraction", 1.0)),
        hedge_minute_before_close=h.get("minute_before_close", 30),
        max_staleness=b.get("max_staleness", 30), calibration=calibration_config(cf),
        dividend_adjusted_delta=b.get("dividend_adjusted_delta", False),
        start=b.get("start"), end=b.get("end"),
    )
