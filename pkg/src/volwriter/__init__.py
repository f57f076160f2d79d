"""Systematic index option writing: BSM and Variance-Gamma pricing, delta hedging,
minute-level backtests and performance metrics."""

from .backtest import BacktestConfig, CommissionModel, FillModel, HedgeSchedule, run_backtest
from .bsm import BsmInputs, bsm_delta, bsm_price, implied_vol
from .calibration import CalibrationConfig, calibrate, calibration_schedule
from .market_data import MarketStore, OptionKey, Right, Timestamp, TradingCalendar, load_market_csv
from .metrics import compute_report
from .strategy import SizingRule, StrategySpec
from .synth import GeneratorConfig, generate
from .vg import PricingGrid, VgParams, vg_delta, vg_price

__version__ = "0.1.0"

__all__ = [
    "BacktestConfig", "BsmInputs", "CalibrationConfig", "CommissionModel", "FillModel", "GeneratorConfig",
    "HedgeSchedule", "MarketStore", "OptionKey", "PricingGrid", "Right", "SizingRule", "StrategySpec",
    "Timestamp", "TradingCalendar", "VgParams", "bsm_delta", "bsm_price", "calibrate", "calibration_schedule",
    "compute_report", "generate", "implied_vol", "load_market_csv", "run_backtest", "vg_delta", "vg_price",
]
