"""Parameter-grid runs mirroring the row layout of the strategy result tables."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

from .backtest import BacktestConfig, HedgeSchedule, run_backtest
from .config import ConfigFile, backtest_config, generator_config
from .errors import ConfigError
from .market_data import MarketStore, load_market_csv
from .metrics import compute_report
from .strategy import StrategyKind, StrategySpec
from .synth import generate

RESULT_COLUMNS = ("options", "model", "sizing", "rehedging", "otm", "seed",
                  "arc", "asd", "md", "mld", "ir", "ir2", "ir3", "cvar", "var", "status", "detail")
_METRIC_FIELDS = {"arc": "arc", "asd": "asd", "md": "md", "mld": "mld", "ir": "ir", "ir2": "ir2",
                  "ir3": "ir3", "cvar": "cvar95", "var": "var95"}
_OPTION_NAMES = {"call": StrategyKind.SHORT_CALL, "put": StrategyKind.SHORT_PUT,
                 "straddle": StrategyKind.SHORT_STRADDLE, "strangle": StrategyKind.SHORT_STRANGLE}


@dataclass(frozen=True)
class GridCell:
    options: str
    model: str
    sizing: str
    rehedging: str
    otm: float

    @property
    def valid(self) -> bool:
        kind = _OPTION_NAMES[self.options]
        if kind is StrategyKind.SHORT_STRADDLE:
            return self.otm == 0
        if kind is StrategyKind.SHORT_STRANGLE:
            return self.otm > 0
        return True

    def apply(self, base: BacktestConfig) -> BacktestConfig:
        strategy = StrategySpec(_OPTION_NAMES[self.options], self.otm, base.strategy.dte)
        sizing = replace(base.sizing, kind=self.sizing, model=self.model)
        return replace(base, strategy=strategy, sizing=sizing, model=self.model,
                       hedge=HedgeSchedule.parse(self.rehedging))


def _option_name(kind: StrategyKind) -> str:
    return {v: k for k, v in _OPTION_NAMES.items()}[kind]


def grid_cells(cf: ConfigFile, base: BacktestConfig) -> list[GridCell]:
    """Cartesian product of the grid axes in file order, minus straddles off the money and
    strangles at the money."""
    g = cf.section("grid")
    options = g.get("options", (_option_name(base.strategy.kind),))
    for name in options:
        if name not in _OPTION_NAMES:
            raise ConfigError(f"unknown grid option {name!r}; expected one of {', '.join(_OPTION_NAMES)}")
    models = g.get("models", (base.model,))
    sizing = g.get("sizing", (base.sizing.kind.value,))
    rehedging = g.get("rehedging", (base.hedge.label,))
    otm = g.get("otm", (base.strategy.otm_pct,))
    for h in rehedging:
        HedgeSchedule.parse(h)
    cells = [GridCell(*c) for c in product(options, models, sizing, rehedging, otm)]
    return [c for c in cells if c.valid]


# per-process cache so a worker builds each market only once
_STORES: dict = {}


def _store(source) -> MarketStore:
    store = _STORES.get(source)
    if store is None:
        kind, value = source
        store = load_market_csv(value) if kind == "data" else generate(value)
        _STORES.clear()
        _STORES[source] = store
    return store


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def run_cell(job) -> dict:
    cell, base, source, seed = job
    row = {"options": cell.options, "model": cell.model, "sizing": cell.sizing,
           "rehedging": cell.rehedging, "otm": repr(float(cell.otm)), "seed": "" if seed is None else str(seed)}
    try:
        cfg = cell.apply(base)
        result = run_backtest(cfg, _store(source))
        report = compute_report(result.equity)
    except Exception as exc:  # a failing cell must not abort the grid
        row.update({k: "" for k in _METRIC_FIELDS}, status="error",
                   detail=f"{type(exc).__name__}: {exc}".replace("\n", " ").replace(",", ";"))
        return row
    row.update({k: _fmt(getattr(report, f)) for k, f in _METRIC_FIELDS.items()}, status="ok", detail="")
    return row


def thread_limit(n_jobs: int) -> int:
    env = os.environ.get("VOLWRITER_THREADS")
    limit = os.cpu_count() or 1
    if env:
        try:
            limit = max(1, int(env))
        except ValueError:
            raise ConfigError(f"VOLWRITER_THREADS must be an integer, got {env!r}") from None
    return max(1, min(limit, n_jobs))


def run_grid(cf: ConfigFile, data_dir: str | Path | None = None, seeds=None) -> list[dict]:
    """Run every grid cell (per seed when generating data) and return rows in cell order."""
    base = backtest_config(cf)
    cells = grid_cells(cf, base)
    if data_dir is not None:
        sources = [(("data", str(Path(data_dir).resolve())), None)]
    else:
        seeds = seeds if seeds is not None else cf.get("grid", "seeds") or (generator_config(cf).seed,)
        sources = [(("gen", generator_config(cf, seed=s)), s) for s in seeds]
    jobs = [(cell, base, src, seed) for src, seed in sources for cell in cells]
    workers = thread_limit(len(jobs))
    if workers == 1:
        return [run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def write_results(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row[c] for c in RESULT_COLUMNS) + "\n")
    return path
