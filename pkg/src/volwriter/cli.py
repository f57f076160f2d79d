"""Command-line entry point: ``volwriter {generate,backtest,grid,report}``."""
from __future__ import annotations

import argparse
import hashlib
import sys
import warnings
from pathlib import Path

from .backtest import run_backtest
from .calibration import write_params_csv
from .config import ConfigFile, backtest_config, generator_config, load_config
from .errors import ConfigError, VolwriterError
from .grid import run_grid, write_results
from .market_data import load_market_csv, write_market_csv
from .metrics import compute_report
from .report import write_report
from .synth import generate


def digest(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).name.encode() + b"\0")
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _config(args) -> ConfigFile:
    if not args.config:
        raise ConfigError("--config is required for this command")
    return load_config(args.config)


def _out(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required for this command")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_generate(args) -> int:
    cf = _config(args)
    out = _out(args)
    store = generate(generator_config(cf, seed=args.seed))
    paths = write_market_csv(store, out)
    for p in paths:
        print(p)
    print(f"sha256 {digest(paths)}")
    return 0


def cmd_backtest(args) -> int:
    cf = _config(args)
    out = _out(args)
    cfg = backtest_config(cf)
    if args.data:
        store = load_market_csv(args.data)
    else:
        store = generate(generator_config(cf, seed=args.seed))
    result = run_backtest(cfg, store)
    result.equity.to_csv(out / "equity.csv")
    result.write_trades(out / "trades.csv")
    if result.params:
        write_params_csv(result.params, out / "params.csv")
    report = compute_report(result.equity)
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    return 0


def cmd_grid(args) -> int:
    cf = _config(args)
    out = _out(args)
    seeds = (args.seed,) if args.seed is not None else None
    rows = run_grid(cf, args.data, seeds)
    path = write_results(rows, out / "results.csv")
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{path}: {len(rows)} rows, {failed} failed")
    return 0


def cmd_report(args) -> int:
    paths = []
    for item in list(args.inputs) + ([args.data] if args.data else []):
        p = Path(item)
        paths.extend(sorted(p.rglob("equity*.csv")) if p.is_dir() else [p])
    if not paths:
        raise ConfigError("report needs at least one equity CSV (files or directories)")
    out = _out(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        svg, long = write_report(paths, out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(svg)
    print(long)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="volwriter", description="Systematic index option writing backtests.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="INI configuration file")
        if data:
            p.add_argument("--data", help="directory with underlying/options/vix/rates CSV files")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the generator seed")

    common(sub.add_parser("generate", help="write a synthetic market data set"), data=False)
    common(sub.add_parser("backtest", help="run one backtest"))
    common(sub.add_parser("grid", help="run the configured parameter grid"))
    rep = sub.add_parser("report", help="plot equity curves")
    common(rep)
    rep.add_argument("inputs", nargs="*", help="equity CSV files or directories")
    return parser


COMMANDS = {"generate": cmd_generate, "backtest": cmd_backtest, "grid": cmd_grid, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except VolwriterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        # library-level validation (bad leg sets, ranges) is a configuration problem
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
