"""Plot-ready output for equity curves: a hand-built SVG line chart and a long-format CSV."""
from __future__ import annotations

import warnings
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .backtest import EquityCurve

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
WIDTH, HEIGHT = 900, 480
MARGIN = {"left": 80, "right": 200, "top": 30, "bottom": 50}


def curve_name(path: Path) -> str:
    """Legend label: the file stem, or the parent directory for files named ``equity.csv``."""
    return path.parent.name if path.stem == "equity" and path.parent.name else path.stem


def align(curves: dict[str, EquityCurve]):
    """Restrict every curve to the dates common to all of them."""
    date_sets = [set(c.dates) for c in curves.values()]
    common = sorted(set.intersection(*date_sets))
    if any(len(s) != len(common) for s in date_sets):
        warnings.warn(f"equity curves cover different dates; using the {len(common)} common sessions",
                      stacklevel=2)
    if not common:
        raise ValueError("equity curves share no dates")
    out = {}
    for name, c in curves.items():
        pos = {d: i for i, d in enumerate(c.dates)}
        out[name] = np.array([c.values[pos[d]] for d in common])
    return common, out


def render_svg(dates, series: dict[str, np.ndarray], title: str = "Equity") -> str:
    n = len(dates)
    values = np.concatenate(list(series.values()))
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(i):
        return x0 + (x1 - x0) * (i / (n - 1) if n > 1 else 0.5)

    def sy(v):
        return y0 + (y1 - y0) * (v - lo) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        parts.append(f'<text x="{x0 - 6}" y="{sy(v) + 4:.2f}" text-anchor="end">{v:.0f}</text>')
    for i in sorted({0, n // 2, n - 1}):
        parts.append(f'<text x="{sx(i):.2f}" y="{y0 + 18}" text-anchor="middle">{dates[i].isoformat()}</text>')
    for j, (name, vals) in enumerate(series.items()):
        color = PALETTE[j % len(PALETTE)]
        pts = " ".join(f"{sx(i):.2f},{sy(v):.2f}" for i, v in enumerate(vals))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
    for j, name in enumerate(series):
        color = PALETTE[j % len(PALETTE)]
        ly = MARGIN["top"] + 18 * j + 6
        parts.append(f'<g class="legend"><line x1="{x1 + 15}" y1="{ly}" x2="{x1 + 35}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="3"/>'
                     f'<text x="{x1 + 40}" y="{ly + 4}">{escape(name)}</text></g>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(paths: list[Path], out_dir: Path) -> tuple[Path, Path]:
    """Write ``equity.svg`` and ``equity_long.csv`` for ``paths`` into ``out_dir``."""
    if not paths:
        raise ValueError("no equity CSV files given")
    curves = {}
    for p in paths:
        name = curve_name(p)
        base, k = name, 2
        while name in curves:
            name, k = f"{base}-{k}", k + 1
        curves[name] = EquityCurve.from_csv(p)
    dates, series = align(curves)
    out_dir.mkdir(parents=True, exist_ok=True)
    svg = out_dir / "equity.svg"
    svg.write_text(render_svg(dates, series), encoding="utf-8")
    long = out_dir / "equity_long.csv"
    with open(long, "w", encoding="utf-8", newline="") as fh:
        fh.write("config,date,equity\n")
        for name, vals in series.items():
            for d, v in zip(dates, vals):
                fh.write(f"{name},{d.isoformat()},{float(v)!r}\n")
    return svg, long
