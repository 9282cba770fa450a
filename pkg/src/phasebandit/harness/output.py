"""CSV emission and parsing for :class:`RegretSummary`, plus a dependency-free SVG plot."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Literal
from xml.sax.saxutils import escape

from .runner import CellSummary, RegretSummary

HEADER = (
    "policy", "d", "n", "r", "sigma", "scale", "seeds",
    "mean_cum_regret", "se_cum_regret", "mean_simple_regret", "se_simple_regret",
    "mean_warm_rounds", "warm_success_rate",
)  # fmt: skip

_INT_FIELDS = {"d", "n", "seeds"}
_OPTIONAL = {"se_cum_regret", "se_simple_regret", "mean_warm_rounds", "warm_success_rate"}


class CsvParseError(ValueError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        # repr is the shortest string that round-trips exactly
        return repr(value)
    return str(value)


def format_csv(summary: RegretSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for cell in sorted(summary.cells, key=lambda c: c.key):
        writer.writerow([_fmt(getattr(cell, name)) for name in HEADER])
    return buf.getvalue()


def emit_csv(summary: RegretSummary, path: str | Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_csv(summary))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV to {path}: {exc.strerror}") from None


def parse_csv_text(text: str, source: str = "<csv>") -> RegretSummary:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != HEADER:
        raise CsvParseError(f"{source}: line 1: expected header {','.join(HEADER)}")
    cells = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(HEADER):
            raise CsvParseError(f"{source}: line {lineno}: expected {len(HEADER)} fields, got {len(row)}")
        values = {}
        try:
            for name, raw in zip(HEADER, row):
                if name == "policy":
                    values[name] = raw
                elif raw == "" and name in _OPTIONAL:
                    values[name] = None
                elif name in _INT_FIELDS:
                    values[name] = int(raw)
                else:
                    values[name] = float(raw)
        except ValueError as exc:
            raise CsvParseError(f"{source}: line {lineno}: {exc}") from None
        cells.append(CellSummary(**values))
    return RegretSummary(cells)


def parse_csv(path: str | Path) -> RegretSummary:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read CSV {path}: {exc.strerror}") from None
    return parse_csv_text(text, str(path))


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 160, 30, 50


def _num(v: float) -> str:
    return f"{v:.3f}"


def _axis_map(lo: float, hi: float, a: float, b: float, log: bool):
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5

    def f(v: float) -> float:
        t = math.log10(v) if log else v
        return a + (t - lo) / (hi - lo) * (b - a)

    return f


def render_svg(
    summary: RegretSummary,
    x_axis: Literal["n", "d"] = "n",
    log_log: bool = False,
    metric: Literal["cum_regret", "simple_regret"] = "cum_regret",
) -> str:
    """SVG text with one polyline per policy and SE error bars.

    On log axes, non-positive values are dropped and error bars are clipped
    at the smallest plotted value.
    """
    mean_key, se_key = f"mean_{metric}", f"se_{metric}"
    series: dict[str, list[tuple[float, float, float]]] = {}
    for c in summary.cells:
        x, y = float(getattr(c, x_axis)), float(getattr(c, mean_key))
        se = getattr(c, se_key) or 0.0
        if log_log and (x <= 0 or y <= 0):
            continue
        series.setdefault(c.policy, []).append((x, y, se))
    for pts in series.values():
        pts.sort()

    xs = [p[0] for pts in series.values() for p in pts]
    lows = [p[1] - p[2] for pts in series.values() for p in pts]
    highs = [p[1] + p[2] for pts in series.values() for p in pts]
    if log_log:
        lows = [v for v in lows if v > 0] + [p[1] for pts in series.values() for p in pts]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (1.0, 10.0)
    y_lo, y_hi = (min(lows), max(highs)) if xs else (1.0, 10.0)
    fx = _axis_map(x_lo, x_hi, _LEFT, _W - _RIGHT, log_log)
    fy = _axis_map(y_lo, y_hi, _H - _BOTTOM, _TOP, log_log)
    y_floor = y_lo

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        '<g id="axes" stroke="black" stroke-width="1">',
        f'<line x1="{_LEFT}" y1="{_H - _BOTTOM}" x2="{_W - _RIGHT}" y2="{_H - _BOTTOM}"/>',
        f'<line x1="{_LEFT}" y1="{_H - _BOTTOM}" x2="{_LEFT}" y2="{_TOP}"/>',
        "</g>",
        f'<text x="{(_LEFT + _W - _RIGHT) // 2}" y="{_H - 12}" text-anchor="middle" font-size="13">'
        f'{escape(x_axis)}{" (log)" if log_log else ""}</text>',
        f'<text x="16" y="{(_TOP + _H - _BOTTOM) // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(_TOP + _H - _BOTTOM) // 2})">'
        f'{escape(mean_key)}{" (log)" if log_log else ""}</text>',
    ]
    if xs:
        for label, val, anchor in ((x_lo, x_lo, "start"), (x_hi, x_hi, "end")):
            out.append(
                f'<text class="tick" x="{_num(fx(val))}" y="{_H - _BOTTOM + 16}" text-anchor="{anchor}" '
                f'font-size="11">{label:.6g}</text>'
            )
        for val in (y_lo, y_hi):
            out.append(
                f'<text class="tick" x="{_LEFT - 6}" y="{_num(fy(val))}" text-anchor="end" '
                f'font-size="11">{val:.6g}</text>'
            )
    legend = ['<g id="legend" font-size="12">']
    for i, (policy, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{_num(fx(x))},{_num(fy(y))}" for x, y, _ in pts)
        out.append(
            f'<polyline class="series" data-policy="{escape(policy)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" points="{coords}"/>'
        )
        for x, y, se in pts:
            if se <= 0:
                continue
            lo = max(y - se, y_floor) if log_log else y - se
            px = _num(fx(x))
            out.append(
                f'<line class="errorbar" x1="{px}" y1="{_num(fy(lo))}" x2="{px}" y2="{_num(fy(y + se))}" '
                f'stroke="{color}" stroke-width="1"/>'
            )
        ly = _TOP + 18 * i + 10
        legend.append(
            f'<line x1="{_W - _RIGHT + 12}" y1="{ly}" x2="{_W - _RIGHT + 32}" y2="{ly}" stroke="{color}" '
            f'stroke-width="2"/><text class="legend-entry" x="{_W - _RIGHT + 38}" y="{ly + 4}">{escape(policy)}</text>'
        )
    legend.append("</g>")
    out.extend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(
    csv_path: str | Path,
    x_axis: Literal["n", "d"],
    out_path: str | Path,
    log_log: bool = False,
    metric: Literal["cum_regret", "simple_regret"] = "cum_regret",
) -> None:
    if x_axis not in ("n", "d"):
        raise ValueError(f"x_axis must be 'n' or 'd', got {x_axis!r}")
    svg = render_svg(parse_csv(csv_path), x_axis, log_log, metric)
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(svg)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write plot to {out_path}: {exc.strerror}") from None
