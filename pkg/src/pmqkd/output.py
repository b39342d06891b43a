"""CSV tables and hand-written SVG charts."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

from .circuit import ParityTable
from .errors import TooFewPoints
from .rates import ChannelPoint, SweepRow

SWEEP_COLUMNS = (
    "mu", "eta_db", "eta", "gain", "ep_upper", "ep_lower",
    "p_usd", "gap_ratio", "rate_lower", "rate_upper",
)
PARITY_COLUMNS = ("k", "j", "N", "weight", "p_xx_disagree")


def fmt(x: float, precision: int = 12) -> str:
    """Shortest text that round-trips ``x`` rounded to ``precision`` significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    y = float(f"{x:.{precision}g}")
    return repr(y + 0.0)


def sweep_record(row: SweepRow, clamp_rates: bool = False) -> dict[str, float]:
    lo, hi = row.rate_lower, row.rate_upper
    if clamp_rates:
        lo, hi = max(lo, 0.0), max(hi, 0.0)
    return {
        "mu": row.point.mu,
        "eta_db": row.point.eta_db,
        "eta": row.point.eta,
        "gain": row.q_gain,
        "ep_upper": row.ep_upper,
        "ep_lower": row.ep_lower,
        "p_usd": row.p_usd,
        "gap_ratio": row.gap_ratio,
        "rate_lower": lo,
        "rate_upper": hi,
    }


def write_sweep_csv(rows: Sequence[SweepRow], fh: TextIO, precision: int = 12, clamp_rates: bool = False) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        rec = sweep_record(row, clamp_rates)
        w.writerow([fmt(rec[c], precision) for c in SWEEP_COLUMNS])


def read_sweep_csv(fh: TextIO, f: float = 1.0, e_bit: float = 0.0) -> list[SweepRow]:
    out = []
    for rec in csv.DictReader(fh):
        v = {k: float(x) for k, x in rec.items()}
        point = ChannelPoint(v["mu"], v["eta"], v["eta_db"], f, e_bit)
        out.append(SweepRow(
            point, v["gain"], v["ep_upper"], v["ep_lower"], v["p_usd"],
            v["gap_ratio"], v["rate_lower"], v["rate_upper"],
        ))
    return out


def write_parity_csv(table: ParityTable, fh: TextIO, precision: int = 12) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PARITY_COLUMNS)
    for r in table.rows:
        w.writerow([r.k, r.j, r.N, fmt(r.weight, precision), fmt(r.p_xx_disagree, precision)])


def write_table_csv(columns: Sequence[str], records: Sequence[dict], fh: TextIO, precision: int = 12) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([
            fmt(rec[c], precision) if isinstance(rec[c], float) else rec[c] for c in columns
        ])


# --- SVG -----------------------------------------------------------------------


@dataclass(frozen=True)
class Axes:
    x_field: str  # "mu" or "eta_db"
    x_label: str
    title: str
    width: int = 640
    height: int = 420


MU_AXES = Axes("mu", "intensity mu", "Phase error bounds vs intensity")
DB_AXES = Axes("eta_db", "per-arm loss (dB)", "Phase error bounds vs channel loss")

_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 80, 40, 55
_COLORS = {"ep_upper": "#1f77b4", "ep_lower": "#d62728", "gap_ratio": "#2ca02c"}


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks, t = [], start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _num(x: float) -> str:
    return f"{x:.2f}"


def _label(x: float) -> str:
    return f"{x:.6g}"


def emit_svg(rows: Sequence[SweepRow], axes: Axes) -> str:
    """Two bound curves on a linear axis plus the gap ratio on a log right axis."""
    if len(rows) < 2:
        raise TooFewPoints(f"chart needs at least 2 points, got {len(rows)}")
    W, H = axes.width, axes.height
    pw, ph = W - _LEFT - _RIGHT, H - _TOP - _BOTTOM

    xs = [getattr(r.point, axes.x_field) for r in rows]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_hi = max(max(r.ep_upper, r.ep_lower) for r in rows)
    y_ticks = _nice_ticks(0.0, y_hi)
    y_top = max(y_ticks[-1], y_hi)

    gaps = [r.gap_ratio for r in rows if r.gap_ratio > 0]
    g_lo = math.floor(math.log10(min(gaps))) if gaps else -1
    g_hi = math.ceil(math.log10(max(gaps))) if gaps else 0
    if g_hi == g_lo:
        g_hi += 1

    def sx(x):
        return _LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return _TOP + ph - y / y_top * ph

    def sg(g):
        return _TOP + ph - (math.log10(g) - g_lo) / (g_hi - g_lo) * ph

    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">\n'
    )
    out.write(f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n')
    out.write(f'<text x="{W / 2:.2f}" y="20" text-anchor="middle" font-size="13">{axes.title}</text>\n')
    out.write(
        f'<rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>\n'
    )
    for t in _nice_ticks(x_lo, x_hi):
        if x_lo - 1e-12 <= t <= x_hi + 1e-12:
            x = sx(t)
            out.write(f'<line x1="{_num(x)}" y1="{_TOP + ph}" x2="{_num(x)}" y2="{_TOP + ph + 5}" stroke="black"/>\n')
            out.write(f'<text x="{_num(x)}" y="{_TOP + ph + 18}" text-anchor="middle">{_label(t)}</text>\n')
    for t in y_ticks:
        y = sy(t)
        out.write(f'<line x1="{_LEFT - 5}" y1="{_num(y)}" x2="{_LEFT}" y2="{_num(y)}" stroke="black"/>\n')
        out.write(f'<text x="{_LEFT - 8}" y="{_num(y + 4)}" text-anchor="end">{_label(t)}</text>\n')
    for e in range(g_lo, g_hi + 1):
        y = sg(10.0 ** e)
        out.write(f'<line x1="{_LEFT + pw}" y1="{_num(y)}" x2="{_LEFT + pw + 5}" y2="{_num(y)}" stroke="{_COLORS["gap_ratio"]}"/>\n')
        out.write(f'<text x="{_LEFT + pw + 8}" y="{_num(y + 4)}" fill="{_COLORS["gap_ratio"]}">1e{e}</text>\n')
    out.write(f'<text x="{_LEFT + pw / 2:.2f}" y="{H - 12}" text-anchor="middle">{axes.x_label}</text>\n')
    out.write(
        f'<text x="16" y="{_TOP + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_TOP + ph / 2:.2f})">phase error rate</text>\n'
    )
    out.write(
        f'<text x="{W - 14}" y="{_TOP + ph / 2:.2f}" text-anchor="middle" fill="{_COLORS["gap_ratio"]}" '
        f'transform="rotate(90 {W - 14} {_TOP + ph / 2:.2f})">gap ratio (log)</text>\n'
    )

    def polyline(name, pts, dash=""):
        body = " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.write(
            f'<polyline id="{name}" fill="none" stroke="{_COLORS[name]}" stroke-width="1.5"{extra} points="{body}"/>\n'
        )

    polyline("ep_upper", [(sx(x), sy(r.ep_upper)) for x, r in zip(xs, rows)])
    polyline("ep_lower", [(sx(x), sy(r.ep_lower)) for x, r in zip(xs, rows)], "6,3")
    polyline("gap_ratio", [(sx(x), sg(r.gap_ratio)) for x, r in zip(xs, rows) if r.gap_ratio > 0], "2,2")

    legend = (("ep_upper", "upper bound (photon parity)"), ("ep_lower", "lower bound (beam splitting)"),
              ("gap_ratio", "(upper - lower) / upper"))
    for i, (name, text) in enumerate(legend):
        y = _TOP + 14 + 15 * i
        out.write(f'<line x1="{_LEFT + 10}" y1="{y}" x2="{_LEFT + 34}" y2="{y}" stroke="{_COLORS[name]}" stroke-width="1.5"/>\n')
        out.write(f'<text x="{_LEFT + 40}" y="{y + 4}">{text}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()
