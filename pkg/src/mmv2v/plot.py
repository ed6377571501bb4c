"""Versioned CSV tables and a small deterministic SVG renderer.

Every table written by the command line starts with ``#`` metadata lines::

    # schema: coverage-sweep/1
    # scenario: {...resolved scenario as JSON...}

followed by an ordinary header row and data rows. ``render_svg`` turns one of
these tables into a standalone SVG document; identical input gives identical
bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from mmv2v.errors import SchemaError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PlotLayout:
    """How a schema maps onto axes: x column, optional series column, y columns."""

    x: str
    y: tuple[str, ...]
    series: str | None = None
    step: bool = False
    x_label: str = ""
    y_label: str = ""


LAYOUTS: dict[str, PlotLayout] = {
    "blockage-curve": PlotLayout(
        x="distance_m", y=("delta_k1_db", "delta_k2_db"),
        x_label="distance (m)", y_label="extra path loss (dB)",
    ),
    "coverage-sweep": PlotLayout(
        x="value", y=("analytic_receivers", "sim_mean"), series="density_row",
        y_label="receivers with SINR above threshold",
    ),
    "sinr-cdf": PlotLayout(
        x="sinr_db", y=("cdf",), series="beamwidth_deg", step=True,
        x_label="SINR (dB)", y_label="empirical CDF",
    ),
    "cs-sweep": PlotLayout(
        x="carrier_sense_range_m", y=("analytic_aggregate_per_km", "sim_aggregate_per_km"),
        x_label="carrier sensing range (m)", y_label="covered receivers per km",
    ),
    "simulate": PlotLayout(x="trial", y=("covered",), x_label="trial", y_label="covered receivers"),
}


@dataclass
class Table:
    schema: str
    version: int
    meta: dict[str, str] = field(default_factory=dict)
    header: list[str] = field(default_factory=list)
    rows: list[list[str]] = field(default_factory=list)

    def column(self, name: str) -> list[str]:
        i = self.header.index(name)
        return [r[i] for r in self.rows]


def fmt(value) -> str:
    """Stable text form for CSV cells."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool,)):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".10g")


def write_table(path, schema: str, meta: dict, header: list[str], rows: list[list]) -> str:
    """Serialise a table; ``path`` of None or "-" returns the text only."""
    buf = io.StringIO()
    buf.write(f"# schema: {schema}/{SCHEMA_VERSION}\n")
    for key, value in meta.items():
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True, separators=(",", ":"))
        buf.write(f"# {key}: {text}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path not in (None, "-"):
        with open(os.fspath(path), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def parse_table(text: str) -> Table:
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if "schema" not in meta:
        raise SchemaError("missing '# schema:' line")
    name, _, version = meta["schema"].partition("/")
    if name not in LAYOUTS:
        raise SchemaError(f"unknown schema '{name}'")
    if not version.isdigit() or int(version) != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version '{version}' for '{name}' (expected {SCHEMA_VERSION})")
    reader = list(csv.reader(body))
    if not reader:
        raise SchemaError("no header row")
    header, rows = reader[0], reader[1:]
    if not rows:
        raise SchemaError("table has no data rows")
    if any(len(r) != len(header) for r in rows):
        raise SchemaError("row length does not match header")
    layout = LAYOUTS[name]
    if layout.x not in header:
        raise SchemaError(f"schema '{name}' needs column '{layout.x}'")
    if layout.series is not None and layout.series not in header:
        raise SchemaError(f"schema '{name}' needs column '{layout.series}'")
    if not any(y in header for y in layout.y):
        raise SchemaError(f"schema '{name}' needs one of {', '.join(layout.y)}")
    return Table(name, int(version), meta, header, rows)


def read_table(path) -> Table:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_table(fh.read())


# -- rendering --------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f")
DASHES = ("", "6,4", "2,3")
W, H = 720, 460
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 55


def _num(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return math.nan


def _nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    # ticks enclose the data range so every point lands inside the frame
    t = math.floor(lo / step + 1e-9) * step
    ticks = [round(t, 10)]
    while ticks[-1] < hi - 1e-9 * step:
        t += step
        ticks.append(round(t, 10))
    return ticks


def _series(table: Table, layout: PlotLayout) -> list[tuple[str, list[tuple[float, float]]]]:
    raw_x = table.column(layout.x)
    xs = [_num(v) for v in raw_x]
    if not any(math.isfinite(x) for x in xs):
        # categorical axis (e.g. density rows): plot at first-seen positions
        cats = list(dict.fromkeys(raw_x))
        xs = [float(cats.index(v)) for v in raw_x]
    groups = table.column(layout.series) if layout.series else [""] * len(xs)
    order: list[str] = []
    for g in groups:
        if g not in order:
            order.append(g)
    out = []
    for ycol in (y for y in layout.y if y in table.header):
        ys = [_num(v) for v in table.column(ycol)]
        for g in order:
            pts = [(x, y) for x, y, gg in zip(xs, ys, groups) if gg == g and math.isfinite(x) and math.isfinite(y)]
            if pts:
                label = " ".join(p for p in (str(g), ycol) if p)
                out.append((label, pts))
    return out


def render_svg(table: Table) -> str:
    layout = LAYOUTS[table.schema]
    series = _series(table, layout)
    if not series:
        raise SchemaError("no finite values to plot")
    allx = [x for _, pts in series for x, _ in pts]
    ally = [y for _, pts in series for _, y in pts]
    xt = _nice_ticks(min(allx), max(allx))
    yt = _nice_ticks(min(ally), max(ally))
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / ((x1 - x0) or 1.0) * pw

    def py(y):
        return TOP + ph - (y - y0) / ((y1 - y0) or 1.0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in xt:
        x = px(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{fmt(t)}</text>')
    for t in yt:
        y = py(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{fmt(t)}</text>')
    xl = escape(layout.x_label or table.meta.get("parameter", layout.x))
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{H - 15}" text-anchor="middle">{xl}</text>')
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">{escape(layout.y_label)}</text>'
    )
    ycols = [y for y in layout.y if y in table.header]
    for i, (label, pts) in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        dash = DASHES[next(j for j, c in enumerate(ycols) if label.endswith(c)) % len(DASHES)]
        if layout.step:
            coords = [(px(pts[0][0]), py(pts[0][1]))]
            for (_, ya), (xb, yb) in zip(pts, pts[1:]):
                coords += [(px(xb), py(ya)), (px(xb), py(yb))]
        else:
            coords = [(px(x), py(y)) for x, y in pts]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="1.5"{extra}/>')
        ly = TOP + 10 + 16 * i
        lx = LEFT + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{colour}" stroke-width="1.5"{extra}/>')
        out.append(f'<text x="{lx + 25}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
