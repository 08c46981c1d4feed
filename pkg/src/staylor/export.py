"""Plot-data artifacts: dependence rows, summary rows, importance tables, SVG scatters.

SVG styling is fixed: 640x400 canvas, points of radius 2.5, colors
interpolated linearly in RGB from ``LOW_COLOR`` (low feature value) to
``HIGH_COLOR`` (high value), ``MISSING_COLOR`` for missing values. Points with
a missing x are drawn in a separate strip left of the plotting area.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .attribution import center_columns
from .coredata import FeatureTable, format_real
from .errors import DomainError, SchemaError
from .importance import ImportanceEntry
from .interaction import CohortInteractions

VARIANTS = ("shap", "main", "interaction", "main_plus_interaction")
DEFAULT_SCALE = {"shap": "full", "main": "full", "interaction": "full", "main_plus_interaction": "half"}
SCALES = {"full": 1.0, "half": 0.5}
FORMATS = ("csv", "json", "svg")
IMPORTANCE_HEADER = "rank,feature1,feature2,importance"

LOW_COLOR = (0x00, 0x8B, 0xFB)
HIGH_COLOR = (0xFF, 0x00, 0x52)
MISSING_COLOR = (0x00, 0x00, 0x00)


@dataclass(frozen=True)
class DependenceRow:
    id: int
    x: float | None
    y: float
    color: float | None


@dataclass(frozen=True)
class DependenceData:
    feature: str
    partner: str | None
    variant: str
    scale: str
    color_feature: str
    rows: tuple[DependenceRow, ...]

    @property
    def y_label(self) -> str:
        f, p = self.feature, self.partner
        factor = "" if self.scale == "full" else f"{SCALES[self.scale]!r}*"
        if self.variant == "shap":
            return f"shap[{f}]"
        if self.variant == "main":
            return f"main[{f}]"
        if self.variant == "interaction":
            return f"{factor}interaction[{f}|{p}]"
        return f"main[{f}]+{factor}interaction[{f}|{p}]"


@dataclass(frozen=True)
class SummaryRow:
    rank: int
    feature: str
    id: int
    shap: float
    value_norm: float | None


def dependence_data(cohort, table: FeatureTable, feature: str, variant: str,
                    partner: str | None = None, scale: str | None = None) -> DependenceData:
    """Build dependence-plot rows from cohort interaction results.

    ``cohort`` is a :class:`~staylor.interaction.CohortInteractions`; every
    plotted quantity is cohort-centered. Without a partner, points are
    colored by the feature's own value.
    """
    if variant not in VARIANTS:
        raise DomainError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    scale = scale or DEFAULT_SCALE[variant]
    if scale not in SCALES:
        raise DomainError(f"unknown scale {scale!r}")
    names = list(cohort.feature_names)
    if list(table.names) != names:
        raise DomainError("data columns do not match the explained features")
    i = table.index(feature)
    needs_partner = variant in ("interaction", "main_plus_interaction")
    if needs_partner and partner is None:
        raise DomainError(f"variant {variant!r} needs a partner feature")
    j = table.index(partner) if partner is not None else None
    if j == i:
        raise DomainError("partner must differ from the plotted feature")
    c = SCALES[scale]
    if variant == "shap":
        y = center_columns(cohort.shapley)[0][:, i]
    elif variant == "main":
        y = cohort.centered[:, i, i]
    elif variant == "interaction":
        y = c * cohort.centered[:, i, j]
    else:
        y = cohort.centered[:, i, i] + c * cohort.centered[:, i, j]
    color_idx = j if j is not None else i
    rows = tuple(
        DependenceRow(r, table.cell(r, i), float(y[r]), table.cell(r, color_idx))
        for r in range(table.n_rows)
    )
    return DependenceData(feature, partner, variant, scale, names[color_idx], rows)


def summary_rows(cohort, ranking: Sequence[ImportanceEntry], table: FeatureTable) -> list[SummaryRow]:
    out = []
    for entry in ranking:
        i = entry.index1
        col = table.values[:, i]
        present = ~table.missing[:, i]
        lo = float(col[present].min()) if present.any() else 0.0
        hi = float(col[present].max()) if present.any() else 0.0
        for r in range(table.n_rows):
            if not present[r]:
                norm = None
            elif hi > lo:
                norm = (float(col[r]) - lo) / (hi - lo)
            else:
                norm = 0.5
            out.append(SummaryRow(entry.rank, entry.feature1, r, float(cohort.centered[r, i]), norm))
    return out


# --- text formats ----------------------------------------------------------------


def dependence_csv(data: DependenceData) -> str:
    buf = io.StringIO()
    buf.write(f"id,{data.feature},{data.y_label},color[{data.color_feature}]\n")
    for row in data.rows:
        buf.write(f"{row.id},{format_real(row.x)},{format_real(row.y)},{format_real(row.color)}\n")
    return buf.getvalue()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, ensure_ascii=False) + "\n"


def dependence_json(data: DependenceData) -> str:
    return _dump_json({
        "feature": data.feature,
        "partner": data.partner,
        "variant": data.variant,
        "scale": data.scale,
        "y_label": data.y_label,
        "color_feature": data.color_feature,
        "rows": [{"id": r.id, "x": r.x, "y": r.y, "color": r.color} for r in data.rows],
    })


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    buf.write("rank,feature,id,shap,value_norm\n")
    for r in rows:
        buf.write(f"{r.rank},{r.feature},{r.id},{format_real(r.shap)},{format_real(r.value_norm)}\n")
    return buf.getvalue()


def summary_json(rows: Sequence[SummaryRow]) -> str:
    return _dump_json([
        {"rank": r.rank, "feature": r.feature, "id": r.id, "shap": r.shap, "value_norm": r.value_norm}
        for r in rows
    ])


def importance_csv(entries: Sequence[ImportanceEntry]) -> str:
    lines = [IMPORTANCE_HEADER]
    lines += [f"{e.rank},{e.feature1},{e.feature2},{format_real(e.importance)}" for e in entries]
    return "\n".join(lines) + "\n"


def importance_json(entries: Sequence[ImportanceEntry]) -> str:
    return _dump_json([
        {"rank": e.rank, "feature1": e.feature1, "feature2": e.feature2, "importance": e.importance}
        for e in entries
    ])


# --- SVG --------------------------------------------------------------------------

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 90, 20, 30, 50
MISSING_STRIP = 30


def _hex(rgb) -> str:
    return "#%02X%02X%02X" % rgb


def color_for(norm: float | None) -> str:
    if norm is None:
        return _hex(MISSING_COLOR)
    t = min(1.0, max(0.0, norm))
    rgb = tuple(int(round(lo + (hi - lo) * t)) for lo, hi in zip(LOW_COLOR, HIGH_COLOR))
    return _hex(rgb)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def _range(vals: Sequence[float]) -> tuple[float, float]:
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _normalizer(vals: Sequence[float | None]):
    present = [v for v in vals if v is not None]
    if not present:
        return lambda v: None
    lo, hi = min(present), max(present)
    return lambda v: None if v is None else ((v - lo) / (hi - lo) if hi > lo else 0.5)


def scatter_svg(xs: Sequence[float | None], ys: Sequence[float], colors: Sequence[float | None],
                x_label: str, y_label: str, title: str = "") -> str:
    plot_left = LEFT + MISSING_STRIP
    plot_w = WIDTH - plot_left - RIGHT
    plot_h = HEIGHT - TOP - BOTTOM
    x_lo, x_hi = _range([x for x in xs if x is not None])
    y_lo, y_hi = _range(list(ys))
    norm = _normalizer(colors)

    def px(x):
        return plot_left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#FFFFFF"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    bottom = TOP + plot_h
    out.append(f'<line x1="{plot_left}" y1="{bottom}" x2="{WIDTH - RIGHT}" y2="{bottom}" stroke="#333333"/>')
    out.append(f'<line x1="{plot_left}" y1="{TOP}" x2="{plot_left}" y2="{bottom}" stroke="#333333"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<text x="{_fmt(px(t))}" y="{bottom + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<text x="{plot_left - 6}" y="{_fmt(py(t) + 3)}" text-anchor="end" font-size="10">{t:.3g}</text>')
    out.append(f'<text x="{_fmt(plot_left + plot_w / 2)}" y="{HEIGHT - 12}" text-anchor="middle" '
               f'font-size="12">{escape(x_label)}</text>')
    out.append(f'<text x="16" y="{_fmt(TOP + plot_h / 2)}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {_fmt(TOP + plot_h / 2)})">{escape(y_label)}</text>')
    if any(x is None for x in xs):
        out.append(f'<text x="{LEFT + MISSING_STRIP / 2:.2f}" y="{bottom + 16}" text-anchor="middle" '
                   f'font-size="10">NA</text>')
    for x, y, c in zip(xs, ys, colors):
        cx = LEFT + MISSING_STRIP / 2 if x is None else px(x)
        fill = _hex(MISSING_COLOR) if x is None else color_for(norm(c))
        out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(py(y))}" r="2.5" fill="{fill}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def dependence_svg(data: DependenceData) -> str:
    xs = [r.x for r in data.rows]
    ys = [r.y for r in data.rows]
    cs = [r.color for r in data.rows]
    return scatter_svg(xs, ys, cs, data.feature, data.y_label, title=f"colored by {data.color_feature}")


def summary_svg(rows: Sequence[SummaryRow]) -> str:
    features: list[str] = []
    for r in rows:
        if r.feature not in features:
            features.append(r.feature)
    row_h = 36
    height = TOP + BOTTOM + row_h * max(1, len(features))
    plot_left, plot_w = 120, WIDTH - 120 - RIGHT
    x_lo, x_hi = _range([r.shap for r in rows])

    def px(x):
        return plot_left + (x - x_lo) / (x_hi - x_lo) * plot_w

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#FFFFFF"/>',
    ]
    bottom = height - BOTTOM
    out.append(f'<line x1="{plot_left}" y1="{bottom}" x2="{WIDTH - RIGHT}" y2="{bottom}" stroke="#333333"/>')
    if x_lo < 0 < x_hi:
        out.append(f'<line x1="{_fmt(px(0.0))}" y1="{TOP}" x2="{_fmt(px(0.0))}" y2="{bottom}" stroke="#999999"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<text x="{_fmt(px(t))}" y="{bottom + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>')
    out.append(f'<text x="{_fmt(plot_left + plot_w / 2)}" y="{height - 12}" text-anchor="middle" '
               f'font-size="12">SHAP value</text>')
    for k, name in enumerate(features):
        cy = TOP + row_h * k + row_h / 2
        out.append(f'<text x="{plot_left - 8}" y="{_fmt(cy + 4)}" text-anchor="end" font-size="11">{escape(name)}</text>')
    for r in rows:
        k = features.index(r.feature)
        # golden-ratio jitter keyed by instance id: deterministic, no RNG state
        jitter = ((r.id * 0.6180339887498949) % 1.0 - 0.5) * row_h * 0.6
        cy = TOP + row_h * k + row_h / 2 + jitter
        out.append(f'<circle cx="{_fmt(px(r.shap))}" cy="{_fmt(cy)}" r="2" fill="{color_for(r.value_norm)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- emission ----------------------------------------------------------------------


def _write(text: str, path) -> str:
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def emit_dependence(data: DependenceData, fmt: str = "csv", path=None) -> str:
    render = {"csv": dependence_csv, "json": dependence_json, "svg": dependence_svg}
    if fmt not in render:
        raise DomainError(f"unknown format {fmt!r}")
    return _write(render[fmt](data), path)


def emit_summary(rows: Sequence[SummaryRow], fmt: str = "csv", path=None) -> str:
    render = {"csv": summary_csv, "json": summary_json, "svg": summary_svg}
    if fmt not in render:
        raise DomainError(f"unknown format {fmt!r}")
    return _write(render[fmt](rows), path)


def emit_importance(entries: Sequence[ImportanceEntry], fmt: str = "csv", path=None) -> str:
    render = {"csv": importance_csv, "json": importance_json}
    if fmt not in render:
        raise DomainError(f"importance tables support csv and json, not {fmt!r}")
    return _write(render[fmt](entries), path)


def matrices_json(cohort) -> str:
    """Serialise cohort interaction results (input for ``importance``/``dependence``)."""
    return _dump_json({
        "feature_names": list(cohort.feature_names),
        "method": cohort.method,
        "sampled": cohort.sampled,
        "seed": cohort.seed,
        "predictions": cohort.predictions.tolist(),
        "empty_values": cohort.empty_values.tolist(),
        "shapley": cohort.shapley.tolist(),
        "raw": cohort.raw.tolist(),
        "centered": cohort.centered.tolist(),
    })


def load_matrices(path) -> CohortInteractions:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return CohortInteractions(
            tuple(doc["feature_names"]), doc["method"], np.array(doc["raw"], dtype=float),
            np.array(doc["centered"], dtype=float), np.array(doc["shapley"], dtype=float),
            np.array(doc["predictions"], dtype=float), np.array(doc["empty_values"], dtype=float),
            doc.get("sampled"), doc.get("seed"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: not an interaction-matrix document ({exc})") from None
