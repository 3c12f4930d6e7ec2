"""CSV reports and SVG charts for fitted growth models and correlations."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from .errors import EmptyInputError
from .growth import FitResult, ModelKind
from .stats import CorrelationResult, format_coefficient, format_p_value

__all__ = [
    "REGRESSION_SUMMARY_FILENAME",
    "FITS_DETAILED_FILENAME",
    "CORRELATIONS_FILENAME",
    "SUMMARY_HEADER",
    "DETAILED_HEADER",
    "CORRELATIONS_HEADER",
    "write_regression_summary",
    "write_fits_detailed",
    "write_correlations_summary",
    "read_regression_summary",
    "read_fits_detailed",
    "read_correlations_summary",
    "ChartSpec",
    "chart_spec_from_fits",
    "chart_filename",
    "render_chart",
]

REGRESSION_SUMMARY_FILENAME = "regression_summary.csv"
FITS_DETAILED_FILENAME = "regression_fits_detailed.csv"
CORRELATIONS_FILENAME = "correlations_summary.csv"

SUMMARY_HEADER = ("Series", "Model", "a", "b", "c", "K", "x0", "R2", "DoublingTimeYears", "Converged")
DETAILED_HEADER = ("Series", "Model", "Year", "Observed", "Fitted", "IsForecast")
CORRELATIONS_HEADER = (
    "Pair", "PearsonR", "PearsonP", "SpearmanRho", "SpearmanP", "KendallTau", "KendallP", "N",
)

_PARAM_FIELDS = {
    ModelKind.EXPONENTIAL: ("a", "b"),
    ModelKind.QUADRATIC: ("a", "b", "c"),
    ModelKind.LOGISTIC: ("b", "K", "x0"),
}


def _num(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.6g}"


def _count(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else _num(value)


def _bool(flag: bool) -> str:
    return "true" if flag else "false"


@contextmanager
def _atomic_writer(path):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- CSV writers --------------------------------------------------------------

def write_regression_summary(fits: Sequence[FitResult], path) -> None:
    if not fits:
        raise EmptyInputError("no fits to summarize")
    with _atomic_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for fit in fits:
            used = _PARAM_FIELDS[fit.kind]
            values = fit.params.as_dict() if fit.params is not None else {}
            writer.writerow(
                [fit.series, fit.kind.value]
                + [_num(values.get(name)) if name in used else "" for name in ("a", "b", "c", "K", "x0")]
                + [_num(fit.r_squared), _num(fit.doubling_time_years), _bool(fit.converged)]
            )


def write_fits_detailed(fits: Sequence[FitResult], path) -> None:
    """Long format: one row per (series, model, year), forecast rows last."""
    if not fits:
        raise EmptyInputError("no fits to write")
    with _atomic_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETAILED_HEADER)
        for fit in fits:
            fitted = dict(fit.fitted)
            for year, obs in fit.observed:
                writer.writerow([fit.series, fit.kind.value, year, _count(obs), _num(fitted.get(year)), "false"])
            for year, value in fit.forecast:
                writer.writerow([fit.series, fit.kind.value, year, "", _num(value), "true"])


def write_correlations_summary(results: Sequence[CorrelationResult], path) -> None:
    if not results:
        raise EmptyInputError("no correlation results to write")
    with _atomic_writer(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CORRELATIONS_HEADER)
        for res in results:
            writer.writerow([
                res.pair.label,
                format_coefficient(res.pearson_r), format_p_value(res.pearson_p),
                format_coefficient(res.spearman_rho), format_p_value(res.spearman_p),
                format_coefficient(res.kendall_tau), format_p_value(res.kendall_p),
                res.n,
            ])


# -- CSV readers --------------------------------------------------------------

def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != header:
            from .errors import SchemaError

            raise SchemaError(f"{path}: unexpected header {reader.fieldnames!r}")
        return list(reader)


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def read_regression_summary(path) -> list:
    rows = []
    for row in _read_rows(path, SUMMARY_HEADER):
        parsed = {"Series": row["Series"], "Model": row["Model"], "Converged": row["Converged"] == "true"}
        for key in ("a", "b", "c", "K", "x0", "R2", "DoublingTimeYears"):
            parsed[key] = _opt_float(row[key])
        rows.append(parsed)
    return rows


def read_fits_detailed(path) -> list:
    return [
        {
            "Series": row["Series"],
            "Model": row["Model"],
            "Year": int(row["Year"]),
            "Observed": _opt_float(row["Observed"]),
            "Fitted": _opt_float(row["Fitted"]),
            "IsForecast": row["IsForecast"] == "true",
        }
        for row in _read_rows(path, DETAILED_HEADER)
    ]


def _p_cell(text: str) -> float:
    # "<0.001" is kept as the threshold value
    return 0.001 if text.startswith("<") else float(text)


def read_correlations_summary(path) -> list:
    rows = []
    for row in _read_rows(path, CORRELATIONS_HEADER):
        rows.append({
            "Pair": row["Pair"],
            "PearsonR": float(row["PearsonR"]),
            "PearsonP": _p_cell(row["PearsonP"]),
            "PearsonPBelowThreshold": row["PearsonP"].startswith("<"),
            "SpearmanRho": float(row["SpearmanRho"]),
            "SpearmanP": _p_cell(row["SpearmanP"]),
            "KendallTau": float(row["KendallTau"]),
            "KendallP": _p_cell(row["KendallP"]),
            "N": int(row["N"]),
        })
    return rows


# -- charts -------------------------------------------------------------------

_STYLE = {
    ModelKind.EXPONENTIAL: ("#d62728", ""),
    ModelKind.QUADRATIC: ("#2ca02c", "8 4"),
    ModelKind.LOGISTIC: ("#1f77b4", "9 3 2 3"),
}


@dataclass
class ChartSpec:
    """Everything needed to draw one series chart.

    ``curves`` maps a model kind to its in-sample ``(year, value)`` points,
    ``forecasts`` to the projected points after the last observed year.
    """

    label: str
    observed: list
    output_path: Path
    curves: dict = field(default_factory=dict)
    forecasts: dict = field(default_factory=dict)
    bars: list = field(default_factory=list)
    bars_label: str = "COVID-19 retractions"
    x_label: str = "Year"
    y_label: Optional[str] = None
    title: Optional[str] = None


def chart_filename(label: str) -> str:
    return f"{label.lower().replace('*', '_adj').replace(' ', '_')}_chart.svg"


def chart_spec_from_fits(label: str, fits: Sequence[FitResult], output_dir, bars=None) -> ChartSpec:
    observed = list(fits[0].observed) if fits else []
    curves, forecasts = {}, {}
    for fit in fits:
        if fit.params is None:
            continue
        curves[fit.kind] = list(fit.fitted)
        if fit.forecast and fit.fitted:
            # continuation starts at the last observed year
            forecasts[fit.kind] = [fit.fitted[-1]] + list(fit.forecast)
    return ChartSpec(
        label=label,
        observed=observed,
        output_path=Path(output_dir) / chart_filename(label),
        curves=curves,
        forecasts=forecasts,
        bars=[(y, v) for y, v in (bars or []) if v > 0],
    )


def _nice_step(span: float, target: int = 5) -> float:
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 2.5, 5, 10):
        if raw <= mult * mag:
            return mult * mag
    return 10 * mag


def _unit(maximum: float):
    if maximum >= 1e6:
        return 1e6, "millions"
    if maximum >= 1e3:
        return 1e3, "thousands"
    return 1.0, ""


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_chart(spec: ChartSpec) -> None:
    """Write a standalone, byte-deterministic SVG for ``spec``.

    Observed counts are circles, each model's in-sample curve is one
    ``<path>``, projections are dashed ``<polyline>`` continuations over a
    shaded forecast band, and optional bars use a secondary right axis.
    """
    if not spec.observed:
        raise EmptyInputError("chart needs at least one observed point")
    width, height = 900, 540
    left, right, top, bottom = 80, 90 if spec.bars else 40, 50, 70
    pw, ph = width - left - right, height - top - bottom

    years = [y for y, _ in spec.observed]
    all_years = years + [y for pts in spec.forecasts.values() for y, _ in pts]
    x_lo, x_hi = min(all_years), max(all_years)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    values = [v for _, v in spec.observed]
    values += [v for pts in spec.curves.values() for _, v in pts]
    values += [v for pts in spec.forecasts.values() for _, v in pts]
    finite = [v for v in values if math.isfinite(v)]
    y_max = max(max(finite), 1.0)
    step = _nice_step(y_max)
    y_top = step * math.ceil(y_max / step)
    y_bottom = min(0.0, min(finite))
    if y_bottom < 0:
        y_bottom = -step * math.ceil(-y_bottom / step)
    scale, unit = _unit(y_top)

    def sx(year):
        return left + (year - x_lo) / (x_hi - x_lo) * pw

    def sy(value):
        value = min(max(value, y_bottom), y_top)
        return top + (y_top - value) / (y_top - y_bottom) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif" font-size="12">',
        f'<rect class="background" x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    title = spec.title or f"Annual CrossRef {spec.label}"
    out.append(f'<text class="title" x="{width / 2:.2f}" y="28" text-anchor="middle" font-size="16">{escape(title)}</text>')

    last_obs = years[-1]
    if x_hi > last_obs:
        out.append(
            f'<rect class="forecast-region" x="{_fmt(sx(last_obs))}" y="{top}" '
            f'width="{_fmt(sx(x_hi) - sx(last_obs))}" height="{ph}" fill="#f2f2f2"/>'
        )
        out.append(
            f'<line class="forecast-divider" x1="{_fmt(sx(last_obs))}" y1="{top}" x2="{_fmt(sx(last_obs))}" '
            f'y2="{top + ph}" stroke="#999999" stroke-dasharray="3 3"/>'
        )

    # axes and ticks
    out.append(f'<g class="axes" stroke="#333333" fill="none">')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/>')
    out.append("</g>")
    out.append('<g class="ticks" fill="#333333">')
    year_step = max(1, int(_nice_step(x_hi - x_lo, 8)))
    first_tick = x_lo + (-x_lo) % year_step
    for yr in range(first_tick, x_hi + 1, year_step):
        x = _fmt(sx(yr))
        out.append(f'<line x1="{x}" y1="{top + ph}" x2="{x}" y2="{top + ph + 5}" stroke="#333333"/>')
        out.append(f'<text x="{x}" y="{top + ph + 20}" text-anchor="middle">{yr}</text>')
    v = y_bottom
    while v <= y_top + step / 2:
        y = _fmt(sy(v))
        out.append(f'<line x1="{left - 5}" y1="{y}" x2="{left}" y2="{y}" stroke="#333333"/>')
        out.append(f'<line class="grid" x1="{left}" y1="{y}" x2="{left + pw}" y2="{y}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">{v / scale:.1f}</text>')
        v += step
    out.append("</g>")
    y_label = spec.y_label or (f"{spec.label} ({unit})" if unit else spec.label)
    out.append(f'<text class="x-label" x="{left + pw / 2:.2f}" y="{height - 25}" text-anchor="middle">{escape(spec.x_label)}</text>')
    out.append(
        f'<text class="y-label" x="20" y="{top + ph / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + ph / 2:.2f})">{escape(y_label)}</text>'
    )

    if spec.bars:
        b_max = max(v for _, v in spec.bars)
        b_step = _nice_step(max(b_max, 1.0))
        b_top = b_step * math.ceil(b_max / b_step)
        bar_w = 0.6 * pw / (x_hi - x_lo + 1)
        out.append('<g class="bars" fill="#ff7f0e" fill-opacity="0.55">')
        for yr, val in spec.bars:
            h = val / b_top * ph
            out.append(
                f'<rect class="covid-bar" x="{_fmt(sx(yr) - bar_w / 2)}" y="{_fmt(top + ph - h)}" '
                f'width="{_fmt(bar_w)}" height="{_fmt(h)}"/>'
            )
        out.append("</g>")
        out.append(f'<g class="secondary-axis" fill="#ff7f0e">')
        out.append(f'<line x1="{left + pw}" y1="{top}" x2="{left + pw}" y2="{top + ph}" stroke="#ff7f0e"/>')
        v = 0.0
        while v <= b_top + b_step / 2:
            y = _fmt(top + ph - v / b_top * ph)
            out.append(f'<text x="{left + pw + 8}" y="{y}" dominant-baseline="middle">{v:.1f}</text>')
            v += b_step
        out.append("</g>")
        mid = top + ph / 2
        out.append(
            f'<text class="y2-label" x="{width - 20}" y="{mid:.2f}" text-anchor="middle" '
            f'transform="rotate(90 {width - 20} {mid:.2f})">{escape(spec.bars_label)}</text>'
        )

    for kind in ModelKind:
        color, dash = _STYLE[kind]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        pts = spec.curves.get(kind)
        if pts:
            d = " ".join(f"{'M' if i == 0 else 'L'}{_fmt(sx(y))},{_fmt(sy(v))}" for i, (y, v) in enumerate(pts))
            out.append(
                f'<path class="fit fit-{kind.value.lower()}" d="{d}" fill="none" stroke="{color}" '
                f'stroke-width="2"{dash_attr}/>'
            )
        fpts = spec.forecasts.get(kind)
        if fpts:
            coords = " ".join(f"{_fmt(sx(y))},{_fmt(sy(v))}" for y, v in fpts)
            out.append(
                f'<polyline class="forecast forecast-{kind.value.lower()}" points="{coords}" fill="none" '
                f'stroke="{color}" stroke-width="1.5" stroke-opacity="0.7" stroke-dasharray="{dash or "6 4"}"/>'
            )

    out.append('<g class="observed" fill="#ffffff" stroke="#000000" stroke-width="1.2">')
    for yr, val in spec.observed:
        out.append(f'<circle cx="{_fmt(sx(yr))}" cy="{_fmt(sy(val))}" r="4"/>')
    out.append("</g>")

    # legend
    entries = [("marker", "#000000", "", "Observed")]
    entries += [("line", _STYLE[k][0], _STYLE[k][1], k.value) for k in ModelKind if k in spec.curves]
    if spec.bars:
        entries.append(("bar", "#ff7f0e", "", spec.bars_label))
    if x_hi > last_obs:
        entries.append(("band", "#f2f2f2", "", "Projection"))
    lx, ly = left + 15, top + 15
    out.append('<g class="legend">')
    for i, (shape, color, dash, text) in enumerate(entries):
        y = ly + i * 18
        if shape == "marker":
            out.append(f'<rect x="{lx + 8}" y="{y - 4}" width="8" height="8" rx="4" fill="#ffffff" stroke="{color}"/>')
        elif shape == "line":
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{color}" stroke-width="2"{dash_attr}/>')
        else:
            out.append(f'<rect x="{lx + 4}" y="{y - 5}" width="16" height="10" fill="{color}" stroke="#999999"/>')
        out.append(f'<text x="{lx + 32}" y="{y}" dominant-baseline="middle">{escape(text)}</text>')
    out.append("</g>")
    out.append("</svg>")

    path = Path(spec.output_path)
    with _atomic_writer(path) as fh:
        fh.write("\n".join(out) + "\n")
