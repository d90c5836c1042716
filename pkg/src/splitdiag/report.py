"""Report files: JSON results, CSV tables and self-contained SVG plots.

Every writer is deterministic: the same inputs give byte-identical files.
Floats go through ``repr`` so JSON and CSV round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import SweepRow
from .montecarlo import REJECT, SimulationResult

ACCEPTED = "Accepted"
REJECTED = "Rejected"
ERROR = "Error"


@dataclass(frozen=True)
class Verdict:
    """One row of the conclusion table."""

    label: str
    seed: int | None
    lam: float
    threshold_c: float
    p_value: float
    aicn_train: float | None
    aicn_test: float | None
    conclusion: str
    message: str = ""

    @classmethod
    def from_result(cls, label: str, seed: int | None, result: SimulationResult,
                    aicn_train: float | None = None, aicn_test: float | None = None) -> "Verdict":
        return cls(
            label=label,
            seed=seed,
            lam=result.lambda_obs,
            threshold_c=result.threshold_c,
            p_value=result.p_value,
            aicn_train=aicn_train,
            aicn_test=aicn_test,
            conclusion=REJECTED if result.decision == REJECT else ACCEPTED,
        )

    @classmethod
    def failed(cls, label: str, seed: int | None, message: str) -> "Verdict":
        nan = math.nan
        return cls(label, seed, nan, nan, nan, None, None, ERROR, message)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_json(result: SimulationResult, path: str | Path, include_null: bool = True) -> None:
    text = json.dumps(result.to_dict(include_null=include_null), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path) -> SimulationResult:
    return SimulationResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_null_csv(values: Sequence[float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda"])
        w.writerows([repr(float(v))] for v in values)


def read_null_csv(path: str | Path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[0]) for r in rows[1:]])


SWEEP_HEADER = ["sim_index", "lambda", "aicn_train", "aicn_test", "flag"]


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r.sim_index, repr(r.lam), repr(r.aicn_train), repr(r.aicn_test), r.flag])


def read_sweep_csv(path: str | Path) -> list[SweepRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [SweepRow(int(r["sim_index"]), float(r["lambda"]), float(r["aicn_train"]),
                         float(r["aicn_test"]), r["flag"]) for r in reader]


COMPARISON_HEADER = ["split", "seed", "lambda", "threshold_c", "p_value",
                     "aicn_train", "aicn_test", "conclusion", "message"]


def write_comparison_csv(verdicts: Sequence[Verdict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_HEADER)
        for v in verdicts:
            w.writerow([v.label, _fmt(v.seed), _fmt(v.lam), _fmt(v.threshold_c), _fmt(v.p_value),
                        _fmt(v.aicn_train), _fmt(v.aicn_test), v.conclusion, v.message])


def format_table(verdicts: Sequence[Verdict]) -> str:
    """Aligned plain-text table, one row per verdict."""
    header = ["split", "seed", "lambda", "c", "p-value", "aicn train", "aicn test", "conclusion"]

    def num(v, spec):
        return "" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)

    body = [[v.label, "" if v.seed is None else str(v.seed), num(v.lam, ".3f"),
             num(v.threshold_c, ".3f"), num(v.p_value, ".3f"), num(v.aicn_train, ".3f"),
             num(v.aicn_test, ".3f"), v.conclusion + (f" ({v.message})" if v.message else "")]
            for v in verdicts]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# --- SVG -------------------------------------------------------------------

_W, _H = 640, 400
_LEFT, _RIGHT, _TOP, _BOTTOM = 60, 20, 40, 50


def _g(v: float) -> str:
    return f"{v:.6g}"


def _scale(lo: float, hi: float, a: float, b: float):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not hi > lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def _frame(title: str, xlabel: str, ylabel: str, xlo, xhi, ylo, yhi, sx, sy) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_LEFT}" y1="{_H - _BOTTOM}" x2="{_W - _RIGHT}" y2="{_H - _BOTTOM}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_H - _BOTTOM}" stroke="black"/>',
        f'<text x="{(_LEFT + _W - _RIGHT) / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{(_TOP + _H - _BOTTOM) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {(_TOP + _H - _BOTTOM) / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(xlo, xhi):
        x = sx(t)
        parts.append(f'<line x1="{_g(x)}" y1="{_H - _BOTTOM}" x2="{_g(x)}" y2="{_H - _BOTTOM + 4}" stroke="black"/>')
        parts.append(f'<text x="{_g(x)}" y="{_H - _BOTTOM + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(ylo, yhi):
        y = sy(t)
        parts.append(f'<line x1="{_LEFT - 4}" y1="{_g(y)}" x2="{_LEFT}" y2="{_g(y)}" stroke="black"/>')
        parts.append(f'<text x="{_LEFT - 6}" y="{_g(y + 4)}" text-anchor="end">{t:.3g}</text>')
    return parts


def _vline(x: float, color: str, label: str) -> list[str]:
    return [
        f'<line x1="{_g(x)}" y1="{_TOP}" x2="{_g(x)}" y2="{_H - _BOTTOM}" stroke="{color}" '
        f'stroke-width="2" stroke-dasharray="6 3"/>',
        f'<text x="{_g(x + 4)}" y="{_TOP + 12}" fill="{color}">{escape(label)}</text>',
    ]


def simulation_svg(null_sample: Sequence[float], lambda_obs: float, threshold_c: float,
                   title: str = "Simulated distance metric", bins: int = 40) -> str:
    """Histogram of the null sample with the observed value and threshold marked."""
    null = np.asarray(null_sample, dtype=float)
    lo = float(min(null.min(), lambda_obs))
    hi = float(max(null.max(), lambda_obs))
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(null, bins=bins, range=(lo, hi))
    sx = _scale(lo, hi, _LEFT, _W - _RIGHT)
    ymax = float(counts.max()) or 1.0
    sy = _scale(0.0, ymax, _H - _BOTTOM, _TOP)
    parts = _frame(title, "distance metric", "count", lo, hi, 0.0, ymax, sx, sy)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        parts.append(f'<rect x="{_g(sx(a))}" y="{_g(sy(c))}" width="{_g(sx(b) - sx(a))}" '
                     f'height="{_g(sy(0) - sy(c))}" fill="#4a78b5" stroke="white" stroke-width="0.5"/>')
    parts += _vline(sx(threshold_c), "#d62728", f"c = {threshold_c:.3f}")
    parts += _vline(sx(lambda_obs), "#ff7f0e", f"observed = {lambda_obs:.3f}")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def sweep_svg(rows: Sequence[SweepRow], observed: tuple[float, float] | None = None,
              threshold_c: float | None = None, title: str = "Distance metric vs test AIC") -> str:
    """Scatter of metric against test-partition normalized AIC, observed split highlighted."""
    pts = [(r.lam, r.aicn_test) for r in rows if math.isfinite(r.lam) and math.isfinite(r.aicn_test)]
    extra = [observed] if observed and all(math.isfinite(v) for v in observed) else []
    allpts = pts + extra
    xs = [p[0] for p in allpts] or [0.0, 1.0]
    ys = [p[1] for p in allpts] or [0.0, 1.0]
    xlo, xhi, ylo, yhi = min(xs), max(xs), min(ys), max(ys)
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    sx = _scale(xlo, xhi, _LEFT, _W - _RIGHT)
    sy = _scale(ylo, yhi, _H - _BOTTOM, _TOP)
    parts = _frame(title, "distance metric", "normalized AIC (test)", xlo, xhi, ylo, yhi, sx, sy)
    for x, y in pts:
        parts.append(f'<circle cx="{_g(sx(x))}" cy="{_g(sy(y))}" r="2" fill="#4a78b5" fill-opacity="0.6"/>')
    if threshold_c is not None and xlo <= threshold_c <= xhi:
        parts += _vline(sx(threshold_c), "#d62728", f"c = {threshold_c:.3f}")
    for x, y in extra:
        parts.append(f'<circle cx="{_g(sx(x))}" cy="{_g(sy(y))}" r="6" fill="#ff7f0e" stroke="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
