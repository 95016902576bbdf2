"""Training-dynamics charts as standalone SVG files.

Four figures, each with two stacked panels sharing the epoch axis.  Runs in
the explicit setting are drawn solid, implicit ones dashed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import SchemaError
from .metrics import read_csv

WIDTH, HEIGHT = 800, 500
MARGIN_L, MARGIN_R, MARGIN_T, GAP, MARGIN_B = 70, 150, 20, 45, 40
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

# file stem -> ((column, title), (column, title)), log-y flag
FIGURES = {
    "errors": ((("train_err_labeled", "training error (labeled)"), ("test_err", "test error")), False),
    "losses": ((("sup_loss", "supervised loss"), ("unsup_loss", "unsupervised loss")), True),
    "confidence": ((("mean_confidence_unlabeled", "mean confidence (unlabeled)"),
                    ("pseudo_label_ratio", "pseudo-label ratio")), False),
    "privileged": ((("unlabeled_pred_acc", "unlabeled prediction accuracy"),
                    ("pseudo_label_acc", "pseudo-label accuracy")), False),
}


@dataclass
class Series:
    label: str
    rows: list
    dashed: bool = False


def load_series(run_dir, label=None, dashed=None):
    run_dir = Path(run_dir)
    rows = read_csv(run_dir / "metrics.csv")
    if not rows:
        raise SchemaError(f"{run_dir / 'metrics.csv'}: no metric rows")
    if dashed is None:
        mode = None
        cfg_path = run_dir / "config.json"
        if cfg_path.exists():
            mode = json.loads(cfg_path.read_text()).get("sampler", {}).get("mode")
        dashed = mode == "implicit"
    return Series(label or run_dir.name, rows, dashed)


def read_manifest(path):
    """``{"runs": [{"dir": ..., "label": ..., "style": "solid"|"dashed"}]}`` or a bare list.

    Relative directories are resolved against the manifest's location.
    """
    path = Path(path)
    raw = json.loads(path.read_text())
    entries = raw["runs"] if isinstance(raw, dict) else raw
    out = []
    for e in entries:
        if isinstance(e, str):
            e = {"dir": e}
        d = Path(e["dir"])
        if not d.is_absolute():
            d = path.parent / d
        style = e.get("style")
        out.append(load_series(d, e.get("label"), None if style is None else style == "dashed"))
    return out


def _ticks(lo, hi, log):
    if log:
        return [10.0 ** k for k in range(math.floor(lo), math.ceil(hi) + 1)]
    step = 10 ** math.floor(math.log10((hi - lo) or 1.0))
    while (hi - lo) / step > 6:
        step *= 2
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:g}"


def _panel(series, column, title, top, height, log, x_max):
    pts_all = []
    for s in series:
        pts = [(r.epoch, getattr(r, column)) for r in s.rows if getattr(r, column) is not None]
        if log:
            pts = [(x, y) for x, y in pts if y > 0]
        pts_all.append(pts)
    ys = [y for pts in pts_all for _, y in pts]
    if log:
        ys = [math.log10(y) for y in ys]
    lo, hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if not log:
        lo, hi = min(lo, 0.0), max(hi, 1.0 if hi <= 1.0 else hi)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R

    def sx(x):
        return x0 + (x1 - x0) * x / x_max

    def sy(y):
        v = math.log10(y) if log else y
        return top + height * (hi - v) / (hi - lo)

    out = [f'<rect x="{x0}" y="{top}" width="{x1 - x0}" height="{height}" fill="none" stroke="#444"/>',
           f'<text x="{x0}" y="{top - 5}" font-size="13">{escape(title)}{" (log)" if log else ""}</text>']
    for t in _ticks(lo, hi, log):
        v = math.log10(t) if log else t
        if lo - 1e-12 <= v <= hi + 1e-12:
            y = sy(t)
            out.append(f'<line x1="{x0 - 4}" y1="{y:.2f}" x2="{x1}" y2="{y:.2f}" stroke="#ddd"/>')
            out.append(f'<text x="{x0 - 7}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{_fmt(t)}</text>')
    for i, (s, pts) in enumerate(zip(series, pts_all)):
        if not pts:
            continue
        colour = PALETTE[i % len(PALETTE)]
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.6"{dash} points="{coords}">'
                   f"<title>{escape(s.label)}</title></polyline>")
    return out


def render_figure(series, stem, log_losses=True):
    (top_col, bottom_col), is_loss = FIGURES[stem]
    log = is_loss and log_losses
    x_max = max((r.epoch for s in series for r in s.rows), default=1.0) or 1.0
    ph = (HEIGHT - MARGIN_T - GAP - MARGIN_B - 10) / 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
             f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    parts += _panel(series, *top_col, MARGIN_T + 10, ph, log, x_max)
    parts += _panel(series, *bottom_col, MARGIN_T + 10 + ph + GAP, ph, log, x_max)
    base = HEIGHT - MARGIN_B
    for t in _ticks(0.0, x_max, False):
        x = MARGIN_L + (WIDTH - MARGIN_R - MARGIN_L) * t / x_max
        parts.append(f'<text x="{x:.2f}" y="{base + 16}" font-size="11" text-anchor="middle">{_fmt(t)}</text>')
    parts.append(f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) / 2}" y="{HEIGHT - 6}" font-size="12" '
                 f'text-anchor="middle">epoch</text>')
    lx = WIDTH - MARGIN_R + 12
    for i, s in enumerate(series):
        y = MARGIN_T + 20 + 18 * i
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        parts.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{PALETTE[i % len(PALETTE)]}" '
                     f'stroke-width="2"{dash}/>')
        parts.append(f'<text x="{lx + 30}" y="{y + 4}" font-size="11">{escape(s.label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_plots(run_dir, compare=None, out_dir=None, log_losses=True):
    """Write the four SVG figures; returns their paths."""
    series = read_manifest(compare) if compare else [load_series(run_dir)]
    out = Path(out_dir or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for stem in FIGURES:
        p = out / f"{stem}.svg"
        p.write_text(render_figure(series, stem, log_losses))
        paths.append(p)
    return paths
