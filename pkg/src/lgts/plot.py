"""Learning curves as a plain SVG file: one polyline per sub-task edge,
dashed vertical lines where a sub-task converged."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .metrics import read_metrics_csv

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


class EmptyMetrics(ValueError):
    pass


def _curves(rows):
    curves: dict[str, list[tuple[int, float]]] = {}
    marks: list[tuple[int, str]] = []
    for r in rows:
        if r["event"] == "train" and r["g"] is not None:
            curves.setdefault(r["edge"], []).append((r["cum_interactions"], r["g"]))
        elif r["event"] == "converged":
            marks.append((r["cum_interactions"], r["edge"]))
    return curves, marks


def plot_curves(metrics_files, out: str | Path, width: int = 900, height: int = 500,
                title: str = "sub-task returns") -> dict:
    """Write the SVG; returns counts of drawn curves and markers."""
    runs = []
    for f in metrics_files:
        rows = read_metrics_csv(f)
        if rows:
            runs.append((rows[0]["run_id"] or Path(f).stem, rows))
    if not runs:
        raise EmptyMetrics("no metrics rows to plot")

    per_run = [(rid, *_curves(rows)) for rid, rows in runs]
    x_max = max([x for _, c, m in per_run for pts in c.values() for x, _ in pts]
                + [x for _, _, m in per_run for x, _ in m] + [1])
    left, right, top, bottom = 70, 260, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + pw * x / x_max

    def sy(y):
        return top + ph * (1.0 - max(0.0, min(1.0, y)))

    edges = sorted({e for _, c, _ in per_run for e in c})
    color = {e: PALETTE[i % len(PALETTE)] for i, e in enumerate(edges)}
    dashes = ["", "6,3", "2,2", "8,2,2,2"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{left}" y="20" font-size="14">{escape(title)}</text>',
             f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for k in range(6):
        y = k / 5
        parts.append(f'<text x="{left - 8}" y="{sy(y) + 4:.1f}" text-anchor="end">{y:.1f}</text>')
        x = x_max * k / 5
        parts.append(f'<text x="{sx(x):.1f}" y="{top + ph + 16}" text-anchor="middle">{x:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">'
                 'environment interactions</text>')

    n_curves = n_marks = 0
    for i, (rid, curves, marks) in enumerate(per_run):
        dash = dashes[i % len(dashes)]
        for e in edges:
            pts = curves.get(e)
            if not pts:
                continue
            coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<polyline fill="none" stroke="{color[e]}" stroke-width="1.5"{extra} '
                         f'points="{coords}"><title>{escape(rid)}: {escape(e)}</title></polyline>')
            n_curves += 1
        for x, e in marks:
            parts.append(f'<line class="converged" x1="{sx(x):.1f}" y1="{top}" x2="{sx(x):.1f}" '
                         f'y2="{top + ph}" stroke="{color.get(e, "black")}" '
                         f'stroke-dasharray="4,4"><title>{escape(rid)}: {escape(e)} converged'
                         f'</title></line>')
            n_marks += 1

    ly = top
    for e in edges:
        parts.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 35}" y2="{ly}" '
                     f'stroke="{color[e]}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 40}" y="{ly + 4}">{escape(e)}</text>')
        ly += 16
    if len(per_run) > 1:
        ly += 8
        for i, (rid, _, _) in enumerate(per_run):
            dash = dashes[i % len(dashes)]
            extra = f' stroke-dasharray="{dash}"' if dash else ""
            parts.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 35}" y2="{ly}" '
                         f'stroke="black"{extra}/>')
            parts.append(f'<text class="run" x="{left + pw + 40}" y="{ly + 4}">{escape(rid)}</text>')
            ly += 16
    parts.append("</svg>")
    Path(out).write_text("\n".join(parts) + "\n")
    return {"curves": n_curves, "markers": n_marks, "runs": [rid for rid, _ in runs]}
