"""Plot-ready exports from a finished run: progression CSVs and SVG charts.

convergence.csv rescales the successive Kendall tau and the utility
movement independently to [0, 1] (constant series map to zeros) so both
curves share one axis; ndcg_progression.csv copies the raw NDCG columns,
one per cutoff.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .core import EngineError
from .metrics import normalize_series

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class ReportError(EngineError):
    """A report input is missing or unusable."""


def read_metrics_table(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    path = Path(path)
    if not path.exists():
        raise ReportError(f"missing metrics file {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ReportError(f"metrics file {path} has no header")
        return list(reader.fieldnames), list(reader)


def _column(rows: list[dict[str, str]], name: str) -> list[tuple[int, float]]:
    out = []
    for row in rows:
        cell = row.get(name, "")
        if cell != "":
            out.append((int(row["iteration"]), float(cell)))
    return out


def emit_report(run_dir: str | Path, svg: bool = False) -> tuple[list[Path], list[str]]:
    """Write report files into the run directory; returns (files, warnings)."""
    run_dir = Path(run_dir)
    header, rows = read_metrics_table(run_dir / "metrics.csv")
    files: list[Path] = []
    warnings: list[str] = []

    tau = _column(rows, "kendall_tau_successive")
    du = _column(rows, "delta_u")
    tau_norm = dict(zip((i for i, _ in tau), normalize_series([v for _, v in tau]))) if tau else {}
    du_norm = dict(zip((i for i, _ in du), normalize_series([v for _, v in du]))) if du else {}
    conv_path = run_dir / "convergence.csv"
    with open(conv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "kendall_tau_norm", "delta_u_norm"])
        for row in rows:
            it = int(row["iteration"])
            writer.writerow(
                [
                    it,
                    f"{tau_norm[it]:.6f}" if it in tau_norm else "",
                    f"{du_norm[it]:.6f}" if it in du_norm else "",
                ]
            )
    files.append(conv_path)

    ndcg_cols = [name for name in header if name.startswith("ndcg_")]
    ndcg_series = {name: _column(rows, name) for name in ndcg_cols}
    have_ndcg = any(ndcg_series.values())
    if have_ndcg:
        ndcg_path = run_dir / "ndcg_progression.csv"
        with open(ndcg_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration"] + ndcg_cols)
            for row in rows:
                writer.writerow(
                    [row["iteration"]] + [row.get(name, "") for name in ndcg_cols]
                )
        files.append(ndcg_path)
    else:
        warnings.append("run has no reference ranking, skipping ndcg_progression.csv")

    if svg:
        conv_svg = run_dir / "convergence.svg"
        conv_svg.write_text(
            line_chart_svg(
                "Convergence (min-max normalized)",
                {
                    "kendall_tau": [(i, v) for i, v in sorted(tau_norm.items())],
                    "delta_u": [(i, v) for i, v in sorted(du_norm.items())],
                },
            ),
            encoding="utf-8",
        )
        files.append(conv_svg)
        if have_ndcg:
            ndcg_svg = run_dir / "ndcg_progression.svg"
            ndcg_svg.write_text(
                line_chart_svg(
                    "NDCG progression",
                    {name: ndcg_series[name] for name in ndcg_cols},
                ),
                encoding="utf-8",
            )
            files.append(ndcg_svg)
    return files, warnings


def line_chart_svg(
    title: str,
    series: dict[str, list[tuple[int, float]]],
    width: int = 720,
    height: int = 400,
) -> str:
    """Render a self-contained polyline chart; no plotting stack required."""
    margin = 60
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    points = [(x, y) for pts in series.values() for x, y in pts]
    if points:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
    else:
        x_lo, x_hi, y_lo, y_hi = 0, 1, 0.0, 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x: float) -> float:
        return margin + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return height - margin - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 18}" text-anchor="middle">{x_lo:g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 18}" text-anchor="middle">{x_hi:g}</text>',
        f'<text x="{margin - 8}" y="{height - margin}" text-anchor="end">{y_lo:.2f}</text>',
        f'<text x="{margin - 8}" y="{margin + 4}" text-anchor="end">{y_hi:.2f}</text>',
    ]
    for k, (name, pts) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        if pts:
            path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
            parts.append(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        legend_y = margin + 16 * k
        parts.append(
            f'<rect x="{width - margin - 130}" y="{legend_y - 9}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(f'<text x="{width - margin - 115}" y="{legend_y}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
