"""Run files, aggregate tables and SVG line plots."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .train import CSV_COLUMNS, RunRecord

AGG_COLUMNS = ("method", "lam", "n_runs", "train_acc", "test_acc", "gap", "corre_gap")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows: list[dict], columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def run_name(config: dict) -> str:
    return f"{config['method']}_lam{config['lam']:g}_seed{config['seed']}"


def write_run(record: RunRecord, out_dir: str | Path) -> Path:
    """Write ``<name>.csv`` and ``<name>.json``; returns the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = run_name(record.config)
    path = out / f"{name}.csv"
    path.write_text(rows_to_csv(record.rows))
    (out / f"{name}.json").write_text(json.dumps(record.summary(), indent=1, sort_keys=True))
    return path


def read_run_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (None if v == "" else float(v)) for k, v in r.items()})
        return rows


def load_runs(run_dir: str | Path) -> list[dict]:
    """Summaries with their metric rows, for every ``*.json`` run in ``run_dir``."""
    runs = []
    for js in sorted(Path(run_dir).glob("*.json")):
        summary = json.loads(js.read_text())
        if "config" not in summary:
            continue
        csv_path = js.with_suffix(".csv")
        summary["rows"] = read_run_csv(csv_path) if csv_path.exists() else []
        runs.append(summary)
    return runs


def aggregate(runs: list[dict]) -> list[dict]:
    """Mean of the final metrics per ``(method, lam)``, sorted by method then lambda."""
    groups = defaultdict(list)
    for r in runs:
        groups[(r["config"]["method"], float(r["config"]["lam"]))].append(r)
    table = []
    for (method, lam), rs in sorted(groups.items()):
        cg = [r["final_corre_gap"] for r in rs if r.get("final_corre_gap") is not None]
        table.append({
            "method": method, "lam": lam, "n_runs": len(rs),
            "train_acc": float(np.mean([r["train_acc"] for r in rs])),
            "test_acc": float(np.mean([r["test_acc"] for r in rs])),
            "gap": float(np.mean([r["train_acc"] - r["test_acc"] for r in rs])),
            "corre_gap": float(np.mean(cg)) if cg else None,
        })
    return table


def markdown_table(table: list[dict]) -> str:
    lines = ["| method | lambda | runs | Train | Test | Train - Test | corr. gap |",
             "|---|---|---|---|---|---|---|"]
    for r in table:
        cg = "" if r["corre_gap"] is None else f"{r['corre_gap']:.4f}"
        lines.append(f"| {r['method']} | {r['lam']:g} | {r['n_runs']} | {r['train_acc']:.3f} | "
                     f"{r['test_acc']:.3f} | {r['gap']:.3f} | {cg} |")
    return "\n".join(lines) + "\n"


def mean_curves(runs: list[dict], metric: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-series mean of ``metric`` against iteration (series = method and lambda)."""
    by = defaultdict(list)
    for r in runs:
        c = r["config"]
        by[f"{c['method']} (lam={c['lam']:g})"].append(r["rows"])
    out = {}
    for label, runs_rows in sorted(by.items()):
        its = sorted({row["iteration"] for rows in runs_rows for row in rows if row.get(metric) is not None})
        if not its:
            continue
        ys = []
        for it in its:
            vals = [row[metric] for rows in runs_rows for row in rows
                    if row["iteration"] == it and row.get(metric) is not None]
            ys.append(float(np.mean(vals)))
        out[label] = (np.array(its), np.array(ys))
    return out


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def svg_line_plot(series: dict, title: str, ylabel: str, width: int = 640, height: int = 400) -> str:
    """Polyline chart with axes, ticks and a legend."""
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([x for x, _ in series.values()]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([y for _, y in series.values()]) if series else np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{left + pw / 2:.1f}" y="20" text-anchor="middle" font-size="13">{title}</text>',
             f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>']
    for t in np.linspace(x0, x1, 5):
        parts.append(f'<line x1="{px(t):.1f}" y1="{top + ph}" x2="{px(t):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:.0f}</text>')
    for t in np.linspace(y0, y1, 5):
        parts.append(f'<line x1="{left - 4}" y1="{py(t):.1f}" x2="{left}" y2="{py(t):.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3f}</text>')
    parts.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">iteration</text>')
    parts.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {top + ph / 2:.1f})">{ylabel}</text>')
    for i, (label, (x, y)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 * i + 6
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    """Aggregate table (CSV + Markdown) and metric-vs-iteration SVGs."""
    out = Path(out_dir or run_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = load_runs(run_dir)
    table = aggregate(runs)
    (out / "aggregate.csv").write_text(rows_to_csv(table, AGG_COLUMNS))
    (out / "aggregate.md").write_text(markdown_table(table))
    for metric, label in (("corre_gap", "correlation gap"), ("test_acc", "test accuracy"),
                          ("train_acc", "train accuracy")):
        curves = mean_curves(runs, metric)
        if curves:
            (out / f"{metric}.svg").write_text(svg_line_plot(curves, f"{label} vs iteration", label))
    return {"runs": len(runs), "table": table}
