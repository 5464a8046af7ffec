#!/usr/bin/env python3
"""Render publication-style figures from the benchmark CLI's JSON result files.

Usage: figures/make_figure.py <figure-config.json> <results...> --out dir

The figure config selects the panel type and options:

    {"kind": "pareto" | "scaling" | "orders" | "stationary",
     "title": "...",              # optional figure title
     "filename": "fig.png",       # optional output name
     "guides": [-2, -4]}          # orders panels: reference slope guides

Each result file becomes one panel.  All numerics live upstream; this
script only applies plotting transforms (log scales and log-log slope fits
for annotation).  Regeneration from the same inputs is idempotent: style
constants are fixed and fitted annotations are also written to a JSON
sidecar ``<figure>.annotations.json``.
"""

import argparse
import json
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANEL_KINDS = ("pareto", "scaling", "orders", "stationary")
PANEL_SIZE = (4.6, 3.6)
MARKERS = ("o", "s", "^", "d", "v", "*", "x")
LOG_FLOOR = 1e-17


class FigureValidationError(ValueError):
    """Raised when a config or result file is missing required fields."""


def _require(mapping, field, context):
    if field not in mapping:
        raise FigureValidationError(f"{context}: missing required field {field!r}")
    return mapping[field]


def load_config(path):
    with open(path) as fh:
        config = json.load(fh)
    kind = _require(config, "kind", "figure config")
    if kind not in PANEL_KINDS:
        raise FigureValidationError(
            f"figure config: unknown kind {kind!r}; expected one of {PANEL_KINDS}"
        )
    return config


def load_result(path):
    with open(path) as fh:
        record = json.load(fh)
    for field in ("schema", "name", "config", "points"):
        _require(record, field, f"result file {os.path.basename(path)}")
    if record["schema"] != "linrate-result-v1":
        raise FigureValidationError(
            f"result file {os.path.basename(path)}: unsupported schema "
            f"{record['schema']!r}"
        )
    if not record["points"]:
        raise FigureValidationError(
            f"result file {os.path.basename(path)}: empty sweep"
        )
    for point in record["points"]:
        for field in ("solver", "axis", "seconds", "l1_error"):
            _require(point, field, f"result point in {os.path.basename(path)}")
    return record


def series_of(record):
    """Group good points by solver, keyed in first-appearance order."""
    series = {}
    for point in record["points"]:
        if point.get("error"):
            continue
        (axis_value,) = point["axis"].values()
        series.setdefault(point["solver"], []).append(
            (axis_value, point["seconds"], point["l1_error"])
        )
    return series


def fit_loglog_slope(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pairs) < 2:
        return None
    lx = [math.log(x) for x, _ in pairs]
    ly = [math.log(y) for _, y in pairs]
    n = len(lx)
    mx, my = sum(lx) / n, sum(ly) / n
    denom = sum((a - mx) ** 2 for a in lx)
    if denom == 0:
        return None
    return sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / denom


def _axis_name(record):
    return record["config"]["sweep"]["axis"]


def draw_panel(ax, kind, record, guides):
    """Render one panel; returns {solver: fitted slope} annotations."""
    series = series_of(record)
    if not series:
        raise FigureValidationError(
            f"result {record['name']!r}: no successful points to plot"
        )
    annotations = {}
    for idx, (solver, rows) in enumerate(series.items()):
        marker = MARKERS[idx % len(MARKERS)]
        axis_vals = [r[0] for r in rows]
        seconds = [max(r[1], LOG_FLOOR) for r in rows]
        errors = [max(r[2], LOG_FLOOR) for r in rows]
        if kind == "pareto":
            ax.loglog(seconds, errors, marker=marker, label=solver)
        elif kind == "scaling":
            slope = fit_loglog_slope(axis_vals, seconds)
            label = solver if slope is None else f"{solver} (slope {slope:.2f})"
            if slope is not None:
                annotations[solver] = slope
            ax.loglog(axis_vals, seconds, marker=marker, label=label)
        elif kind == "orders":
            slope = fit_loglog_slope(axis_vals, errors)
            label = solver if slope is None else f"{solver} (slope {slope:.2f})"
            if slope is not None:
                annotations[solver] = slope
            ax.loglog(axis_vals, errors, marker=marker, label=label)
        else:  # stationary
            ax.loglog(axis_vals, errors, marker=marker, label=solver)
    if kind == "orders":
        anchor_rows = next(iter(series.values()))
        x0, _, y0 = anchor_rows[0][0], anchor_rows[0][1], max(anchor_rows[0][2], LOG_FLOOR)
        xs = sorted({r[0] for rows in series.values() for r in rows})
        for g in guides:
            guide = [y0 * (x / x0) ** g for x in xs]
            ax.loglog(xs, guide, "k--", linewidth=0.8, alpha=0.6)
            ax.annotate(
                f"$K^{{{g:+d}}}$", (xs[-1], guide[-1]), fontsize=8, alpha=0.8
            )
    labels = {
        "pareto": ("wall clock [s]", "in-window $\\ell^1$ error"),
        "scaling": (_axis_name(record), "wall clock [s]"),
        "orders": (_axis_name(record), "in-window $\\ell^1$ error"),
        "stationary": (_axis_name(record), "$\\ell^1$ gap to reference"),
    }[kind]
    ax.set_xlabel(labels[0])
    ax.set_ylabel(labels[1])
    ax.set_title(record["name"], fontsize=10)
    ax.grid(True, which="both", alpha=0.25)
    ax.legend(fontsize=7)
    return annotations


def build_figure(config, records):
    """Build the matplotlib figure; returns (fig, annotations per panel)."""
    kind = config["kind"]
    guides = config.get("guides", [-2, -4] if kind == "orders" else [])
    n = len(records)
    if n == 0:
        raise FigureValidationError("no result files supplied")
    fig, axes = plt.subplots(
        1, n, figsize=(PANEL_SIZE[0] * n, PANEL_SIZE[1]), squeeze=False
    )
    annotations = {}
    for ax, record in zip(axes[0], records):
        annotations[record["name"]] = draw_panel(ax, kind, record, guides)
    if config.get("title"):
        fig.suptitle(config["title"])
    fig.tight_layout()
    return fig, annotations


def make_figure(config_path, result_paths, out_dir):
    config = load_config(config_path)
    records = [load_result(p) for p in result_paths]
    fig, annotations = build_figure(config, records)
    os.makedirs(out_dir, exist_ok=True)
    stem = config.get("filename") or f"{config['kind']}_{records[0]['name']}.png"
    out_path = os.path.join(out_dir, stem)
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    sidecar = out_path + ".annotations.json"
    with open(sidecar, "w") as fh:
        json.dump(annotations, fh, indent=1, sort_keys=True)
    return out_path, annotations


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config", help="figure config JSON")
    parser.add_argument("results", nargs="+", help="CLI result JSON files")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    out_path, _ = make_figure(args.config, args.results, args.out)
    print(out_path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
