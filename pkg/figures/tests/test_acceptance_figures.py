"""Criterion 11: every panel type regenerates from the benchmark CLI's JSON
records for the criteria experiments, and slope-guide annotations match
independently fitted slopes within 0.1."""

import json
import math
import os
import subprocess
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from make_figure import make_figure

REPO = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
CONFIGS = os.path.join(REPO, "configs")

CRITERIA_CONFIGS = [
    "bd_tail_check",        # criterion 1
    "in_window_check",      # criterion 2
    "signed_window_sweep",  # criterion 3
    "dense_oracle_check",   # criterion 4
    "schlogl_orders",       # criterion 5
    "gr_orders",            # criterion 5
    "perturbation_slopes",  # criterion 6
    "stationary_gr",        # criterion 7
    "predprey_stationary",  # criterion 8
    "expm_scaling",         # criterion 9
    "taylor_floor",         # criterion 10
]

FIGURES = [
    # (figure kind, config options, result names)
    ("orders", {"guides": [-2, -4]}, ["gr_orders"]),
    ("orders", {"guides": [-2]}, ["schlogl_orders"]),
    ("orders", {"guides": []}, ["perturbation_slopes", "taylor_floor"]),
    ("scaling", {}, ["expm_scaling"]),
    ("pareto", {}, ["dense_oracle_check", "bd_tail_check"]),
    ("stationary", {}, ["stationary_gr", "predprey_stationary"]),
    ("stationary", {}, ["signed_window_sweep", "in_window_check"]),
]


@pytest.fixture(scope="session")
def result_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("results")
    for name in CRITERIA_CONFIGS:
        cfg = os.path.join(CONFIGS, name + ".json")
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "linrate.cli",
                "--quiet",
                "run",
                cfg,
                "--out",
                str(out / f"{name}.json"),
                "--reps",
                "1",
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, f"{name}: {proc.stdout}{proc.stderr}"
    return out


def independent_slope(record, solver):
    xs, ys = [], []
    for p in record["points"]:
        if p["solver"] == solver and not p["error"] and p["l1_error"] > 0:
            (x,) = p["axis"].values()
            xs.append(math.log(x))
            ys.append(math.log(p["l1_error"]))
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    return sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / sum(
        (a - mx) ** 2 for a in xs
    )


def test_criterion_11_figures_regenerate(result_dir, tmp_path):
    rendered = 0
    for i, (kind, options, names) in enumerate(FIGURES):
        cfg_path = tmp_path / f"fig_{i}.json"
        cfg_path.write_text(
            json.dumps({"kind": kind, "filename": f"fig_{i}_{kind}.png", **options})
        )
        results = [str(result_dir / f"{n}.json") for n in names]
        out_path, annotations = make_figure(str(cfg_path), results, str(tmp_path / "out"))
        assert os.path.exists(out_path)
        rendered += 1
        # Slope annotations must match an independent fit within 0.1.
        if kind in ("orders", "scaling"):
            for name in names:
                record = json.load(open(result_dir / f"{name}.json"))
                for solver, annotated in annotations[name].items():
                    if kind == "orders":
                        fitted = independent_slope(record, solver)
                        assert abs(annotated - fitted) <= 0.1, (name, solver)
    assert rendered == len(FIGURES)
    # The G/R orders panel must agree with the acceptance slopes.
    record = json.load(open(result_dir / "gr_orders.json"))
    assert abs(independent_slope(record, "purebd_strang") + 2.0) <= 0.3
    assert abs(independent_slope(record, "purebd_richardson") + 4.0) <= 0.4
    print(
        f"\nACCEPTANCE 11: PASS - {rendered} figures across all panel kinds "
        "regenerated from the criteria result files; slope annotations match "
        "independent fits within 0.1"
    )
