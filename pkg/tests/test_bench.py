import json
import subprocess
import sys

import numpy as np
import pytest

from linrate.bench import (
    ExperimentConfig,
    available_solvers,
    error_metric,
    recommend,
    run_experiment,
)


def quick_config(tmp_path, **overrides):
    cfg = {
        "schema": "linrate-config-v1",
        "name": "quick",
        "model": {"name": "binary_bd", "params": {"lam": 1.0, "mu": 2.0}},
        "initial": {"kind": "delta", "at": 1},
        "time": 1.0,
        "sweep": {"axis": "cap", "values": [8, 16]},
        "solvers": [{"name": "closure", "options": {"rtol": 1e-10}}],
        "reference": {"solver": "geometric_tail"},
        "reps": 1,
        "output": str(tmp_path / "out.json"),
    }
    cfg.update(overrides)
    return cfg


class TestErrorMetric:
    def test_identical_is_zero(self):
        a = np.array([0.25, 0.75])
        assert error_metric(a, a) == 0.0

    def test_swapped_deltas(self):
        assert error_metric([1.0, 0.0], [0.0, 1.0]) == 2.0

    def test_raw_coefficients_no_renormalization(self):
        assert error_metric([0.5, 0.0], [1.0, 0.0]) == 0.5

    def test_common_window_projection(self):
        assert error_metric([1.0, 2.0, 7.0], [1.0, 2.0]) == 0.0


class TestRunExperiment:
    def test_record_cardinality(self, tmp_path):
        cfg = quick_config(
            tmp_path,
            solvers=[{"name": "closure"}, {"name": "dense_expm"}],
            sweep={"axis": "cap", "values": [8, 12, 16]},
        )
        record = run_experiment(cfg, quiet=True)
        assert len(record["points"]) == 6

    def test_reference_self_zero_error(self, tmp_path):
        cfg = quick_config(tmp_path, reference={"solver": "self"})
        record = run_experiment(cfg, quiet=True)
        assert all(p["l1_error"] == 0.0 for p in record["points"])

    def test_closure_matches_tail_everywhere(self, tmp_path):
        record = run_experiment(quick_config(tmp_path), quiet=True)
        assert all(p["l1_error"] <= 1e-9 for p in record["points"])

    def test_json_round_trip(self, tmp_path):
        cfg = quick_config(tmp_path)
        record = run_experiment(cfg, quiet=True)
        with open(cfg["output"]) as fh:
            loaded = json.load(fh)
        assert loaded == json.loads(json.dumps(record))

    def test_deterministic_non_timing_fields(self, tmp_path):
        cfg = quick_config(tmp_path)
        a = run_experiment(cfg, quiet=True)
        b = run_experiment(cfg, quiet=True)
        for pa, pb in zip(a["points"], b["points"]):
            assert pa["l1_error"] == pb["l1_error"]
            assert pa["stats"] == pb["stats"]

    def test_solver_failure_recorded_and_run_continues(self, tmp_path):
        # bdi has no registered closed form, so the analytic adapter fails
        # per point while the closure keeps running.
        cfg = quick_config(
            tmp_path,
            solvers=[{"name": "analytic"}, {"name": "closure"}],
            model={"name": "bdi", "params": {}},
            initial={"kind": "delta", "at": 0},
        )
        record = run_experiment(cfg, quiet=True)
        analytic_points = [p for p in record["points"] if p["solver"] == "analytic"]
        closure_points = [p for p in record["points"] if p["solver"] == "closure"]
        assert all(p["error"] is not None for p in analytic_points)
        assert all(p["error"] is None for p in closure_points)

    def test_increasing_sweep_enforced(self, tmp_path):
        cfg = quick_config(tmp_path, sweep={"axis": "cap", "values": [16, 8]})
        with pytest.raises(ValueError, match="increasing"):
            ExperimentConfig.from_dict(cfg)

    def test_unknown_reference_rejected(self, tmp_path):
        cfg = quick_config(tmp_path, reference={"solver": "wat"})
        with pytest.raises(ValueError, match="reference"):
            ExperimentConfig.from_dict(cfg)

    def test_signed_experiment_config(self, tmp_path):
        cfg = {
            "schema": "linrate-config-v1",
            "name": "signed",
            "model": {"name": "signed_mm_inf", "params": {}},
            "initial": {"kind": "delta", "at": 0},
            "time": 1.0,
            "sweep": {"axis": "cap", "values": [10, 20, 40]},
            "solvers": [{"name": "closure", "options": {"rtol": 1e-12}}],
            "reference": {"solver": "analytic"},
            "reps": 1,
            "output": str(tmp_path / "signed.json"),
        }
        record = run_experiment(cfg, quiet=True)
        assert all(p["l1_error"] <= 1e-12 for p in record["points"])


class TestRecommend:
    def test_scalar_linear_rate_defaults_to_closure(self):
        out = recommend({"linear_rate": True, "K": 1})
        assert out["method"] == "closure"

    def test_binary_bd_uses_closed_form_first(self):
        out = recommend({"linear_rate": True, "binary_fission": True, "K": 1})
        assert out["method"] == "geometric_tail"

    def test_unstructured_falls_back_to_truncation(self):
        out = recommend({})
        assert out["method"] == "truncated_dense"

    def test_multitype_and_matrix_rows(self):
        assert recommend({"linear_rate": True, "K": 3})["method"] == "multi_closure"
        assert (
            recommend({"linear_rate": True, "matrix_valued": True})["method"]
            == "matrix_closure"
        )

    def test_hybrid_rows(self):
        assert recommend({"remainder": True})["method"] == "strang_rosenbrock"
        assert recommend({"remainder": True, "K": 2})["method"] == "kron_strang"
        assert (
            recommend({"remainder": True, "small_eps": True})["method"] == "perturbation"
        )

    def test_stationary_rows(self):
        assert (
            recommend({"stationary": True, "linear_rate": True, "matrix_valued": True})[
                "method"
            ]
            == "block_thomas"
        )
        assert (
            recommend({"stationary": True, "remainder": True})["method"]
            == "power_iteration"
        )

    def test_deterministic(self):
        d = {"linear_rate": True, "K": 2}
        assert recommend(d) == recommend(d)


class TestCli:
    def test_list_models(self):
        out = subprocess.run(
            [sys.executable, "-m", "linrate.cli", "list-models"],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0
        assert "schlogl" in out.stdout and "telegraph_gr" in out.stdout

    def test_selftest(self):
        out = subprocess.run(
            [sys.executable, "-m", "linrate.cli", "selftest"],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0, out.stdout + out.stderr
        assert "FAIL" not in out.stdout

    def test_run_and_recommend(self, tmp_path):
        cfg = quick_config(tmp_path, output=str(tmp_path / "cli_out.json"))
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = subprocess.run(
            [sys.executable, "-m", "linrate.cli", "--quiet", "run", str(cfg_path)],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0, out.stdout + out.stderr
        assert (tmp_path / "cli_out.json").exists()

        desc = tmp_path / "desc.json"
        desc.write_text(json.dumps({"linear_rate": True, "K": 1}))
        out = subprocess.run(
            [sys.executable, "-m", "linrate.cli", "recommend", str(desc)],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0
        assert out.stdout.startswith("closure:")

    def test_shipped_configs_validate(self):
        import glob
        import os

        here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        paths = glob.glob(os.path.join(here, "configs", "*.json"))
        assert len(paths) >= 8
        for path in paths:
            ExperimentConfig.load(path)

    def test_available_solvers_listing(self):
        names = available_solvers()
        for expected in ("closure", "dense_expm", "strang", "block_thomas"):
            assert expected in names
