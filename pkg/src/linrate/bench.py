"""Benchmark and experiment driver: config-driven solver/model sweeps with
wall-clock capture, in-window l1 errors against a declared reference, and
JSON result records.

Schemas (documented in docs/schemas.md):
  config  schema tag "linrate-config-v1"
  result  schema tag "linrate-result-v1"

Timing protocol: one warm-up run (excluded), then best of ``reps`` timed
runs, all serialized; non-timing fields are deterministic, and results are
written atomically.
"""

import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import factorial

from . import baselines, closure, models, perturbation, splitting, stationary, telegraph
from .integrators import PolynomialRhs, taylor_solve

CONFIG_SCHEMA = "linrate-config-v1"
RESULT_SCHEMA = "linrate-result-v1"


@dataclass
class ExperimentConfig:
    name: str
    model: dict
    solvers: list
    sweep: dict
    reference: dict
    time: float = 1.0
    initial: dict = field(default_factory=lambda: {"kind": "delta", "at": 0})
    fixed: dict = field(default_factory=dict)
    reps: int = 3
    output: str = "result.json"

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        schema = raw.pop("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ValueError(f"unsupported config schema {schema!r}")
        cfg = cls(**raw)
        values = cfg.sweep.get("values", [])
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        for s in cfg.solvers:
            adapter = s.get("solver", s["name"])
            if adapter not in _ADAPTERS:
                raise ValueError(f"unknown solver {adapter!r}")
        ref = cfg.reference.get("solver")
        if ref not in {"self"} | set(_ADAPTERS):
            raise ValueError(f"reference solver {ref!r} is not available")
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Task:
    """One solver invocation: model spec plus the sweep point merged into
    the fixed settings."""

    model_name: str
    model_params: dict
    initial: dict
    time: float
    settings: dict

    def model(self):
        return models.model_zoo(self.model_name, self.model_params)

    def cap(self, default=None):
        cap = self.settings.get("cap", default)
        if cap is None:
            raise ValueError("this solver needs a 'cap' setting")
        return int(cap)

    def scalar_init(self, N):
        if self.initial.get("kind") != "delta":
            raise ValueError("scalar solvers take delta initials")
        at = int(self.initial.get("at", 0))
        init = np.zeros(max(N, at) + 1)
        init[at] = 1.0
        return init

    def joint_init(self, nT, M):
        # Hidden-state delta at count 0 unless stated otherwise.
        state = int(self.initial.get("state", 0))
        init = np.zeros((nT, M + 1))
        init[state, 0] = 1.0
        return init

    def tensor_init(self, shape):
        at = tuple(int(x) for x in self.initial.get("at", (0,) * len(shape)))
        init = np.zeros(shape)
        init[at] = 1.0
        return init


def _analytic_window(task, N):
    """Closed forms for the zoo models that have them."""
    name = task.model_name
    p = task.model_params
    t = task.time
    if name == "binary_bd":
        lam, mu = p.get("lam", 1.05), p.get("mu", 1.0)
        return closure.bd_geometric_tail(lam, mu, t, N)
    if name in ("mm_inf", "signed_mm_inf"):
        nu = p.get("nu", 2.0 if name == "mm_inf" else -1.0)
        mu = p.get("mu", 1.0)
        c = nu * (1 - np.exp(-mu * t)) / mu
        n = np.arange(N + 1)
        return np.exp(-c) * c**n / factorial(n)
    raise ValueError(f"no closed form registered for model {name!r}")


def _hybrid_joint_generator(model, caps):
    caps = tuple(int(c) for c in np.atleast_1d(caps))
    gens = model.affine if isinstance(model.affine, (list, tuple)) else [model.affine]
    sizes = [c + 1 for c in caps]
    L = model.remainder_for(caps).matrix.toarray()
    for i, gen in enumerate(gens):
        Li = models.truncate_generator(gen, caps[i]).todense()
        before = int(np.prod(sizes[:i])) if i else 1
        after = int(np.prod(sizes[i + 1 :])) if i + 1 < len(sizes) else 1
        L = L + np.kron(np.eye(before), np.kron(Li, np.eye(after)))
    return L


def _solver_closure(task, opts):
    N = task.cap()
    out = closure.closure_solve(
        task.model(),
        task.scalar_init(N),
        N,
        task.time,
        rtol=opts.get("rtol", 1e-10),
        backend=opts.get("backend", "direct"),
    )
    return out, {}


def _solver_geometric_tail(task, opts):
    p = task.model_params
    return closure.bd_geometric_tail(
        p.get("lam", 1.05), p.get("mu", 1.0), task.time, task.cap()
    ), {}


def _solver_analytic(task, opts):
    return _analytic_window(task, task.cap()), {}


def _solver_taylor(task, opts):
    N = task.cap()
    p = task.model_params
    lam, mu = p.get("lam", 1.05), p.get("mu", 1.0)
    const = np.zeros(N + 1)
    const[0] = mu
    rhs = PolynomialRhs(linear_coeff=-(lam + mu), quad_coeff=lam, const=const)
    out = taylor_solve(
        rhs,
        task.scalar_init(N),
        task.time,
        steps=int(task.settings.get("steps", opts.get("steps", 200))),
        order=int(opts.get("order", 8)),
    )
    return out, {}


def _scalar_or_joint_generator(task, cap):
    model = task.model()
    if isinstance(model, models.MatrixTelegraphModel):
        return model.joint_generator(cap).toarray(), model
    if isinstance(model, models.HybridModel):
        caps = (cap,) * model.species
        return _hybrid_joint_generator(model, caps), model
    return models.truncate_generator(model, cap).todense(), model


def _project_joint(vec, model, cap, task):
    if isinstance(model, models.MatrixTelegraphModel):
        return vec.reshape(cap + 1, model.n_hidden).T
    if isinstance(model, models.HybridModel) and model.species > 1:
        return vec.reshape((cap + 1,) * model.species)
    return vec


def _joint_p0(model, cap, task):
    if isinstance(model, models.MatrixTelegraphModel):
        init = task.joint_init(model.n_hidden, cap)
        return init.T.ravel()
    if isinstance(model, models.HybridModel) and model.species > 1:
        return task.tensor_init((cap + 1,) * model.species).ravel()
    return task.scalar_init(cap)[: cap + 1]


def _solver_dense_expm(task, opts):
    cap = task.cap()
    L, model = _scalar_or_joint_generator(task, cap)
    E = baselines.dense_expm(L, task.time)
    out = E @ _joint_p0(model, cap, task)
    return _project_joint(out, model, cap, task), {}


def _solver_uniformization(task, opts):
    cap = task.cap()
    L, model = _scalar_or_joint_generator(task, cap)
    out = baselines.uniformization_solve(
        L, _joint_p0(model, cap, task), task.time, tol=opts.get("tol", 1e-12)
    )
    return _project_joint(out, model, cap, task), {}


def _solver_truncated_direct(task, opts):
    cap = task.cap()
    model = task.model()
    L = models.truncate_generator(model, cap)
    out = baselines.truncated_direct_solve(
        L, task.scalar_init(cap)[: cap + 1], task.time, rtol=opts.get("rtol", 1e-10)
    )
    return out, {}


def _solver_strang(task, opts):
    N = task.cap()
    K_s = int(task.settings.get("steps", opts.get("steps", 80)))
    out = splitting.hybrid_strang_solve(
        task.model(),
        task.scalar_init(N)[: N + 1],
        N,
        task.time,
        K_s,
        inner=opts.get("inner", "auto"),
    )
    return out, {"steps": K_s}


def _solver_strang_richardson(task, opts):
    N = task.cap()
    K_s = int(task.settings.get("steps", opts.get("steps", 80)))
    out = splitting.hybrid_strang_richardson_solve(
        task.model(), task.scalar_init(N)[: N + 1], N, task.time, K_s,
        inner=opts.get("inner", "auto"),
    )
    return out, {"steps": K_s}


def _solver_kron_strang(task, opts):
    cap = task.cap()
    model = task.model()
    caps = (cap,) * model.species
    K_s = int(task.settings.get("steps", opts.get("steps", 80)))
    p0 = task.tensor_init(tuple(c + 1 for c in caps))
    out = splitting.kron_strang_solve(
        model.affine, model.remainder_for(caps), p0, task.time, K_s,
        inner=opts.get("inner", "auto"),
    )
    return out, {"steps": K_s}


def _solver_matrix_closure(task, opts):
    M = task.cap()
    model = task.model()
    steps = task.settings.get("steps", opts.get("steps"))
    out = telegraph.matrix_closure_solve(
        model,
        task.joint_init(model.n_hidden, 0),
        M,
        task.time,
        steps=None if steps is None else int(steps),
        rtol=opts.get("rtol", 1e-10),
    )
    return out, {} if steps is None else {"steps": int(steps)}


def _solver_matrix_closure_richardson(task, opts):
    M = task.cap()
    model = task.model()
    steps = int(task.settings.get("steps", opts.get("steps", 200)))
    out = telegraph.matrix_closure_richardson_solve(
        model, task.joint_init(model.n_hidden, 0), M, task.time, steps
    )
    return out, {"steps": steps}


def _solver_purebd_strang(task, opts):
    M = task.cap()
    model = task.model()
    K_s = int(task.settings.get("steps", opts.get("steps", 160)))
    out = telegraph.purebd_strang_solve(
        model, task.joint_init(model.n_hidden, M), M, task.time, K_s,
        inner_steps=int(opts.get("inner_steps", 1)),
    )
    return out, {"steps": K_s}


def _solver_purebd_richardson(task, opts):
    M = task.cap()
    model = task.model()
    K_s = int(task.settings.get("steps", opts.get("steps", 160)))
    out = telegraph.purebd_richardson_solve(
        model, task.joint_init(model.n_hidden, M), M, task.time, K_s,
        inner_steps=int(opts.get("inner_steps", 1)),
    )
    return out, {"steps": K_s}


def _solver_perturbation(task, opts):
    N = task.cap()
    model = task.model()
    eps = float(task.settings.get("eps", opts.get("eps", 1e-3)))
    out = perturbation.perturbation_solve(
        model.affine,
        model.remainder_for(N),
        eps,
        int(opts.get("order", 2)),
        task.time,
        task.scalar_init(N)[: N + 1],
        N,
        subintervals=int(opts.get("subintervals", 40)),
    )
    return out, {"eps": eps}


def _solver_perturbed_dense(task, opts):
    # Dense exponential of affine + eps * remainder (perturbation oracle).
    cap = task.cap()
    model = task.model()
    eps = float(task.settings.get("eps", opts.get("eps", 1e-3)))
    L = models.truncate_generator(model.affine, cap).todense()
    L = L + eps * model.remainder_for(cap).todense()
    out = baselines.dense_expm(L, task.time) @ task.scalar_init(cap)[: cap + 1]
    return out, {"eps": eps}


def _solver_block_thomas(task, opts):
    res = stationary.block_thomas_stationary(task.model(), task.cap())
    return res.distribution, {"residual": res.residual}


def _solver_pgf_fft(task, opts):
    res = stationary.pgf_fft_stationary(
        task.model(),
        task.cap(),
        radius=float(opts.get("radius", 0.5)),
        precision=opts.get("precision", "double"),
    )
    return res.distribution, {"residual": res.residual}


def _solver_forward_iteration(task, opts):
    res = stationary.forward_iteration_stationary(task.model(), task.cap())
    return res.distribution, {"residual": res.residual}


def _solver_dense_stationary(task, opts):
    cap = task.cap()
    L, model = _scalar_or_joint_generator(task, cap)
    out = baselines.dense_stationary(L)
    return _project_joint(out, model, cap, task), {}


def _solver_power_iteration(task, opts):
    cap = task.cap()
    model = task.model()
    dt = float(opts.get("dt", 0.2))
    if isinstance(model, models.HybridModel) and model.species > 1:
        caps = (cap,) * model.species
        B = model.remainder_for(caps)
        shape = tuple(c + 1 for c in caps)

        def step(p):
            return splitting.kron_strang_solve(
                model.affine, B, p.reshape(shape), dt, 1
            ).ravel()

        p0 = task.tensor_init(shape).ravel()
    else:
        gen = model.affine if isinstance(model, models.HybridModel) else model
        T = closure.propagator_matrix(gen, cap, dt)
        step = lambda p: T @ p
        p0 = task.scalar_init(cap)[: cap + 1]
    res = stationary.power_iteration_stationary(
        step, p0, tol=float(opts.get("tol", 1e-12))
    )
    dist = res.distribution
    if isinstance(model, models.HybridModel) and model.species > 1:
        dist = dist.reshape(tuple(cap + 1 for _ in range(model.species)))
    return dist, {"iterations": res.iterations, "residual": res.residual}


_ADAPTERS = {
    "closure": _solver_closure,
    "geometric_tail": _solver_geometric_tail,
    "analytic": _solver_analytic,
    "taylor": _solver_taylor,
    "dense_expm": _solver_dense_expm,
    "uniformization": _solver_uniformization,
    "truncated_direct": _solver_truncated_direct,
    "strang": _solver_strang,
    "strang_richardson": _solver_strang_richardson,
    "kron_strang": _solver_kron_strang,
    "matrix_closure": _solver_matrix_closure,
    "matrix_closure_richardson": _solver_matrix_closure_richardson,
    "purebd_strang": _solver_purebd_strang,
    "purebd_richardson": _solver_purebd_richardson,
    "perturbation": _solver_perturbation,
    "perturbed_dense": _solver_perturbed_dense,
    "block_thomas": _solver_block_thomas,
    "pgf_fft": _solver_pgf_fft,
    "forward_iteration": _solver_forward_iteration,
    "dense_stationary": _solver_dense_stationary,
    "power_iteration": _solver_power_iteration,
}


def available_solvers():
    return sorted(_ADAPTERS)


def error_metric(a, b):
    """In-window l1 distance on raw coefficients (no renormalization).

    Windows of unequal size are compared on the common leading box.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != b.ndim:
        raise ValueError("windows must have matching dimensionality")
    if a.shape != b.shape:
        common = tuple(slice(0, min(x, y)) for x, y in zip(a.shape, b.shape))
        a, b = a[common], b[common]
    return float(np.abs(a - b).sum())


def _run_solver(name, task, opts):
    if name not in _ADAPTERS:
        raise KeyError(f"unknown solver {name!r}; available: {available_solvers()}")
    return _ADAPTERS[name](task, opts)


def run_experiment(config, out_path=None, reps=None, quiet=False, timing=True):
    """Run a configured sweep; returns the record and writes it atomically.

    Per-point solver failures are recorded with an error tag and the run
    continues.  Timings are best-of-``reps`` with one excluded warm-up;
    ``timing=False`` skips the extra runs (seconds are then from the single
    pass and marked accordingly).
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    reps = config.reps if reps is None else reps
    axis = config.sweep["axis"]
    points = []
    ref_cache = {}
    for value in config.sweep["values"]:
        settings = dict(config.fixed)
        settings[axis] = value
        task = Task(
            model_name=config.model["name"],
            model_params=dict(config.model.get("params", {})),
            initial=dict(config.initial),
            time=float(settings.get("time", config.time)),
            settings=settings,
        )
        ref_out = None
        ref_spec = config.reference
        if ref_spec.get("solver", "self") != "self":
            ref_settings = dict(settings)
            ref_settings.update(ref_spec.get("settings", {}))
            key = json.dumps(ref_settings, sort_keys=True)
            if key not in ref_cache:
                ref_task = Task(
                    model_name=config.model["name"],
                    model_params=dict(config.model.get("params", {})),
                    initial=dict(config.initial),
                    time=float(ref_settings.get("time", config.time)),
                    settings=ref_settings,
                )
                ref_cache[key], _ = _run_solver(
                    ref_spec["solver"], ref_task, dict(ref_spec.get("options", {}))
                )
            ref_out = ref_cache[key]
        for solver in config.solvers:
            opts = dict(solver.get("options", {}))
            adapter = solver.get("solver", solver["name"])
            record = {"solver": solver["name"], "axis": {axis: value}}
            try:
                t0 = time.perf_counter()
                out, stats = _run_solver(adapter, task, opts)
                first = time.perf_counter() - t0
                if timing:
                    best = np.inf
                    for _ in range(max(1, reps)):
                        t0 = time.perf_counter()
                        out, stats = _run_solver(adapter, task, opts)
                        best = min(best, time.perf_counter() - t0)
                else:
                    best = first
                record["seconds"] = best
                record["l1_error"] = (
                    0.0 if ref_out is None else error_metric(out, ref_out)
                )
                record["stats"] = stats
                record["error"] = None
            except Exception as exc:  # failure recorded, run continues
                record["seconds"] = None
                record["l1_error"] = None
                record["stats"] = {}
                record["error"] = f"{type(exc).__name__}: {exc}"
            points.append(record)
            if not quiet:
                err = record["error"] or f"l1={record['l1_error']:.3e} t={record['seconds']:.4f}s"
                print(f"[{config.name}] {solver['name']} {axis}={value}: {err}")
    record = {
        "schema": RESULT_SCHEMA,
        "name": config.name,
        "config": _config_to_dict(config),
        "points": points,
    }
    out_path = out_path or config.output
    if out_path:
        _write_json_atomic(record, out_path)
    return record


def _config_to_dict(config):
    return {
        "schema": CONFIG_SCHEMA,
        "name": config.name,
        "model": config.model,
        "solvers": config.solvers,
        "sweep": config.sweep,
        "reference": config.reference,
        "time": config.time,
        "initial": config.initial,
        "fixed": config.fixed,
        "reps": config.reps,
        "output": config.output,
    }


def _write_json_atomic(record, path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(record, fh, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- method selection ---------------------------------------------------------


def recommend(descriptor):
    """Map a generator-structure descriptor to the method to try first.

    Descriptor fields (all optional, default False/1):
      linear_rate, binary_fission, matrix_valued, remainder, small_eps,
      stationary, K (species count).
    Returns {"method": ..., "rationale": ...} deterministically.
    """
    d = dict(descriptor)
    K = int(d.get("K", 1))
    linear = bool(d.get("linear_rate", False))
    stationary_q = bool(d.get("stationary", False))
    remainder = bool(d.get("remainder", False))

    if stationary_q:
        if linear and d.get("matrix_valued"):
            return {
                "method": "block_thomas",
                "rationale": "hidden-state level recurrence is block-tridiagonal; "
                "backward elimination is stable at O(M n_T^3), with the contour "
                "extraction as the fast small-M alternative",
            }
        if remainder:
            return {
                "method": "power_iteration",
                "rationale": "hybrid generator on a product space: iterate the "
                "one-step splitting map with renormalization to its fixed point",
            }
        if linear:
            return {
                "method": "dense_stationary",
                "rationale": "augmented linear solve is exact at desk-scale caps "
                "for a single count axis",
            }
        return {
            "method": "dense_stationary",
            "rationale": "no exploitable rate structure; solve the truncated "
            "balance equations directly",
        }
    if linear and d.get("binary_fission") and K == 1:
        return {
            "method": "geometric_tail",
            "rationale": "closed-form extinction probability and geometric tail "
            "exist; no ODE integration or truncated generator needed",
        }
    if linear and d.get("matrix_valued"):
        return {
            "method": "matrix_closure",
            "rationale": "scalar drift keeps the characteristic scalar; one "
            "hidden-block per count level, exact on the count window",
        }
    if linear and K == 1:
        return {
            "method": "closure",
            "rationale": "exact-in-window coefficient ODE; the cap is output "
            "resolution, not an artificial boundary",
        }
    if linear:
        return {
            "method": "multi_closure",
            "rationale": "multi-index coefficient ODE stays exact on the box and "
            "avoids the dense joint exponential, which is infeasible past K = 2",
        }
    if remainder and d.get("small_eps"):
        return {
            "method": "perturbation",
            "rationale": "small coupling: each order costs one quadrature against "
            "the exact affine propagator; check the eps^(K+1) slope",
        }
    if remainder and K >= 2:
        return {
            "method": "kron_strang",
            "rationale": "product state space with an affine part per species: "
            "mode-wise half-step kernels never materialize the joint propagator",
        }
    if remainder:
        return {
            "method": "strang_rosenbrock",
            "rationale": "affine half handled exactly by the closure kernel; the "
            "sparse remainder advances by a banded linearly-implicit step",
        }
    return {
        "method": "truncated_dense",
        "rationale": "no linear-rate structure to exploit; fall back to standard "
        "truncation with a dense or sparse exponential",
    }
