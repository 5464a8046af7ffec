"""Generic Strang composition, Richardson extrapolation, and the
Kronecker-factored multi-species Strang solver.

One Strang step is affine-half o remainder-full o affine-half.  The affine
half is an in-window closure kernel built once per step size and reused;
the remainder full step is advanced by a stiff linearly-implicit solve when
the remainder declares a band, and by a uniformization action otherwise.
For product state spaces the affine half factorizes into per-species
kernels applied as mode-wise dense matrix products; the joint affine
propagator is never materialized.
"""

from dataclasses import dataclass

import numpy as np

from .baselines import expv_uniformized
from .closure import propagator_matrix
from .integrators import OdeProblem, rosenbrock_solve


@dataclass
class PropagatorHalf:
    """A state-to-state map tagged with its substep duration and whether it
    is closed-form (exact) or integrator-based."""

    apply: object
    duration: float
    exact: bool = False

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("substep duration must be nonnegative")

    def __call__(self, state):
        return self.apply(state)


def affine_half_from_generator(gen, N, dt_half, rtol=1e-12, backend="direct"):
    """Closure-kernel half step: columns are composition-kernel columns at
    dt_half, so no boundary closure is imposed at N+1."""
    T = propagator_matrix(gen, N, dt_half, rtol=rtol, backend=backend)
    return PropagatorHalf(apply=lambda p: T @ p, duration=dt_half, exact=True)


def remainder_full_step(B, dt, inner="auto", rtol=1e-12, atol=None):
    """Full-step propagator for the non-affine remainder.

    ``inner='rosenbrock'`` integrates with banded/sparse stage solves;
    ``inner='uniformization'`` applies the Poisson-series action (requires a
    proper sub-generator).  ``'auto'`` picks rosenbrock when a band is
    declared, uniformization otherwise.
    """
    if inner == "auto":
        inner = "rosenbrock" if B.bandwidth is not None else "uniformization"
    atol = rtol * 1e-2 if atol is None else atol
    if inner == "rosenbrock":
        if B.bandwidth is not None:
            jac = ("banded", *B.to_banded())
        else:
            jac = ("sparse", B.matrix)

        def apply(p):
            y, _ = rosenbrock_solve(
                OdeProblem(lambda _t, v: B @ v, p, (0.0, dt), jacobian=jac),
                rtol=rtol,
                atol=atol,
            )
            return y

        return PropagatorHalf(apply=apply, duration=dt, exact=False)
    if inner == "uniformization":
        return PropagatorHalf(
            apply=lambda p: expv_uniformized(B.matrix, p, dt, tol=1e-14),
            duration=dt,
            exact=False,
        )
    raise ValueError(f"unknown inner engine {inner!r}")


def strang_solve(affine_half, remainder_full, p0, K_s):
    """K_s symmetric compositions affine-half o remainder o affine-half."""
    if K_s < 1:
        raise ValueError("K_s must be >= 1")
    p = np.asarray(p0, dtype=float).copy()
    for _ in range(K_s):
        p = affine_half(p)
        p = remainder_full(p)
        p = affine_half(p)
    return p


def hybrid_strang_solve(model, p0, N, T, K_s, inner="auto", inner_rtol=1e-12, kernel_rtol=1e-12):
    """Strang solver for a scalar HybridModel on the window {0..N}.

    The affine half-step kernel is built once and reused across all K_s
    steps (a dense (N+1)^2 matvec per half); the remainder full step uses
    the selected inner engine against the remainder's sparsity.
    """
    dt = T / K_s
    affine_half = affine_half_from_generator(model.affine, N, dt / 2, rtol=kernel_rtol)
    B = model.remainder_for(N)
    remainder = remainder_full_step(B, dt, inner=inner, rtol=inner_rtol)
    return strang_solve(affine_half, remainder, p0, K_s)


def richardson_combine(run_K, run_2K, order=2):
    """(2^p run_2K - run_K) / (2^p - 1): cancels the leading h^p error of a
    pair of step-refined runs."""
    run_K = np.asarray(run_K, dtype=float)
    run_2K = np.asarray(run_2K, dtype=float)
    if run_K.shape != run_2K.shape:
        raise ValueError("runs must have equal shape")
    if order not in (2, 4):
        raise ValueError("supported extrapolation orders: 2, 4")
    w = 2.0**order
    return (w * run_2K - run_K) / (w - 1.0)


def hybrid_strang_richardson_solve(model, p0, N, T, K_s, order=2, **kwargs):
    """Richardson pair of hybrid Strang runs at K_s and 2 K_s steps."""
    coarse = hybrid_strang_solve(model, p0, N, T, K_s, **kwargs)
    fine = hybrid_strang_solve(model, p0, N, T, 2 * K_s, **kwargs)
    return richardson_combine(coarse, fine, order=order)


def _mode_apply(U, tensor, axis):
    out = np.tensordot(U, tensor, axes=([1], [axis]))
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


def kron_strang_solve(
    per_species_affine,
    remainder,
    p0,
    T,
    K_s,
    inner="auto",
    inner_rtol=1e-12,
    kernel_rtol=1e-12,
):
    """Kronecker-factored Strang solver on a joint tensor window.

    Each species' windowed affine propagator (a closure kernel at dt/2) is
    applied along its own axis as a dense mode product; the remainder full
    step runs on the flattened joint vector via the selected inner engine.
    """
    p0 = np.asarray(p0, dtype=float)
    K = p0.ndim
    if len(per_species_affine) != K:
        raise ValueError("need one affine generator per tensor axis")
    if remainder.dimension != p0.size:
        raise ValueError("remainder dimension must match the joint box")
    dt = T / K_s
    kernels = [
        propagator_matrix(gen, p0.shape[i] - 1, dt / 2, rtol=kernel_rtol)
        for i, gen in enumerate(per_species_affine)
    ]
    rem = remainder_full_step(remainder, dt, inner=inner, rtol=inner_rtol)
    p = p0.copy()
    for _ in range(K_s):
        for i, U in enumerate(kernels):
            p = _mode_apply(U, p, i)
        p = rem(p.ravel()).reshape(p.shape)
        for i, U in enumerate(kernels):
            p = _mode_apply(U, p, i)
    return p


def kron_strang_richardson_solve(per_species_affine, remainder, p0, T, K_s, order=2, **kwargs):
    coarse = kron_strang_solve(per_species_affine, remainder, p0, T, K_s, **kwargs)
    fine = kron_strang_solve(per_species_affine, remainder, p0, T, 2 * K_s, **kwargs)
    return richardson_combine(coarse, fine, order=order)
