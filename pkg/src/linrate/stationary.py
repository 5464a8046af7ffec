"""Steady-state solvers for hidden-state (telegraph-class) models and
hybrid product-space systems.

The capped stationary system is block-tridiagonal in the count level m with
n_T hidden phases.  ``block_thomas_stationary`` propagates the relation
P_m = R_m P_{m+1} backward (R_0 = -mu A^{-1}), closes the terminal level by
the smallest right singular direction, and back-substitutes: O(M n_T^3)
work and stable, unlike the naive forward parameterization
(``forward_iteration_stationary``), which amplifies roundoff modes and is
kept only as a diagnostic.  ``pgf_fft_stationary`` integrates the
stationary generating-function ODE from a Frobenius seed at the
regular-singular point z = 1, sweeps a circle of radius r, and extracts
Taylor coefficients by an inverse DFT; the r^{-m} Cauchy amplification
bounds its double-precision validity to m with r^{-m} eps < tolerance.
``power_iteration_stationary`` iterates a one-step splitting map to its
dominant fixed point with renormalization, optionally removing the leading
dt^2 stationary bias by a Richardson pair at dt and dt/2.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class StationaryResult:
    distribution: np.ndarray
    residual: float
    iterations: int


class StationarySolveError(RuntimeError):
    def __init__(self, message, level=None, residual=None, state=None):
        super().__init__(message)
        self.level = level
        self.residual = residual
        self.state = state


def _hidden_stationary(A, B):
    """Normalized null vector of A+B; raises unless it is one-dimensional."""
    n = A.shape[0]
    if n == 1:
        return np.array([1.0])
    u, s, vt = np.linalg.svd(A + B)
    if s.size > 1 and s[-2] <= 1e-10 * max(s[0], 1.0):
        raise StationarySolveError("hidden-state null space is not one-dimensional")
    pi = vt[-1]  # right null vector: (A+B) pi = 0
    resid = np.abs((A + B) @ pi).max()
    if resid > 1e-8 * max(np.abs(A + B).max(), 1.0):
        raise StationarySolveError("hidden-state stationary seed failed")
    if pi.sum() < 0:
        pi = -pi
    return pi / pi.sum()


def _residual_l1(model, P, exclude_cap_row=True):
    M = P.shape[1] - 1
    L = model.joint_generator(M)
    r = L @ P.T.ravel()
    resid = np.abs(r.reshape(M + 1, model.n_hidden))
    if exclude_cap_row:
        resid = resid[:-1]
    return float(resid.sum())


def block_thomas_stationary(model, M):
    """Stationary joint (hidden, count) law by backward block elimination.

    The residual reported excludes the cap level, whose defect is the
    absorbed out-of-window flux.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    A, B, mu = model.A, model.B, model.mu
    nT = model.n_hidden
    if not B.any():
        pi = _hidden_stationary(A, B)
        P = np.zeros((nT, M + 1))
        P[:, 0] = pi
        return StationaryResult(distribution=P, residual=_residual_l1(model, P), iterations=M)
    R = np.empty((M, nT, nT))
    try:
        R[0] = np.linalg.solve(A, -mu * np.eye(nT))
    except np.linalg.LinAlgError as exc:
        raise StationarySolveError("transcript-free block A is singular", level=0) from exc
    for m in range(1, M):
        stage = B @ R[m - 1] + A - mu * m * np.eye(nT)
        try:
            R[m] = np.linalg.solve(stage, -mu * (m + 1) * np.eye(nT))
        except np.linalg.LinAlgError as exc:
            raise StationarySolveError(f"singular stage matrix at level {m}", level=m) from exc
    terminal = B @ R[M - 1] + A - mu * M * np.eye(nT)
    _, _, vt = np.linalg.svd(terminal)
    P = np.empty((nT, M + 1))
    P[:, M] = vt[-1]
    for m in range(M - 1, -1, -1):
        P[:, m] = R[m] @ P[:, m + 1]
    total = P.sum()
    if total == 0.0:
        raise StationarySolveError("terminal direction carries no mass", level=M)
    P /= total
    return StationaryResult(distribution=P, residual=_residual_l1(model, P), iterations=M)


def forward_iteration_stationary(model, M):
    """Diagnostic-only naive forward parameterization P_m = L_m P_0.

    Unconditionally unstable: roundoff in the growing modes of -A/mu
    overruns the decaying solution.  Overflow is reported through the
    residual, never raised.
    """
    A, B, mu = model.A, model.B, model.mu
    nT = model.n_hidden
    Ls = np.zeros((M + 1, nT, nT))
    Ls[0] = np.eye(nT)
    with np.errstate(all="ignore"):
        if M >= 1:
            Ls[1] = -A / mu
        for m in range(1, M):
            Ls[m + 1] = ((mu * m * np.eye(nT) - A) @ Ls[m] - B @ Ls[m - 1]) / (mu * (m + 1))
        pi = _hidden_stationary(A, B)
        S = Ls.sum(axis=0)
        try:
            P0 = np.linalg.solve(S, pi)
        except np.linalg.LinAlgError:
            P0 = np.full(nT, np.nan)
        # No renormalization: the mass constraint sum_m L_m P0 = pi already
        # fixes the total in exact arithmetic, and rescaling would mask the
        # roundoff blow-up this diagnostic exists to demonstrate.
        P = np.einsum("mij,j->im", Ls, P0)
    if not np.all(np.isfinite(P)):
        return StationaryResult(distribution=P, residual=float("inf"), iterations=M)
    return StationaryResult(
        distribution=P, residual=_residual_l1(model, P, exclude_cap_row=True), iterations=M
    )


def _radial_sweep(model, z_end, seed_eps, steps, dtype=float):
    """Integrate W(u) = Z(1-u) from u = seed_eps to u = 1 - z_end in
    s = ln u (the substitution removes the regular singularity)."""
    A = model.A.astype(dtype)
    B = model.B.astype(dtype)
    mu = dtype(model.mu)
    pi = _hidden_stationary(model.A, model.B)
    W1 = np.linalg.solve(model.A + model.B - model.mu * np.eye(model.n_hidden), model.B @ pi)
    W = pi.astype(dtype) + dtype(seed_eps) * W1.astype(dtype)
    s0, s1 = np.log(dtype(seed_eps)), np.log(dtype(1.0) - dtype(z_end))
    h = (s1 - s0) / dtype(steps)
    s = s0

    def rhs(s_val, w):
        u = np.exp(s_val)
        return (A + (dtype(1.0) - u) * B) @ w / mu

    for _ in range(steps):
        k1 = rhs(s, W)
        k2 = rhs(s + h / 2, W + (h / 2) * k1)
        k3 = rhs(s + h / 2, W + (h / 2) * k2)
        k4 = rhs(s + h, W + h * k3)
        W = W + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
    return W


def pgf_fft_stationary(
    model,
    M,
    radius=0.5,
    nodes=None,
    seed_eps=1e-6,
    radial_steps=4000,
    circle_substeps=None,
    precision="double",
):
    """Contour-FFT extraction of the stationary count coefficients.

    Frobenius seed at z = 1, radial integration to z = radius, RK4 sweep of
    the circle |z| = radius at ``nodes`` points (power of two >= 2(M+1);
    default next power of two >= 4(M+1)), inverse DFT, r^{-m} rescale,
    renormalize.  ``circle_substeps`` defaults to a generator-norm-scaled
    count keeping the per-stage angle increment small; sample-level
    truncation and roundoff are both amplified by r^{-m}, which bounds the
    extraction's per-m validity.  ``precision='extended'`` runs the whole
    pipeline in extended precision (longdouble) behind the same interface.
    """
    if not 0.0 < radius < 1.0:
        raise ValueError("radius must lie in (0, 1)")
    if nodes is None:
        nodes = 1
        while nodes < 4 * (M + 1):
            nodes *= 2
    if nodes < 2 * (M + 1) or nodes & (nodes - 1):
        raise ValueError("nodes must be a power of two >= 2(M+1)")
    mu = model.mu
    nT = model.n_hidden
    if circle_substeps is None:
        rhs_scale = (
            (np.abs(model.A).sum(axis=0).max() + np.abs(model.B).sum(axis=0).max())
            * radius
            / (mu * (1.0 - radius))
        )
        circle_substeps = max(8, int(np.ceil(rhs_scale * (2 * np.pi / nodes) / 0.004)))

    extended = precision == "extended"
    rdtype = np.longdouble if extended else np.float64
    cdtype = np.clongdouble if extended else np.complex128
    Zr = _radial_sweep(model, radius, seed_eps, radial_steps, dtype=rdtype)
    A_c = model.A.astype(cdtype)
    B_c = model.B.astype(cdtype)
    mu_c = rdtype(mu)
    one = rdtype(1.0)
    r_c = rdtype(radius)

    def rhs(z, w):
        return -((A_c + z * B_c) @ w) * z * 1j / (mu_c * (one - z))

    W = Zr.astype(cdtype)
    samples = np.empty((nodes, nT), dtype=cdtype)
    h = (2 * np.pi / rdtype(nodes)) / rdtype(circle_substeps)
    theta = rdtype(0.0)
    for q in range(nodes):
        samples[q] = W
        for _ in range(circle_substeps):
            z1 = r_c * np.exp(1j * theta)
            z2 = r_c * np.exp(1j * (theta + h / 2))
            z3 = r_c * np.exp(1j * (theta + h))
            k1 = rhs(z1, W)
            k2 = rhs(z2, W + (h / 2) * k1)
            k3 = rhs(z2, W + (h / 2) * k2)
            k4 = rhs(z3, W + h * k3)
            W = W + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            theta += h
    if extended:
        m_idx = np.arange(M + 1)
        q_idx = np.arange(nodes)
        coeffs = np.empty((M + 1, nT), dtype=np.clongdouble)
        for m in m_idx:
            phases = np.exp(np.clongdouble(-2j) * np.pi * m * q_idx / nodes)
            coeffs[m] = (samples * phases[:, None]).sum(axis=0) / nodes
        P = coeffs.real.T.astype(np.longdouble)
        scale = np.longdouble(radius) ** (-m_idx)
    else:
        coeffs = np.fft.fft(samples.astype(np.complex128), axis=0)[: M + 1] / nodes
        P = coeffs.real.T
        scale = radius ** (-np.arange(M + 1.0))
    P = P * scale[None, :]
    P = np.asarray(P, dtype=float)
    # The Frobenius seed carries the exact normalization (Z(1) sums to 1),
    # so the extraction is already on the probability scale.  Dividing by
    # the window total is a pure polish and is applied only when it is a
    # no-op-level correction: the total mixes in r^{-m}-amplified roundoff
    # and the true out-of-window tail, and dividing by that would smear
    # both across the valid low-m range.
    total = P.sum()
    if total != 0.0 and abs(total - 1.0) <= 1e-10:
        P = P / total
    return StationaryResult(distribution=P, residual=_residual_l1(model, P), iterations=nodes)


def pgf_fft_valid_range(M, radius, floor=1e-10, eps=None):
    """Largest m with radius^{-m} * eps < floor (the per-m precision
    validity bound of the contour extraction); eps defaults to double
    machine epsilon."""
    eps = np.finfo(float).eps if eps is None else float(eps)
    m = np.arange(M + 1)
    ok = radius ** (-m.astype(float)) * eps < floor
    return int(m[ok][-1]) if ok.any() else -1


def power_iteration_stationary(step_map, p0, tol=1e-12, max_iters=20000, step_map_half=None):
    """Fixed point of a renormalized one-step map, with optional
    Richardson-in-dt bias removal from a second map at half the step.

    The reported residual is the final l1 step-change of the iteration.
    """

    def fixed_point(mapper):
        p = np.asarray(p0, dtype=float)
        p = p / p.sum()
        its = 0
        q = mapper(p)
        q = q / q.sum()
        delta = np.abs(q - p).sum()
        while delta >= tol:
            p = q
            its += 1
            if its >= max_iters:
                raise StationarySolveError(
                    "power iteration did not converge", residual=delta, state=p
                )
            q = mapper(p)
            q = q / q.sum()
            delta = np.abs(q - p).sum()
        return q, delta, its

    x, delta, its = fixed_point(step_map)
    if step_map_half is None:
        return StationaryResult(distribution=x, residual=delta, iterations=its)
    x_half, delta_half, its_half = fixed_point(step_map_half)
    combined = (4.0 * x_half - x) / 3.0
    return StationaryResult(
        distribution=combined, residual=max(delta, delta_half), iterations=its + its_half
    )
