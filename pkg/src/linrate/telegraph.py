"""Matrix-valued closure for hidden-state models with scalar drift, plus the
pure-degradation Strang split.

With every hidden state sharing one degradation rate mu, the characteristic
stays scalar, Phi_t(z) = 1 - (1 - z) e^{-mu t}, and the multiplier lifts to
matrix blocks K^(m) solving the lower-triangular system

    dK^(m)/dt = K^(m) (A + phi0(t) B) + phi1(t) K^(m-1) B,

phi0 = 1 - e^{-mu t}, phi1 = e^{-mu t}, K^(m-1) = 0 at m = 0.  The blocks
multiply the hidden-state generator from the right: the multiplier is the
time-ordered product accumulated backward along the characteristic, and
for non-commuting A, B only this ordering reproduces the joint dynamics
(checked against dense exponentials of the truncated joint generator); at
n_T = 1 both orderings coincide.

The split solvers advance the joint (hidden, count) array by exact
binomial thinning (pure degradation) and a lower-triangular production
step, composed symmetrically; neither half imposes a boundary at the
count cap.
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import thinning_matrix_kernel
from .integrators import OdeProblem, rk45_solve


@dataclass
class MatrixMultiplierState:
    """Blocks K^(0..M), each n_T x n_T, at time t."""

    blocks: np.ndarray  # shape (M+1, n_T, n_T)
    t: float
    mu: float

    @property
    def count_cap(self):
        return self.blocks.shape[0] - 1


def telegraph_characteristic(mu, t, z):
    """Closed-form scalar characteristic 1 - (1 - z) e^{-mu t}."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return 1.0 - (1.0 - z) * np.exp(-mu * t)


def _multiplier_rhs(model, t, blocks):
    phi1 = np.exp(-model.mu * t)
    phi0 = 1.0 - phi1
    coupled = model.A + phi0 * model.B
    out = blocks @ coupled  # batched over the leading (count) axis
    out[1:] += phi1 * (blocks[:-1] @ model.B)
    return out


def integrate_matrix_multiplier(model, M, t, steps=None, rtol=1e-10):
    """Integrate the block multiplier ODE on counts {0..M}.

    ``steps`` selects fixed-step RK4 (batched matrix products); omitting it
    uses the adaptive embedded pair at ``rtol``.  Block m reads only blocks
    <= m, so no boundary block is needed above M.
    """
    nT = model.n_hidden
    blocks0 = np.zeros((M + 1, nT, nT))
    blocks0[0] = np.eye(nT)
    if t == 0.0:
        return MatrixMultiplierState(blocks=blocks0, t=0.0, mu=model.mu)
    if steps is not None:
        if steps < 1:
            raise ValueError("steps must be >= 1")
        h = t / steps
        blocks = blocks0
        tt = 0.0
        for _ in range(steps):
            k1 = _multiplier_rhs(model, tt, blocks)
            k2 = _multiplier_rhs(model, tt + h / 2, blocks + (h / 2) * k1)
            k3 = _multiplier_rhs(model, tt + h / 2, blocks + (h / 2) * k2)
            k4 = _multiplier_rhs(model, tt + h, blocks + h * k3)
            blocks = blocks + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            tt += h
        return MatrixMultiplierState(blocks=blocks, t=t, mu=model.mu)

    shape = blocks0.shape

    def rhs(_t, y):
        return _multiplier_rhs(model, _t, y.reshape(shape)).ravel()

    y, _ = rk45_solve(
        OdeProblem(rhs, blocks0.ravel(), (0.0, float(t))), rtol=rtol, atol=rtol * 1e-3
    )
    return MatrixMultiplierState(blocks=y.reshape(shape), t=float(t), mu=model.mu)


def matrix_closure_solve(model, init, M, t, steps=None, rtol=1e-10):
    """Joint (hidden, count) weights at time t from initial JointArray ``init``.

    ``init`` has shape (n_T, M0+1) with count support {0..M0}.  The answer
    composes the multiplier blocks with the binomially thinned initial
    counts; for support at m = 0 it reduces to blockwise K^(m) @ init[:, 0].
    """
    init = np.atleast_2d(np.asarray(init, dtype=float))
    nT = model.n_hidden
    if init.shape[0] != nT:
        raise ValueError("init must have one row per hidden state")
    state = integrate_matrix_multiplier(model, M, t, steps=steps, rtol=rtol)
    phi1 = np.exp(-model.mu * t)
    phi0 = 1.0 - phi1
    M0 = init.shape[1] - 1
    # v[:, j] = [w^j] of sum_m init[:, m] Phi(w)^m  (binomial in the linear Phi).
    thin = np.zeros((M + 1, nT))
    size = max(M0 + 1, 1)
    binom = np.zeros((size, size))
    binom[:, 0] = phi0 ** np.arange(size)
    for m in range(1, size):
        for j in range(1, m + 1):
            binom[m, j] = phi1 * binom[m - 1, j - 1] + phi0 * binom[m - 1, j]
    for j in range(min(M, M0) + 1):
        thin[j] = init @ binom[:, j]
    # Convolve blocks with the thinned vector coefficients.
    out = np.zeros((nT, M + 1))
    for m in range(M + 1):
        jmax = min(m, M0)
        for j in range(jmax + 1):
            out[:, m] += state.blocks[m - j] @ thin[j]
    return out


def binomial_thinning_half(P, mu, dt):
    """Exact pure-death propagation of each hidden-state row of P.

    P'[a, n] = sum_{m >= n} P[a, m] C(m, n) s^n (1-s)^{m-n}, s = e^{-mu dt};
    the summation is capped at the window, which is exact because pure death
    moves mass only downward.  dt < 0 is rejected (the kernel is undefined
    there).
    """
    if dt < 0:
        raise ValueError("binomial thinning is undefined for negative dt")
    P = np.asarray(P, dtype=float)
    if dt == 0.0:
        return P.copy()
    size = P.shape[1]
    s = np.exp(-mu * dt)
    T = np.empty((size, size))
    thinning_matrix_kernel(size, s, T)
    return P @ T


def production_half_step(P, model, dt, inner_steps=1):
    """Advance dP_m/dt = A P_m + B P_{m-1} (P_{-1} = 0) by fixed-step RK4.

    Lower-triangular in the count index: no boundary column beyond the
    window is read or imposed.
    """
    if inner_steps < 1:
        raise ValueError("inner_steps must be >= 1")
    P = np.asarray(P, dtype=float)
    if dt == 0.0:
        return P.copy()
    h = dt / inner_steps

    def rhs(Q):
        out = model.A @ Q
        out[:, 1:] += model.B @ Q[:, :-1]
        return out

    for _ in range(inner_steps):
        k1 = rhs(P)
        k2 = rhs(P + (h / 2) * k1)
        k3 = rhs(P + (h / 2) * k2)
        k4 = rhs(P + h * k3)
        P = P + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return P


def purebd_strang_solve(model, init, M, T, K_s, inner_steps=1):
    """Strang composition thinning(dt/2) o production(dt) o thinning(dt/2).

    Both halves are closed on the window (thinning exactly, production
    lower-triangularly), so the error is the dt^2 splitting commutator.
    """
    if K_s < 1:
        raise ValueError("K_s must be >= 1")
    P = np.atleast_2d(np.asarray(init, dtype=float)).copy()
    if P.shape[1] != M + 1:
        padded = np.zeros((P.shape[0], M + 1))
        padded[:, : P.shape[1]] = P
        P = padded
    dt = T / K_s
    for _ in range(K_s):
        P = binomial_thinning_half(P, model.mu, dt / 2)
        P = production_half_step(P, model, dt, inner_steps=inner_steps)
        P = binomial_thinning_half(P, model.mu, dt / 2)
    return P


def purebd_richardson_solve(model, init, M, T, K_s, inner_steps=1):
    """Order-2 Richardson pair of Strang runs at K_s and 2 K_s steps:
    (4 P_{2K} - P_K) / 3 cancels the leading dt^2 commutator, leaving dt^4
    (the symmetric composition has an even error expansion)."""
    coarse = purebd_strang_solve(model, init, M, T, K_s, inner_steps=inner_steps)
    fine = purebd_strang_solve(model, init, M, T, 2 * K_s, inner_steps=inner_steps)
    return (4.0 * fine - coarse) / 3.0


def matrix_closure_richardson_solve(model, init, M, t, steps):
    """Order-4 Richardson pair of fixed-step RK4 closure runs at ``steps``
    and 2*steps: (16 P_{2K} - P_K) / 15 cancels the leading h^4 RK4 error."""
    coarse = matrix_closure_solve(model, init, M, t, steps=steps)
    fine = matrix_closure_solve(model, init, M, t, steps=2 * steps)
    return (16.0 * fine - coarse) / 15.0
