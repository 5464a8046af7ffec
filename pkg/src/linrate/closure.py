"""Scalar composition-multiplier closure.

For a linear-rate generator with drift A(z) and source B(z), the
characteristic flow and multiplier expand as Phi_t(z) = sum phi_k z^k,
K_t(z) = sum kappa_k z^k, and their coefficients on {0..N} satisfy the
closed lower-triangular ODE

    phi_n' = [z^n] A(Phi),      kappa_n' = [z^n] (B(Phi) K),

with initial data phi = delta_1, kappa = delta_0.  No boundary value is
imposed at N+1: level n reads only levels <= n.  The in-window output for
initial weights pi supported on {0..M0} is x_n(t) = sum_m pi_m [z^n] K Phi^m.
"""

from dataclasses import dataclass

import numpy as np

from . import series
from .integrators import IntegrationFailure, OdeProblem, rk45_solve
from .models import polynomials_of

DEFAULT_BLOWUP_GUARD = 1e12


class ClosureBlowUp(RuntimeError):
    """The characteristic coefficients left the guard region before the
    requested time (finite existence interval of a signed or non-stochastic
    instance)."""

    def __init__(self, t_reached, guard):
        super().__init__(
            f"characteristic blow-up: coefficient magnitude exceeded {guard:g} "
            f"near t = {t_reached:.6g}"
        )
        self.t_reached = t_reached
        self.guard = guard


@dataclass
class ClosureState:
    """Coefficients of the characteristic flow and multiplier at time t."""

    phi: np.ndarray
    kappa: np.ndarray
    t: float

    @property
    def cap(self):
        return self.phi.shape[0] - 1

    @classmethod
    def initial(cls, N):
        phi = np.zeros(N + 1)
        if N >= 1:
            phi[1] = 1.0
        kappa = series.delta_window(N)
        return cls(phi=phi, kappa=kappa, t=0.0)


def closure_rhs(state, pair, backend="direct", workspace=None):
    """Time derivatives (phi', kappa') of the coefficient ODE.

    Level n of either output reads only levels <= n of the inputs (exactly,
    not just to round-off) when the direct backend is used.
    """
    if state.phi.shape != state.kappa.shape:
        raise ValueError("phi and kappa caps must agree")
    phi_dot = series.compose_polynomial(
        pair.A_coeffs, state.phi, backend=backend, workspace=workspace
    )
    b_of_phi = series.compose_polynomial(
        pair.B_coeffs, state.phi, backend=backend, workspace=workspace
    )
    if backend == "fft":
        kappa_dot = series.fft_cauchy_product(b_of_phi, state.kappa, workspace=workspace)
    else:
        kappa_dot = series.cauchy_product(b_of_phi, state.kappa)
    return phi_dot, kappa_dot


def integrate_closure(
    gen,
    N,
    t,
    rtol=1e-10,
    atol=None,
    blowup_guard=DEFAULT_BLOWUP_GUARD,
    backend="direct",
):
    """Integrate the coefficient ODE to time t on the window {0..N}.

    Raises :class:`ClosureBlowUp` when any |phi_n| exceeds ``blowup_guard``
    (finite existence time of signed instances); the guard is checked on
    accepted steps.
    """
    pair = polynomials_of(gen)
    init = ClosureState.initial(N)
    if t == 0.0:
        return init
    atol = rtol * 1e-3 if atol is None else atol
    n1 = N + 1
    workspace = series.FftWorkspace((n1,)) if backend == "fft" else None

    def rhs(_t, y):
        st = ClosureState(phi=y[:n1], kappa=y[n1:], t=_t)
        phi_dot, kappa_dot = closure_rhs(st, pair, backend=backend, workspace=workspace)
        return np.concatenate([phi_dot, kappa_dot])

    def guard(_t, y):
        phi_part = y[:n1]
        if not np.all(np.isfinite(y)) or np.abs(phi_part).max() > blowup_guard:
            raise ClosureBlowUp(t_reached=_t, guard=blowup_guard)

    y0 = np.concatenate([init.phi, init.kappa])
    problem = OdeProblem(rhs, y0, (0.0, float(t)))
    try:
        y, _ = rk45_solve(problem, rtol=rtol, atol=atol, post_step=guard)
    except IntegrationFailure as exc:
        state = exc.state if exc.state is not None else y0
        if not np.all(np.isfinite(state)) or np.abs(state[:n1]).max() > blowup_guard * 1e-3:
            raise ClosureBlowUp(t_reached=exc.t, guard=blowup_guard) from exc
        raise
    return ClosureState(phi=y[:n1], kappa=y[n1:], t=float(t))


def composition_kernel(state, M0, backend="direct"):
    """Kernel matrix T of shape (N+1, M0+1): column m holds the truncated
    coefficients of K_t(z) * Phi_t(z)^m."""
    if M0 < 0:
        raise ValueError("initial support cap must be nonnegative")
    N = state.cap
    T = np.empty((N + 1, M0 + 1))
    T[:, 0] = state.kappa
    workspace = series.FftWorkspace((N + 1,)) if backend == "fft" else None
    for m in range(1, M0 + 1):
        if backend == "fft":
            T[:, m] = series.fft_cauchy_product(T[:, m - 1], state.phi, workspace=workspace)
        else:
            T[:, m] = series.cauchy_product(np.ascontiguousarray(T[:, m - 1]), state.phi)
    return T


def closure_solve(gen, init, N, t, rtol=1e-10, blowup_guard=DEFAULT_BLOWUP_GUARD, backend="direct"):
    """In-window coefficients x_0..x_N at time t for initial weights ``init``.

    The initial support cap M0 (last nonzero index of ``init``) is
    independent of the output window N; no boundary condition is imposed at
    N+1 anywhere.
    """
    init = np.asarray(init, dtype=float)
    nz = np.nonzero(init)[0]
    if nz.size == 0:
        return np.zeros(N + 1)
    M0 = int(nz[-1])
    state = integrate_closure(gen, N, t, rtol=rtol, blowup_guard=blowup_guard, backend=backend)
    T = composition_kernel(state, M0, backend=backend)
    return T @ init[: M0 + 1]


def propagator_matrix(gen, N, dt, rtol=1e-10, backend="direct"):
    """(N+1)x(N+1) in-window propagator: column m = [z^n] K_dt Phi_dt^m.

    This is the affine half-step kernel of the splitting solvers; built
    once per dt and reused.
    """
    state = integrate_closure(gen, N, dt, rtol=rtol, backend=backend)
    return composition_kernel(state, N, backend=backend)


def bd_geometric_tail(lam, mu, t, N, log_scale=False):
    """Closed-form single-ancestor binary birth-death window at time t.

    p0 comes from the Riccati closed form (critical limit mu*t/(1+mu*t));
    the tail is p_n = p1 * rho^{n-1}, evaluated cancellation-free.  With
    ``log_scale`` the tail is exponentiated from log p1 + (n-1) log rho,
    which avoids intermediate underflow for very deep windows.
    """
    if lam < 0 or mu < 0 or t < 0:
        raise ValueError("bd_geometric_tail needs lam, mu, t >= 0")
    if lam == 0.0:
        # Single-particle survival: no births ever happen.
        p0 = -np.expm1(-mu * t)
        p1 = np.exp(-mu * t)
        rho = 0.0
    elif mu == 0.0:
        # Pure birth (Yule): extinction impossible.
        p0 = 0.0
        p1 = np.exp(-lam * t)
        rho = -np.expm1(-lam * t)
    elif lam == mu:
        p0 = mu * t / (1.0 + mu * t)
        rho = p0
        p1 = (1.0 - p0) * (1.0 - rho)
    else:
        delta = mu - lam
        if delta > 0:
            p0 = -mu * np.expm1(-delta * t) / (mu - lam * np.exp(-delta * t))
        else:
            e = np.expm1(delta * t)
            p0 = mu * e / (mu * e + delta)
        rho = (lam / mu) * p0
        p1 = (1.0 - p0) * (1.0 - rho)
    out = np.zeros(N + 1)
    out[0] = p0
    if N >= 1:
        if log_scale and p1 > 0.0 and 0.0 < rho:
            n = np.arange(N)
            out[1:] = np.exp(np.log(p1) + n * np.log(rho))
        else:
            out[1:] = p1 * rho ** np.arange(N)
    return out
