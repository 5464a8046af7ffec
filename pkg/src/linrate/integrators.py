"""Time-stepping engines shared by all solvers.

* :func:`rk45_solve`: Dormand-Prince 5(4) embedded pair with a PI step
  controller (safety 0.9, PI exponents 0.7/5 and -0.4/5, step-ratio clip
  [0.2, 5], initial step from an RHS-scale heuristic).
* :func:`rk4_fixed_solve`: classical fixed-step RK4.
* :func:`rosenbrock_solve`: linearly-implicit order-2 W-method with an
  embedded order-3 error estimate (the ode23s scheme of Shampine &
  Reichelt), with dense, banded, or sparse stage solves.
* :func:`taylor_solve`: Parker-Sochacki power-series stepping for
  right-hand sides declared as linear + Cauchy-bilinear (binary fission).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .series import cauchy_product

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
PI_BETA1 = 0.7 / 5.0
PI_BETA2 = 0.4 / 5.0


class IntegrationFailure(RuntimeError):
    """Raised when a solver cannot continue (step underflow, singular stage
    matrix).  Carries the partial state and statistics."""

    def __init__(self, message, t=None, state=None, stats=None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.stats = stats


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    nfev: int = 0


@dataclass
class OdeProblem:
    """y' = f(t, y) with optional Jacobian descriptor.

    ``jacobian`` is one of
      ("dense", ndarray or callable(t, y) -> ndarray)
      ("banded", (l, u), callable or ndarray in diagonal-ordered form)
      ("sparse", csr_matrix or callable)
    ``time_dependent`` controls whether Rosenbrock stages include a df/dt
    term (finite-differenced when True).
    """

    rhs: object
    y0: np.ndarray
    t_span: tuple
    jacobian: tuple = None
    time_dependent: bool = False

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(y, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h = 1e-6 * span if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    return min(span, max(h, 1e-9 * span))


def rk45_solve(problem, rtol=1e-8, atol=1e-11, max_steps=1_000_000, post_step=None):
    """Adaptive Dormand-Prince 5(4) integration to the end of ``t_span``.

    ``post_step(t, y)`` runs after each accepted step (used for blow-up
    guards); exceptions it raises propagate.  Returns (final state, stats).
    """
    f = problem.rhs
    t, t_end = problem.t_span
    y = problem.y0.copy()
    stats = StepStats()
    if t_end == t:
        return y, stats

    k = np.empty((7, y.size))
    k[0] = f(t, y)
    stats.nfev += 1
    h = _initial_step(y, k[0], rtol, atol, t_end - t)

    prev_err = 1.0
    while t < t_end:
        if stats.accepted + stats.rejected >= max_steps:
            raise IntegrationFailure("step budget exhausted", t=t, state=y, stats=stats)
        h = min(h, t_end - t)
        if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise IntegrationFailure("step size underflow", t=t, state=y, stats=stats)
        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[i]))
            k[i] = f(t + _DP_C[i] * h, yi)
        stats.nfev += 6
        y5 = y + h * (_DP_B5[:6] @ k[:6])
        err = h * ((_DP_B5 - _DP_B4) @ k)
        err_norm = _error_norm(err, y, y5, rtol, atol)
        if err_norm <= 1.0:
            t += h
            y = y5
            stats.accepted += 1
            if post_step is not None:
                post_step(t, y)
            if t >= t_end:
                break
            k[0] = f(t, y)
            stats.nfev += 1
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm**-PI_BETA1 * prev_err**PI_BETA2
            prev_err = max(err_norm, 1e-10)
            h *= min(MAX_FACTOR, max(MIN_FACTOR, factor))
        else:
            stats.rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err_norm**-PI_BETA1)
    return y, stats


def rk4_fixed_solve(problem, steps):
    """Classical 4-stage Runge-Kutta with ``steps`` equal steps."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    f = problem.rhs
    t0, t_end = problem.t_span
    h = (t_end - t0) / steps
    y = problem.y0.copy()
    t = t0
    for _ in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + (h / 2) * k1)
        k3 = f(t + h / 2, y + (h / 2) * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


class _StageSolver:
    """Factorizes W = I - h*d*J once per (h, J) and solves stage systems."""

    def __init__(self, jacobian):
        if jacobian is None:
            raise ValueError("rosenbrock_solve requires a Jacobian descriptor")
        self.kind = jacobian[0]
        if self.kind == "dense":
            self.jac = jacobian[1]
        elif self.kind == "banded":
            self.lu_bands = jacobian[1]
            self.jac = jacobian[2]
        elif self.kind == "sparse":
            self.jac = jacobian[1]
        else:
            raise ValueError(f"unknown jacobian kind {jacobian[0]!r}")
        self._fact = None
        self._key = None

    def _eval_jac(self, t, y):
        return self.jac(t, y) if callable(self.jac) else self.jac

    def factorize(self, t, y, hd):
        J = self._eval_jac(t, y)
        try:
            if self.kind == "dense":
                W = -hd * np.asarray(J)
                W[np.diag_indices_from(W)] += 1.0
                self._fact = sla.lu_factor(W)
            elif self.kind == "banded":
                l, u = self.lu_bands
                Jb = np.asarray(J)  # diagonal-ordered form, shape (l+u+1, n)
                Wb = -hd * Jb
                Wb[u, :] += 1.0
                self._fact = ("banded", (l, u), Wb)
            else:
                W = sparse.identity(y.size, format="csc") - hd * J.tocsc()
                self._fact = spla.splu(W)
        except (sla.LinAlgError, RuntimeError, ValueError) as exc:
            raise IntegrationFailure(f"singular stage matrix: {exc}", t=t, state=y) from exc

    def solve(self, rhs):
        if self.kind == "dense":
            return sla.lu_solve(self._fact, rhs)
        if self.kind == "banded":
            _, (l, u), Wb = self._fact
            return sla.solve_banded((l, u), Wb, rhs)
        return self._fact.solve(rhs)


def rosenbrock_solve(problem, rtol=1e-6, atol=1e-9, max_steps=1_000_000, fixed_steps=None):
    """Adaptive order-2 linearly-implicit W-method (ode23s scheme).

    Stage solves exploit the declared Jacobian structure (dense LU, banded
    LU, or sparse LU).  ``fixed_steps`` disables the error controller and
    takes that many equal steps (order-verification mode).  Returns
    (final state, stats).
    """
    d = 1.0 / (2.0 + np.sqrt(2.0))
    e32 = 6.0 + np.sqrt(2.0)
    f = problem.rhs
    t, t_end = problem.t_span
    y = problem.y0.copy()
    stats = StepStats()
    if t_end == t:
        return y, stats
    solver = _StageSolver(problem.jacobian)

    F0 = f(t, y)
    stats.nfev += 1
    if fixed_steps is not None:
        h = (t_end - t) / fixed_steps
    else:
        h = _initial_step(y, F0, rtol, atol, t_end - t)

    while t < t_end:
        if stats.accepted + stats.rejected >= max_steps:
            raise IntegrationFailure("step budget exhausted", t=t, state=y, stats=stats)
        h = min(h, t_end - t)
        if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise IntegrationFailure("step size underflow", t=t, state=y, stats=stats)
        solver.factorize(t, y, h * d)
        if problem.time_dependent:
            dt_fd = np.sqrt(np.finfo(float).eps) * max(abs(t), abs(h))
            T = (f(t + dt_fd, y) - F0) / dt_fd
            stats.nfev += 1
        else:
            T = 0.0
        k1 = solver.solve(F0 + h * d * T)
        F1 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k2 = solver.solve(F1 - k1) + k1
        y1 = y + h * k2
        F2 = f(t + h, y1)
        k3 = solver.solve(F2 - e32 * (k2 - F1) - 2.0 * (k1 - F0) + h * d * T)
        stats.nfev += 2
        err = (h / 6.0) * (k1 - 2.0 * k2 + k3)
        if fixed_steps is not None:
            t += h
            y = y1
            F0 = F2
            stats.accepted += 1
            continue
        err_norm = _error_norm(err, y, y1, rtol, atol)
        if err_norm <= 1.0:
            t += h
            y = y1
            F0 = F2
            stats.accepted += 1
            factor = MAX_FACTOR if err_norm == 0.0 else SAFETY * err_norm ** (-1.0 / 3.0)
            h *= min(MAX_FACTOR, max(MIN_FACTOR, factor))
        else:
            stats.rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err_norm ** (-1.0 / 3.0))
    return y, stats


@dataclass
class PolynomialRhs:
    """Closure right-hand side declared as constant + linear + Cauchy-bilinear:

        y' = const + linear_coeff * y + quad_coeff * (y * y)   (truncated)

    which is the binary-fission specialization of a polynomial coefficient
    hierarchy.
    """

    linear_coeff: float
    quad_coeff: float
    const: np.ndarray = field(default=None)

    def __call__(self, y):
        out = self.linear_coeff * y + self.quad_coeff * cauchy_product(y, y)
        if self.const is not None:
            out = out + self.const
        return out


def taylor_solve(closure_rhs, y0, t, steps, order):
    """Fixed-step Taylor (Parker-Sochacki) integration of a polynomial RHS.

    Each step builds time derivatives by the Leibniz recursion

        y^{(k+1)} = a y^{(k)} + q * sum_j C(k, j) (y^{(j)} * y^{(k-j)})

    (the constant source only contributes to the first derivative) and sums
    the order-``order`` Taylor polynomial.
    """
    if order < 1:
        raise ValueError("Taylor order must be >= 1")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    y = np.array(y0, dtype=float)
    h = t / steps
    a = closure_rhs.linear_coeff
    q = closure_rhs.quad_coeff
    binom = np.zeros((order + 1, order + 1))
    binom[0, 0] = 1.0
    for k in range(1, order + 1):
        binom[k, 0] = 1.0
        binom[k, 1:] = binom[k - 1, 1:] + binom[k - 1, :-1]
    for _ in range(steps):
        derivs = [y]
        d1 = closure_rhs(y)
        derivs.append(d1)
        for k in range(1, order):
            acc = a * derivs[k]
            if q != 0.0:
                conv = np.zeros_like(y)
                for j in range(k + 1):
                    conv += binom[k, j] * cauchy_product(derivs[j], derivs[k - j])
                acc = acc + q * conv
            derivs.append(acc)
        new = np.zeros_like(y)
        hk = 1.0
        fact = 1.0
        for k, dk in enumerate(derivs):
            if k > 0:
                hk *= h
                fact *= k
            new += (hk / fact) * dk
        y = new
    return y
