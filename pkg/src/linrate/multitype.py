"""Multi-index closure for K-type linear-rate generators.

The vector characteristic Phi = (Phi^(1) .. Phi^(K)) and the scalar
multiplier K_t expand as tensors over the index box {0..N}^K; the
coefficient ODE

    d/dt Phi^(i) = A_i(Phi),    d/dt K = B(Phi) * K,

with A_i(z) = sum_r alpha^(i)_r z^{r + e_i} and B(z) = sum_r beta_r z^r,
is closed and lower-triangular in the componentwise order, so integrating
on the box needs no boundary values outside it.  State layout is K+1 dense
tensors (memory K(N+1)^K); sparse tensors are out of scope.
"""

from dataclasses import dataclass

import numpy as np

from .closure import DEFAULT_BLOWUP_GUARD, ClosureBlowUp
from .integrators import IntegrationFailure, OdeProblem, rk45_solve
from .series import FftWorkspace, tensor_cauchy_product


@dataclass
class MultiClosureState:
    phis: list  # K tensors, component i of the vector characteristic
    kappa: np.ndarray
    t: float

    @property
    def K(self):
        return len(self.phis)

    @property
    def shape(self):
        return self.kappa.shape

    @classmethod
    def initial(cls, K, N):
        shape = (N + 1,) * K
        phis = []
        for i in range(K):
            phi = np.zeros(shape)
            idx = [0] * K
            if N >= 1:
                idx[i] = 1
                phi[tuple(idx)] = 1.0
            phis.append(phi)
        kappa = np.zeros(shape)
        kappa[(0,) * K] = 1.0
        return cls(phis=phis, kappa=kappa, t=0.0)


class _MonomialCache:
    """Evaluates products prod_j Phi_j^{m_j} on the box, memoizing per call."""

    def __init__(self, phis, backend, workspace):
        self.phis = phis
        self.backend = backend
        self.workspace = workspace
        self.shape = phis[0].shape
        self.cache = {}

    def _product(self, a, b):
        return tensor_cauchy_product(a, b, backend=self.backend, workspace=self.workspace)

    def monomial(self, exponents):
        exponents = tuple(int(e) for e in exponents)
        if exponents in self.cache:
            return self.cache[exponents]
        out = None
        for j, e in enumerate(exponents):
            for _ in range(e):
                out = self.phis[j] if out is None else self._product(out, self.phis[j])
        if out is None:
            out = np.zeros(self.shape)
            out[(0,) * len(self.shape)] = 1.0
        self.cache[exponents] = out
        return out


def _multi_rhs(gen, phis, kappa, backend, workspace):
    K = gen.K
    cache = _MonomialCache(phis, backend, workspace)
    eye = np.eye(K, dtype=int)
    phi_dots = []
    for i in range(K):
        acc = np.zeros(phis[0].shape)
        for r, rate in gen.alpha_tables[i].items():
            acc += rate * cache.monomial(tuple(np.add(r, eye[i])))
        phi_dots.append(acc)
    b_of_phi = np.zeros(phis[0].shape)
    for r, rate in gen.beta_table.items():
        b_of_phi += rate * cache.monomial(r)
    kappa_dot = tensor_cauchy_product(b_of_phi, kappa, backend=backend, workspace=workspace)
    return phi_dots, kappa_dot


def multi_closure_rhs(gen, state, backend="direct", workspace=None):
    """Time derivatives of the multi-index coefficient ODE (componentwise
    lower-triangular: a multi-index reads only its lower set)."""
    phi_dots, kappa_dot = _multi_rhs(gen, state.phis, state.kappa, backend, workspace)
    return phi_dots, kappa_dot


def integrate_closure_multi(
    gen,
    N,
    t,
    rtol=1e-9,
    atol=None,
    blowup_guard=DEFAULT_BLOWUP_GUARD,
    backend="direct",
):
    """Integrate the multi-index coefficient ODE on the box {0..N}^K."""
    K = gen.K
    init = MultiClosureState.initial(K, N)
    if t == 0.0:
        return init
    atol = rtol * 1e-3 if atol is None else atol
    shape = init.shape
    size = init.kappa.size
    workspace = FftWorkspace(shape) if backend == "fft" else None

    def pack(phis, kappa):
        return np.concatenate([p.ravel() for p in phis] + [kappa.ravel()])

    def unpack(y):
        parts = y.reshape(K + 1, size)
        return [parts[i].reshape(shape) for i in range(K)], parts[K].reshape(shape)

    def rhs(_t, y):
        phis, kappa = unpack(y)
        phi_dots, kappa_dot = _multi_rhs(gen, phis, kappa, backend, workspace)
        return pack(phi_dots, kappa_dot)

    def guard(_t, y):
        if not np.all(np.isfinite(y)) or np.abs(y[: K * size]).max() > blowup_guard:
            raise ClosureBlowUp(t_reached=_t, guard=blowup_guard)

    y0 = pack(init.phis, init.kappa)
    try:
        y, _ = rk45_solve(OdeProblem(rhs, y0, (0.0, float(t))), rtol=rtol, atol=atol, post_step=guard)
    except IntegrationFailure as exc:
        state = exc.state
        if state is not None and (
            not np.all(np.isfinite(state)) or np.abs(state[: K * size]).max() > blowup_guard * 1e-3
        ):
            raise ClosureBlowUp(t_reached=exc.t, guard=blowup_guard) from exc
        raise
    phis, kappa = unpack(y)
    return MultiClosureState(phis=phis, kappa=kappa, t=float(t))


def multi_composition(state, init, backend="direct"):
    """Joint window coefficients for initial tensor weights ``init``.

    Computes kappa * sum_m init_m prod_i (Phi^(i))^{m_i} over the nonzero
    multi-indices m of ``init`` (support must lie inside the box).
    """
    init = np.asarray(init, dtype=float)
    if init.shape != state.shape:
        raise ValueError("initial tensor must live on the closure box")
    workspace = FftWorkspace(state.shape) if backend == "fft" else None
    cache = _MonomialCache(state.phis, backend, workspace)
    acc = np.zeros(state.shape)
    for idx in np.argwhere(init != 0.0):
        acc += init[tuple(idx)] * cache.monomial(tuple(idx))
    return tensor_cauchy_product(state.kappa, acc, backend=backend, workspace=workspace)
