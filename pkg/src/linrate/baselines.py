"""Reference solvers for cross-validation and crossover benchmarks.

``dense_expm`` is a fixed degree-13 Pade approximant with scaling and
squaring (theta_13 = 5.371920351148152, the double-precision class
constant); the degree is pinned rather than norm-adaptive so baseline
timings scale reproducibly.  ``uniformization_solve`` sums Poisson-weighted
powers of the shifted generator with a running cumulative-mass cutoff
(log-space weights, so large alpha*t stays correct at desk scale).
``truncated_direct_solve`` integrates the absorbing-cap master equation
directly and deliberately exhibits the boundary bias the closure removes.
"""

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from .integrators import OdeProblem, rk45_solve
from .models import SparseOperator

PADE13_THETA = 5.371920351148152
_PADE13_B = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)


def _as_dense(Lop):
    if isinstance(Lop, SparseOperator):
        return Lop.todense()
    if sparse.issparse(Lop):
        return Lop.toarray()
    return np.asarray(Lop, dtype=float)


def _as_csr(Lop):
    if isinstance(Lop, SparseOperator):
        return Lop.matrix
    if sparse.issparse(Lop):
        return Lop.tocsr()
    return sparse.csr_matrix(np.asarray(Lop, dtype=float))


def dense_expm(Lop, t=1.0):
    """exp(L t) by degree-13 Pade with scaling and squaring."""
    A = _as_dense(Lop) * t
    if A.shape[0] != A.shape[1]:
        raise ValueError("dense_expm needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("dense_expm needs finite entries")
    n = A.shape[0]
    norm = np.abs(A).sum(axis=0).max()  # induced 1-norm
    s = max(0, int(np.ceil(np.log2(norm / PADE13_THETA)))) if norm > PADE13_THETA else 0
    A = A / (2.0**s)
    b = _PADE13_B
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def expv_uniformized(L_csr, v, t, tol=1e-12, max_terms=None):
    """Action exp(L t) @ v for a proper generator via uniformization.

    alpha = max |diag|, R = I + L/alpha; the Poisson series over R^k v is
    truncated when the accumulated Poisson mass exceeds 1 - tol.
    """
    L_csr = _as_csr(L_csr)
    v = np.asarray(v, dtype=float)
    if t == 0.0:
        return v.copy()
    diag = L_csr.diagonal()
    alpha = float(np.abs(diag).max())
    if alpha == 0.0:
        return v.copy()
    at = alpha * t
    R = sparse.identity(L_csr.shape[0], format="csr") + L_csr / alpha
    if max_terms is None:
        max_terms = int(at + 40.0 * np.sqrt(at + 1.0) + 120)
    k = np.arange(max_terms + 1)
    logw = -at + k * np.log(at) - gammaln(k + 1)
    w = np.exp(logw)
    acc = w[0] * v
    vk = v
    cum = w[0]
    for i in range(1, max_terms + 1):
        vk = R @ vk
        if w[i] > 0.0:
            acc = acc + w[i] * vk
        cum += w[i]
        if cum >= 1.0 - tol:
            break
    return acc


def uniformization_solve(Lop, p0, t, tol=1e-12):
    """Transient distribution of a proper generator by uniformization."""
    return expv_uniformized(Lop, p0, t, tol=tol)


def truncated_direct_solve(Lop, p0, t, rtol=1e-8):
    """Adaptive RK integration of the absorbing-cap master equation.

    The cap drops the back-flux from the first out-of-window level, so the
    in-window answer carries the boundary bias that grows with t.
    """
    L = _as_csr(Lop)
    p0 = np.asarray(p0, dtype=float)
    if t == 0.0:
        return p0.copy()
    problem = OdeProblem(lambda _t, y: L @ y, p0, (0.0, float(t)))
    y, _ = rk45_solve(problem, rtol=rtol, atol=rtol * 1e-3)
    return y


def dense_stationary(Lop):
    """Stationary vector of a truncated generator via the augmented system
    (last balance row replaced by the normalization row).

    Raises numpy.linalg.LinAlgError when the augmented matrix is
    numerically singular (e.g. decoupled blocks: null space dimension > 1).
    """
    L = _as_dense(Lop)
    n = L.shape[0]
    M = L.copy()
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= n * np.finfo(float).eps * sv[0]:
        raise np.linalg.LinAlgError(
            "augmented stationary system is numerically singular "
            "(null space dimension > 1 or defective truncation)"
        )
    p = np.linalg.solve(M, rhs)
    return p / p.sum()
