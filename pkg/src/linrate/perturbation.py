"""Weakly non-affine perturbation expansion around the exact affine
propagator.

For L = A + eps*B with linear-rate A, order-by-order matching gives
p^(0)' = A p^(0) and p^(k) as one variation-of-parameters integral of the
affine propagator against B p^(k-1).  The affine propagator is the closure
kernel (exact in-window), evaluated once per grid offset and reused; all
orders share one composite-Simpson grid, with third-order end rules on the
odd prefixes.  The series is asymptotic in eps, not convergent.
"""

import numpy as np

from .closure import composition_kernel, integrate_closure


def _prefix_weights(j, h):
    """Quadrature weights for int_0^{j h} f over nodes 0..j (order >= 3)."""
    w = np.zeros(j + 1)
    if j == 0:
        return w
    if j == 1:
        # Trapezoid on the first subinterval: its O(h^3) local defect only
        # enters the final answer through higher-order weight-h sums.
        w[:] = h / 2.0
        return w
    if j % 2 == 0:
        w[0] = w[j] = h / 3.0
        w[1:j:2] = 4.0 * h / 3.0
        w[2:j:2] = 2.0 * h / 3.0
        return w
    # Odd j >= 3: composite Simpson on [0, s_{j-3}] plus 3/8 on the tail.
    if j > 3:
        head = _prefix_weights(j - 3, h)
        w[: j - 2] += head
    w[j - 3 :] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def perturbation_solve(affine, remainder, eps, order, t, init, N, subintervals=40, rtol=1e-11):
    """Sum_{k<=order} eps^k p^(k)(t) on the window {0..N}.

    ``affine`` is a LinearRateGenerator, ``remainder`` a SparseOperator on
    the window, ``init`` the initial weights (support inside the window).
    ``subintervals`` must be even; corrections are computed on the shared
    Simpson grid with the affine closure kernel memoized per grid offset.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if subintervals < 2 or subintervals % 2:
        raise ValueError("subintervals must be even and >= 2")
    init = np.asarray(init, dtype=float)
    if init.shape[0] != N + 1:
        padded = np.zeros(N + 1)
        padded[: init.shape[0]] = init
        init = padded
    n = subintervals
    h = t / n

    # Closure kernels at every grid offset k*h (one continued integration).
    kernels = np.empty((n + 1, N + 1, N + 1))
    kernels[0] = np.eye(N + 1)
    for k in range(1, n + 1):
        state = integrate_closure(affine, N, k * h, rtol=rtol)
        kernels[k] = composition_kernel(state, N)

    levels = [np.einsum("jnm,m->jn", kernels, init)]  # p^(0) on the grid
    for _ in range(order):
        prev = levels[-1]
        src = np.stack([remainder @ prev[i] for i in range(n + 1)])
        nxt = np.zeros_like(prev)
        for j in range(1, n + 1):
            w = _prefix_weights(j, h)
            for i in range(j + 1):
                if w[i] != 0.0:
                    nxt[j] += w[i] * (kernels[j - i] @ src[i])
        levels.append(nxt)

    out = np.zeros(N + 1)
    for k, lvl in enumerate(levels):
        out += eps**k * lvl[n]
    return out
