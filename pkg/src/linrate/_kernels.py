"""Hot numeric kernels: numba-compiled with a pure-numpy fallback.

The fallback is selected by setting the environment variable
``LINRATE_DISABLE_NUMBA=1`` before import (or automatically when numba is
not importable).  Both paths implement identical per-entry summation order,
so entry ``n`` of any product depends only on entries ``0..n`` of the
inputs.  ``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np

_DISABLE = os.environ.get("LINRATE_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

if not _DISABLE:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def _cauchy_product_np(a, b, out):
    # np.convolve computes entry i from inputs 0..i only; truncating keeps
    # the lower-triangular dependence intact.
    out[:] = np.convolve(a, b)[: a.shape[0]]
    return out


def _thinning_matrix_np(size, s, out):
    # Pascal-style recurrence: row m is Binomial(m, s) over n.
    # T[m, n] = s*T[m-1, n-1] + (1-s)*T[m-1, n]; exact identity at s=1.
    out[:] = 0.0
    out[0, 0] = 1.0
    q = 1.0 - s
    for m in range(1, size):
        out[m, 0] = q * out[m - 1, 0]
        out[m, 1 : m + 1] = s * out[m - 1, 0:m] + q * out[m - 1, 1 : m + 1]
    return out


if NUMBA_ENABLED:

    @njit(cache=True)
    def _cauchy_product_nb(a, b, out):
        # Entry i is a dot over contiguous slices of length i+1, so it
        # depends only on entries 0..i and is bit-stable across caps.
        n = a.shape[0]
        b_rev = b[::-1].copy()
        for i in range(n):
            out[i] = np.dot(a[: i + 1], b_rev[n - 1 - i :])
        return out

    @njit(cache=True)
    def _thinning_matrix_nb(size, s, out):
        out[:] = 0.0
        out[0, 0] = 1.0
        q = 1.0 - s
        for m in range(1, size):
            out[m, 0] = q * out[m - 1, 0]
            for n in range(1, m + 1):
                out[m, n] = s * out[m - 1, n - 1] + q * out[m - 1, n]
        return out

    cauchy_product_kernel = _cauchy_product_nb
    thinning_matrix_kernel = _thinning_matrix_nb
else:
    cauchy_product_kernel = _cauchy_product_np
    thinning_matrix_kernel = _thinning_matrix_np


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
