"""Truncated formal-power-series arithmetic.

A *series window* is a 1-D float array ``c`` of length ``N+1`` holding the
coefficients of ``z^0 .. z^N``; a *tensor window* is a K-dimensional float
array of shape ``(N+1,)*K`` holding coefficients on the index box
``{0..N}^K``.  All products are computed modulo ``z^{N+1}`` (per axis for
tensors): caps never grow implicitly, and entry ``n`` of a product depends
only on entries ``0..n`` of the inputs.

Two backends are provided.  The direct backend preserves the
lower-triangular dependence bitwise; the FFT backend zero-pads to the next
power of two >= 2N+2 per axis and agrees with the direct one up to a
round-off floor (~1e-10 for caps up to a few thousand with entries in
[-1, 1]).  FFT calls accept a reusable :class:`FftWorkspace` so repeated
products of the same shape avoid reallocation.
"""

import numpy as np
from scipy import signal

from ._kernels import cauchy_product_kernel


def as_window(coeffs):
    """Validate and return a series window as a float64 array."""
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1:
        raise ValueError(f"series window must be 1-D, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("series window entries must be finite")
    return c


def delta_window(cap, at=0):
    """The series delta_{n,at} on {0..cap}."""
    c = np.zeros(cap + 1)
    c[at] = 1.0
    return c


def _check_same_cap(a, b):
    if a.shape != b.shape:
        raise ValueError(f"cap mismatch: {a.shape[0] - 1} vs {b.shape[0] - 1}")


def fft_size(n):
    """Next power of two >= 2n (full linear-convolution length for caps n-1)."""
    size = 1
    while size < 2 * n:
        size *= 2
    return size


class FftWorkspace:
    """Preallocated rfft buffers for repeated products of one window shape.

    Not safe for concurrent use; each concurrent caller owns its workspace.
    """

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.padded = tuple(fft_size(n) for n in self.shape)
        self._axes = tuple(range(len(self.shape)))

    def product(self, a, b):
        fa = np.fft.rfftn(a, s=self.padded, axes=self._axes)
        fb = np.fft.rfftn(b, s=self.padded, axes=self._axes)
        full = np.fft.irfftn(fa * fb, s=self.padded, axes=self._axes)
        sl = tuple(slice(0, n) for n in self.shape)
        return np.ascontiguousarray(full[sl])


def cauchy_product(a, b, out=None):
    """Truncated Cauchy product: result_n = sum_{k<=n} a_k b_{n-k}.

    Both inputs must share one cap; coefficients above it are discarded.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    _check_same_cap(a, b)
    if out is None:
        out = np.empty_like(a)
    cauchy_product_kernel(a, b, out)
    return out


def cauchy_power_coefficients(a, p):
    """Coefficients of a(z)**p modulo z^{N+1}; p=0 yields delta_{n,0}.

    Implemented as p-1 chained truncated products, so the truncation order
    matches repeated :func:`cauchy_product` calls exactly.
    """
    a = np.ascontiguousarray(a, dtype=float)
    if p < 0:
        raise ValueError("power must be a nonnegative integer")
    result = delta_window(a.shape[0] - 1)
    for _ in range(p):
        result = cauchy_product(result, a)
    return result


def fft_cauchy_product(a, b, workspace=None):
    """FFT-backed truncated Cauchy product (same contract as cauchy_product).

    Round-off floor is ~1e-10 for caps up to a few thousand with entries in
    [-1, 1]; the direct backend is the reference.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_cap(a, b)
    if workspace is None or workspace.shape != a.shape:
        workspace = FftWorkspace(a.shape)
    return workspace.product(a, b)


def tensor_cauchy_product(a, b, backend="direct", workspace=None):
    """Multi-index Cauchy product truncated to the box of the inputs.

    ``backend='direct'`` computes exact convolution sums (lower-triangular
    in the componentwise order); ``backend='fft'`` zero-pads to the next
    power of two >= 2N+2 per axis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 1 and backend == "direct":
        return cauchy_product(a, b)
    if backend == "direct":
        full = signal.convolve(a, b, mode="full", method="direct")
        sl = tuple(slice(0, n) for n in a.shape)
        return np.ascontiguousarray(full[sl])
    if backend == "fft":
        if workspace is None or workspace.shape != a.shape:
            workspace = FftWorkspace(a.shape)
        return workspace.product(a, b)
    raise ValueError(f"unknown backend {backend!r}")


def compose_polynomial(poly, phi, backend="direct", workspace=None):
    """Coefficients of poly(phi(z)) modulo z^{N+1} on phi's window.

    ``poly`` is a plain coefficient array (any length); evaluation is by
    Horner's scheme, one truncated product per polynomial degree.
    """
    phi = np.asarray(phi, dtype=float)
    poly = np.asarray(poly, dtype=float)
    out = np.zeros_like(phi)
    if poly.size == 0:
        return out
    out[0] = poly[-1]
    for c in poly[-2::-1]:
        if backend == "fft":
            out = fft_cauchy_product(out, phi, workspace=workspace)
        else:
            out = cauchy_product(out, phi)
        out[0] += c
    return out
