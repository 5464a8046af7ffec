"""Model definitions: linear-rate generators, hybrid affine+non-affine
splits, truncated sparse operators, hidden-state (telegraph) models, and
the named model zoo.

A linear-rate generator has off-diagonal entries ``L[n+r, n] = alpha_r*n +
beta_r`` for finitely many offsets ``r >= -1`` with ``beta_{-1} = 0``.  For
Markov instances the diagonal pair ``(alpha_0, beta_0)`` is auto-derived so
that every column of the (untruncated) generator sums to zero; signed or
formal instances may supply the diagonal verbatim.

Model configuration files are flat JSON documents ``{"model": <zoo name>,
"params": {...overrides...}}``; see ``docs/schemas.md``.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class PolynomialPair:
    """Drift polynomial A(z) = sum_r alpha_r z^{r+1} and source polynomial
    B(z) = sum_r beta_r z^r of a linear-rate generator."""

    A_coeffs: np.ndarray
    B_coeffs: np.ndarray


class LinearRateGenerator:
    """Finite map offset r -> (alpha_r, beta_r) with r >= -1, beta_{-1} = 0."""

    def __init__(self, entries, conservative=False):
        """``entries``: {r: (alpha_r, beta_r)}.  With ``conservative=True``
        the diagonal entry (r=0) is derived so columns sum to zero; any
        explicit r=0 entry is then rejected."""
        entries = {int(r): (float(a), float(b)) for r, (a, b) in entries.items()}
        for r, (a, b) in entries.items():
            if r < -1:
                raise ValueError(f"offset {r} < -1 is out of scope")
            if r == -1 and b != 0.0:
                raise ValueError("beta_{-1} must be zero (no immigration of deaths)")
        if conservative:
            if 0 in entries:
                raise ValueError("conservative generators derive their own diagonal")
            a0 = -sum(a for r, (a, _) in entries.items() if r != 0)
            b0 = -sum(b for r, (_, b) in entries.items() if r != 0)
            entries[0] = (a0, b0)
        self.entries = dict(sorted(entries.items()))

    def __repr__(self):
        return f"LinearRateGenerator({self.entries})"

    @property
    def r_max(self):
        return max(self.entries) if self.entries else 0

    def is_conservative(self, tol=1e-12):
        a_sum = sum(a for a, _ in self.entries.values())
        b_sum = sum(b for _, b in self.entries.values())
        return abs(a_sum) <= tol and abs(b_sum) <= tol


def polynomials_of(gen):
    """Assemble the (A, B) coefficient arrays of a linear-rate generator."""
    r_hi = max(gen.r_max, 0)
    A = np.zeros(r_hi + 2)
    B = np.zeros(r_hi + 1)
    for r, (alpha, beta) in gen.entries.items():
        A[r + 1] += alpha
        if r >= 0:
            B[r] += beta
    return PolynomialPair(A_coeffs=A, B_coeffs=B)


def generator_from_polynomials(pair):
    """Inverse of :func:`polynomials_of` (round-trip helper)."""
    entries = {}
    for i, a in enumerate(pair.A_coeffs):
        r = i - 1
        if a != 0.0:
            entries[r] = (a, 0.0)
    for r, b in enumerate(pair.B_coeffs):
        if b != 0.0:
            a, _ = entries.get(r, (0.0, 0.0))
            entries[r] = (a, b)
    return LinearRateGenerator(entries)


class SparseOperator:
    """A truncated operator held as scipy CSR with an optional band descriptor.

    ``bandwidth`` is (lower, upper) when the operator is banded in the
    flattened index; ``None`` means no band structure is declared.
    """

    def __init__(self, dimension, rows, cols, values, bandwidth=None):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if rows.size and (rows.min() < 0 or rows.max() >= dimension):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= dimension):
            raise ValueError("col index out of range")
        coo = sparse.coo_matrix((values, (rows, cols)), shape=(dimension, dimension))
        if coo.nnz != len(set(zip(rows.tolist(), cols.tolist()))):
            raise ValueError("duplicate (row, col) entries")
        self.matrix = coo.tocsr()
        self.dimension = dimension
        self.bandwidth = bandwidth

    @classmethod
    def from_dense(cls, dense, bandwidth=None):
        dense = np.asarray(dense, dtype=float)
        rows, cols = np.nonzero(dense)
        return cls(dense.shape[0], rows, cols, dense[rows, cols], bandwidth=bandwidth)

    @classmethod
    def from_csr(cls, matrix, bandwidth=None):
        op = cls.__new__(cls)
        op.matrix = matrix.tocsr()
        op.dimension = matrix.shape[0]
        op.bandwidth = bandwidth
        return op

    def todense(self):
        return self.matrix.toarray()

    def to_banded(self):
        """Diagonal-ordered form for scipy.linalg.solve_banded."""
        if self.bandwidth is None:
            raise ValueError("no band descriptor declared")
        lo, hi = self.bandwidth
        ab = np.zeros((lo + hi + 1, self.dimension))
        coo = self.matrix.tocoo()
        ab[hi + coo.row - coo.col, coo.col] = coo.data
        return (lo, hi), ab

    def __matmul__(self, other):
        return self.matrix @ other


def truncate_generator(gen, N):
    """(N+1)x(N+1) absorbing-cap truncation of a linear-rate generator.

    Entries ``alpha_r*n + beta_r`` are placed at (n+r, n) for
    0 <= n, n+r <= N; transitions leaving the window are dropped while the
    diagonal keeps the full outflow, so columns sum to <= 0 for Markov
    generators, with a strict deficit exactly in the cut columns.
    """
    if N < 0:
        raise ValueError("cap must be nonnegative")
    rows, cols, vals = [], [], []
    for r, (alpha, beta) in gen.entries.items():
        for n in range(N + 1):
            m = n + r
            if 0 <= m <= N:
                v = alpha * n + beta
                if v != 0.0:
                    rows.append(m)
                    cols.append(n)
                    vals.append(v)
    lo = max((-r for r in gen.entries if r < 0), default=0)
    hi = max((r for r in gen.entries if r > 0), default=0)
    return SparseOperator(N + 1, rows, cols, vals, bandwidth=(lo, hi))


@dataclass
class HybridModel:
    """Linear-rate part plus a non-affine remainder on a truncated window.

    ``affine`` is one LinearRateGenerator (scalar state space) or a list of
    K of them (product state space); ``remainder`` is built lazily for a
    requested window by ``remainder_for``.
    """

    affine: object
    remainder_builder: object
    caps: tuple = ()
    meta: dict = field(default_factory=dict)

    def remainder_for(self, caps):
        caps = tuple(int(c) for c in np.atleast_1d(caps))
        return self.remainder_builder(caps)

    @property
    def species(self):
        return len(self.affine) if isinstance(self.affine, (list, tuple)) else 1


@dataclass
class MatrixTelegraphModel:
    """Hidden-state matrices A (transcript-free) and B (transcript-producing)
    plus a shared per-mRNA degradation rate mu (scalar drift)."""

    A: np.ndarray
    B: np.ndarray
    mu: float
    stochastic: bool = True

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.shape != self.B.shape or self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A and B must be square matrices of equal size")
        if self.mu <= 0:
            raise ValueError("degradation rate mu must be positive")
        if self.stochastic:
            colsums = (self.A + self.B).sum(axis=0)
            if np.abs(colsums).max() > 1e-10:
                raise ValueError("columns of A+B must sum to zero for Markov instances")

    @property
    def n_hidden(self):
        return self.A.shape[0]

    def joint_generator(self, M):
        """Absorbing-cap truncation of the joint (hidden, count) generator,
        dimension n_T*(M+1), count-major blocks."""
        nT = self.n_hidden
        dim = nT * (M + 1)
        L = sparse.lil_matrix((dim, dim))
        for m in range(M + 1):
            sl = slice(m * nT, (m + 1) * nT)
            L[sl, sl] += self.A - self.mu * m * np.eye(nT)
            if m >= 1:
                L[sl, (m - 1) * nT : m * nT] += self.B
                L[(m - 1) * nT : m * nT, sl] += self.mu * m * np.eye(nT)
        return L.tocsr()


class MultiTypeGenerator:
    """Per-type per-particle rate tables alpha^{(i)}_r plus type-blind
    immigration beta_r over multi-index offsets r in Z^K."""

    def __init__(self, K, alpha_tables, beta_table=None, conservative=False):
        self.K = int(K)
        tables = []
        for i, table in enumerate(alpha_tables):
            tbl = {}
            for r, rate in table.items():
                r = tuple(int(x) for x in r)
                if len(r) != self.K:
                    raise ValueError("offset arity must equal the species count")
                if any(x < -1 for x in r) or (r + np.eye(self.K, dtype=int)[i] < 0).any():
                    raise ValueError(f"offset {r} not reachable by a type-{i} particle")
                tbl[r] = float(rate)
            tables.append(tbl)
        beta = {}
        for r, rate in (beta_table or {}).items():
            r = tuple(int(x) for x in r)
            if any(x < 0 for x in r):
                raise ValueError("immigration offsets must be nonnegative")
            beta[r] = float(rate)
        if conservative:
            zero = (0,) * self.K
            for tbl in tables:
                if zero in tbl:
                    raise ValueError("conservative generators derive their own diagonal")
                total = sum(tbl.values())
                if total:
                    tbl[zero] = -total
            if beta:
                beta[zero] = beta.get(zero, 0.0) - sum(v for r, v in beta.items() if r != zero)
        self.alpha_tables = tables
        self.beta_table = beta

    def joint_generator(self, caps):
        """Absorbing-cap truncation on the box prod_i {0..caps[i]}."""
        caps = tuple(int(c) for c in caps)
        if len(caps) != self.K:
            raise ValueError("need one cap per species")
        shape = tuple(c + 1 for c in caps)
        dim = int(np.prod(shape))
        rows, cols, vals = [], [], []
        for n_flat in range(dim):
            n = np.unravel_index(n_flat, shape)
            for i, tbl in enumerate(self.alpha_tables):
                for r, rate in tbl.items():
                    m = tuple(a + b for a, b in zip(n, r))
                    if all(0 <= x <= c for x, c in zip(m, caps)):
                        v = rate * n[i]
                        if v != 0.0:
                            rows.append(np.ravel_multi_index(m, shape))
                            cols.append(n_flat)
                            vals.append(v)
            for r, rate in self.beta_table.items():
                m = tuple(a + b for a, b in zip(n, r))
                if all(0 <= x <= c for x, c in zip(m, caps)) and rate != 0.0:
                    rows.append(np.ravel_multi_index(m, shape))
                    cols.append(n_flat)
                    vals.append(rate)
        M = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim))
        M.sum_duplicates()
        return M.tocsr()


# --- model zoo ---------------------------------------------------------------


def _require_positive(params, *names):
    for name in names:
        if params[name] <= 0:
            raise ValueError(f"parameter {name!r} must be positive, got {params[name]}")


def _binary_bd(params):
    p = {"lam": 1.05, "mu": 1.0, **params}
    if p["lam"] < 0 or p["mu"] < 0:
        raise ValueError("binary_bd rates must be nonnegative")
    return LinearRateGenerator({1: (p["lam"], 0.0), -1: (p["mu"], 0.0)}, conservative=True)


def _bdi(params):
    p = {"lam": 0.9, "mu": 1.0, "nu": 2.0, **params}
    if min(p.values()) < 0:
        raise ValueError("bdi rates must be nonnegative")
    return LinearRateGenerator(
        {1: (p["lam"], p["nu"]), -1: (p["mu"], 0.0)}, conservative=True
    )


def _mm_inf(params):
    p = {"nu": 2.0, "mu": 1.0, **params}
    _require_positive(p, "mu")
    if p["nu"] < 0:
        raise ValueError("mm_inf immigration must be nonnegative (use signed_mm_inf)")
    return LinearRateGenerator({1: (0.0, p["nu"]), -1: (p["mu"], 0.0)}, conservative=True)


def _signed_mm_inf(params):
    p = {"nu": -1.0, "mu": 1.0, **params}
    _require_positive(p, "mu")
    # Formal instance: the conservative-diagonal formula is applied
    # verbatim even though nu < 0 has no probabilistic meaning.
    return LinearRateGenerator(
        {1: (0.0, p["nu"]), -1: (p["mu"], 0.0), 0: (-p["mu"], -p["nu"])}
    )


def _schlogl(params):
    p = {"k1": 3.0, "km1": 0.6, "k2": 0.25, "km2": 2.95, "V": 25.0, **params}
    _require_positive(p, "k1", "km1", "k2", "km2", "V")
    affine = LinearRateGenerator(
        {1: (0.0, p["k2"] * p["V"]), -1: (p["km2"], 0.0)}, conservative=True
    )

    def build_remainder(caps):
        (N,) = caps
        rows, cols, vals = [], [], []
        for n in range(N + 1):
            fwd = p["k1"] * n * (n - 1) / p["V"]  # 2X -> 3X
            bwd = p["km1"] * n * (n - 1) * (n - 2) / p["V"] ** 2  # 3X -> 2X
            diag = -(fwd + bwd)
            if diag != 0.0:
                rows.append(n), cols.append(n), vals.append(diag)
            if n + 1 <= N and fwd != 0.0:
                rows.append(n + 1), cols.append(n), vals.append(fwd)
            if n - 1 >= 0 and bwd != 0.0:
                rows.append(n - 1), cols.append(n), vals.append(bwd)
        return SparseOperator(N + 1, rows, cols, vals, bandwidth=(1, 1))

    return HybridModel(affine=affine, remainder_builder=build_remainder, meta=dict(p))


def _predation_pairs(K):
    # K=2 is the classical one-directional model; K>=3 closes the cycle.
    if K == 2:
        return [(0, 1)]
    return [(i, (i + 1) % K) for i in range(K)]


def _predator_prey(params):
    p = {"K": 2, "nu": (10.0, 0.5), "mu": (1.0, 1.0), "gamma": 0.1, **params}
    K = int(p["K"])
    if K < 2:
        raise ValueError("predator_prey_K needs at least two species")
    nu = np.broadcast_to(np.asarray(p["nu"], dtype=float), (K,)).copy()
    mu = np.broadcast_to(np.asarray(p["mu"], dtype=float), (K,)).copy()
    gamma = float(p["gamma"])
    if (mu <= 0).any() or (nu < 0).any() or gamma < 0:
        raise ValueError("predator_prey_K rates out of domain")
    affine = [
        LinearRateGenerator({1: (0.0, nu[i]), -1: (mu[i], 0.0)}, conservative=True)
        for i in range(K)
    ]
    pairs = _predation_pairs(K)

    def build_remainder(caps):
        shape = tuple(c + 1 for c in caps)
        dim = int(np.prod(shape))
        rows, cols, vals = [], [], []
        for n_flat in range(dim):
            n = np.unravel_index(n_flat, shape)
            for a, b in pairs:
                rate = gamma * n[a] * n[b]
                if rate == 0.0:
                    continue
                rows.append(n_flat), cols.append(n_flat), vals.append(-rate)
                m = list(n)
                m[a] -= 1
                m[b] += 1
                if 0 <= m[a] and m[b] <= caps[b]:
                    rows.append(int(np.ravel_multi_index(m, shape)))
                    cols.append(n_flat)
                    vals.append(rate)
        M = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim))
        M.sum_duplicates()
        return SparseOperator.from_csr(M.tocsr())

    return HybridModel(
        affine=affine, remainder_builder=build_remainder, meta={"K": K, "gamma": gamma}
    )


def _telegraph_gr(params):
    p = {"n_T": 6, "k_on": 0.35, "k_off": 0.55, "k_chain": 6.0, "mu": 1.0, **params}
    _require_positive(p, "k_on", "k_off", "k_chain", "mu")
    nT = int(p["n_T"])
    if nT < 2:
        raise ValueError("telegraph_gr needs at least two hidden states")
    A = np.zeros((nT, nT))
    B = np.zeros((nT, nT))
    # States: 0 = G_off, 1 = G_on, 2..nT-1 = elongation chain R_1..R_{nT-2}.
    A[1, 0] += p["k_on"]
    A[0, 1] += p["k_off"]
    if nT == 2:
        # Two-state telegraph: production is diagonal (no hidden-state change).
        B[1, 1] += p["k_chain"]
    else:
        B[2, 1] += p["k_chain"]  # G_on -> R_1 produces a transcript
        for i in range(2, nT - 1):
            B[i + 1, i] += p["k_chain"]  # R_i -> R_{i+1}
        # Release step R_last -> G_on; placed in B (transcript-producing),
        # see docs for the open choice.
        B[1, nT - 1] += p["k_chain"]
    np.fill_diagonal(A, A.diagonal() - (A + B).sum(axis=0))
    return MatrixTelegraphModel(A=A, B=B, mu=p["mu"])


def _coag_branching(params):
    p = {"lam": 0.9, "mu": 1.0, "nu": 2.0, **params}
    affine = _bdi({k: p[k] for k in ("lam", "mu", "nu")})

    def build_remainder(caps):
        (N,) = caps
        rows, cols, vals = [], [], []
        for n in range(N + 1):
            rate = n * (n - 1) / 2.0  # X + X -> X
            if rate == 0.0:
                continue
            rows.append(n), cols.append(n), vals.append(-rate)
            rows.append(n - 1), cols.append(n), vals.append(rate)
        return SparseOperator(N + 1, rows, cols, vals, bandwidth=(1, 0))

    return HybridModel(affine=affine, remainder_builder=build_remainder, meta=dict(p))


def _cyclic_cross_production(params):
    p = {"K": 4, "lam": 0.95, "mu": 1.0, "alpha": 0.6, **params}
    K = int(p["K"])
    lam = np.broadcast_to(np.asarray(p["lam"], dtype=float), (K,))
    mu = np.broadcast_to(np.asarray(p["mu"], dtype=float), (K,))
    alpha = np.broadcast_to(np.asarray(p["alpha"], dtype=float), (K,))
    tables = []
    for i in range(K):
        e_i = tuple(np.eye(K, dtype=int)[i])
        e_next = tuple(np.eye(K, dtype=int)[(i + 1) % K])
        neg_e_i = tuple(-np.eye(K, dtype=int)[i])
        tables.append({e_i: lam[i], neg_e_i: mu[i], e_next: alpha[i]})
    return MultiTypeGenerator(K, tables, conservative=True)


_ZOO = {
    "binary_bd": _binary_bd,
    "bdi": _bdi,
    "mm_inf": _mm_inf,
    "schlogl": _schlogl,
    "predator_prey_K": _predator_prey,
    "telegraph_gr": _telegraph_gr,
    "coag_branching": _coag_branching,
    "signed_mm_inf": _signed_mm_inf,
    # Multi-type companion of the K=4 branching experiment.
    "cyclic_cross_production": _cyclic_cross_production,
}


def model_zoo(name, params=None):
    """Assemble a named model with its default parameters, overridable via
    ``params``."""
    if name not in _ZOO:
        raise KeyError(f"unknown model {name!r}; available: {sorted(_ZOO)}")
    return _ZOO[name](dict(params or {}))


def model_from_config(source):
    """Assemble a zoo model from a flat JSON document (path or dict) of the
    form {"model": <zoo name>, "params": {...overrides...}}."""
    import json

    if isinstance(source, (str, bytes, os.PathLike)):
        with open(source) as fh:
            source = json.load(fh)
    name = source.get("model", source.get("name"))
    if name is None:
        raise ValueError("model config needs a 'model' field")
    return model_zoo(name, source.get("params", {}))


def zoo_names():
    return sorted(_ZOO)
