import numpy as np
import pytest
from scipy.linalg import expm

from linrate.baselines import dense_expm
from linrate.closure import propagator_matrix
from linrate.models import model_zoo, truncate_generator
from linrate.series import delta_window
from linrate.splitting import (
    PropagatorHalf,
    affine_half_from_generator,
    hybrid_strang_richardson_solve,
    hybrid_strang_solve,
    kron_strang_solve,
    remainder_full_step,
    richardson_combine,
    strang_solve,
)


def schlogl_reference(model, N, t, p0):
    L = truncate_generator(model.affine, N).todense() + model.remainder_for(N).todense()
    return dense_expm(L, t) @ p0


class TestStrangSolve:
    def test_affine_only_is_semigroup(self):
        # Pure-death affine half: no flux ever crosses the window upward,
        # so composed kernels equal the single long-horizon kernel.
        gen = model_zoo("mm_inf", {"nu": 0.0, "mu": 1.0})
        N, T, K_s = 12, 1.0, 8
        half = affine_half_from_generator(gen, N, T / (2 * K_s))
        identity = PropagatorHalf(apply=lambda p: p, duration=T / K_s, exact=True)
        p0 = np.zeros(N + 1)
        p0[9] = 1.0
        out = strang_solve(half, identity, p0, K_s)
        single = propagator_matrix(gen, N, T) @ p0
        np.testing.assert_allclose(out, single, atol=1e-12)

    def test_affine_only_immigration_window_margin(self):
        # With immigration the window-leak re-entry is bounded by the
        # boundary mass, negligible at this margin.
        gen = model_zoo("mm_inf")
        N, T, K_s = 40, 1.0, 10
        half = affine_half_from_generator(gen, N, T / (2 * K_s))
        identity = PropagatorHalf(apply=lambda p: p, duration=T / K_s, exact=True)
        out = strang_solve(half, identity, delta_window(40), K_s)
        single = propagator_matrix(gen, N, T) @ delta_window(40)
        np.testing.assert_allclose(out, single, atol=1e-12)

    def test_commuting_diagonal_halves_exact(self):
        d1 = np.diag([-0.5, -1.0, -2.0])
        d2 = np.diag([-1.5, -0.3, -0.7])
        T, K_s = 1.3, 7
        dt = T / K_s
        half = PropagatorHalf(apply=lambda p: expm(d1 * dt / 2) @ p, duration=dt / 2, exact=True)
        full = PropagatorHalf(apply=lambda p: expm(d2 * dt) @ p, duration=dt, exact=True)
        p0 = np.array([1.0, 2.0, 3.0])
        out = strang_solve(half, full, p0, K_s)
        np.testing.assert_allclose(out, expm((d1 + d2) * T) @ p0, atol=1e-12)

    def test_transpose_symmetry_matrix_level(self):
        # The Strang matrix of transposed generators is the transpose of
        # the Strang matrix (adjoint composition, palindromic ordering).
        rng = np.random.default_rng(6)
        A = rng.uniform(-1, 1, (5, 5))
        B = rng.uniform(-1, 1, (5, 5))
        dt = 0.37

        def strang_matrix(A, B):
            half = PropagatorHalf(lambda p: expm(A * dt / 2) @ p, dt / 2, True)
            full = PropagatorHalf(lambda p: expm(B * dt) @ p, dt, True)
            return np.column_stack([strang_solve(half, full, e, 1) for e in np.eye(5)])

        np.testing.assert_allclose(strang_matrix(A, B).T, strang_matrix(A.T, B.T), atol=1e-12)

    def test_schlogl_order_two(self):
        model = model_zoo("schlogl", {"V": 25.0})
        N, T = 100, 2.0
        p0 = delta_window(N)
        ref = schlogl_reference(model, N, T, p0)
        errs = []
        for K_s in (10, 20, 40):
            out = hybrid_strang_solve(model, p0, N, T, K_s)
            errs.append(np.abs(out - ref).sum())
        slope = np.polyfit(np.log([10, 20, 40]), np.log(errs), 1)[0]
        assert abs(slope + 2.0) <= 0.2

    def test_invalid_Ks(self):
        gen = model_zoo("mm_inf")
        half = affine_half_from_generator(gen, 4, 0.1)
        with pytest.raises(ValueError):
            strang_solve(half, half, np.zeros(5), 0)


class TestRemainderFullStep:
    def test_auto_selects_banded_rosenbrock(self):
        model = model_zoo("schlogl")
        B = model.remainder_for(40)
        step = remainder_full_step(B, 0.05)
        assert not step.exact
        p0 = delta_window(40, at=10)
        out = step(p0)
        oracle = expm(B.todense() * 0.05) @ p0
        assert np.abs(out - oracle).max() <= 1e-8

    def test_uniformization_inner_matches(self):
        model = model_zoo("predator_prey_K", {"K": 2})
        B = model.remainder_for((6, 6))
        assert B.bandwidth is None
        step = remainder_full_step(B, 0.1)
        p0 = np.zeros(49)
        p0[np.ravel_multi_index((4, 2), (7, 7))] = 1.0
        oracle = expm(B.todense() * 0.1) @ p0
        assert np.abs(step(p0) - oracle).max() <= 1e-12


class TestRichardson:
    def test_identical_runs_unchanged(self):
        x = np.array([0.2, 0.5, 0.3])
        np.testing.assert_allclose(richardson_combine(x, x, order=2), x, rtol=1e-15)

    def test_synthetic_h2_cancellation(self):
        a = np.array([1.0, -2.0, 0.5])
        b = np.array([0.3, 0.1, -0.4])
        h = 0.2
        run_K = a + b * h**2
        run_2K = a + b * (h / 2) ** 2
        np.testing.assert_allclose(richardson_combine(run_K, run_2K, 2), a, atol=1e-15)

    def test_never_worse_on_polynomial_family(self):
        a, b, c = 1.0, 0.4, 0.9
        for h in (0.4, 0.2, 0.1):
            run_K = a + b * h**2 + c * h**4
            run_2K = a + b * (h / 2) ** 2 + c * (h / 2) ** 4
            combined = richardson_combine(run_K, run_2K, 2)
            assert abs(combined - a) <= abs(run_2K - a) + 1e-15

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            richardson_combine(np.zeros(3), np.zeros(4))

    def test_schlogl_richardson_improvement(self):
        model = model_zoo("schlogl", {"V": 25.0})
        N, T, K_s = 100, 2.0, 20
        p0 = delta_window(N)
        ref = schlogl_reference(model, N, T, p0)
        plain = hybrid_strang_solve(model, p0, N, T, K_s)
        rich = hybrid_strang_richardson_solve(model, p0, N, T, K_s)
        assert np.abs(rich - ref).sum() <= 0.05 * np.abs(plain - ref).sum()


class TestWindowedPropagator:
    def test_columns_are_probability_vectors(self):
        # M/M/inf windowed propagator: column sums <= 1 with the deficit
        # equal to the out-of-window mass -- exactly zero for pure death.
        gen = model_zoo("mm_inf", {"nu": 2.0, "mu": 1.0})
        T = propagator_matrix(gen, 12, 0.4, rtol=1e-12)
        sums = T.sum(axis=0)
        assert (T >= -1e-12).all()
        assert (sums <= 1.0 + 1e-10).all()
        death = model_zoo("mm_inf", {"nu": 0.0, "mu": 1.0})
        Td = propagator_matrix(death, 12, 0.4, rtol=1e-12)
        np.testing.assert_allclose(Td.sum(axis=0), 1.0, atol=1e-10)


class TestKronStrang:
    def test_gamma_zero_factorizes_into_marginals(self):
        # Vanishing commutator: each step is exactly the tensor product of
        # the per-species windowed propagations at the same step count.
        model = model_zoo("predator_prey_K", {"K": 2, "gamma": 0.0})
        B = model.remainder_for((8, 8))
        p0 = np.zeros((9, 9))
        p0[2, 1] = 1.0
        for K_s in (1, 3):
            out = kron_strang_solve(model.affine, B, p0, T=1.0, K_s=K_s)
            marg = []
            for i in range(2):
                U = propagator_matrix(model.affine[i], 8, 1.0 / (2 * K_s))
                marg.append(np.linalg.matrix_power(U @ U, K_s))
            expected = np.outer(marg[0][:, 2], marg[1][:, 1])
            np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_gamma_zero_step_count_invariant_inside_window(self):
        # With the mass well inside the box the composed kernels match the
        # single long-horizon kernel for any K_s.
        model = model_zoo("predator_prey_K", {"K": 2, "nu": (1.0, 0.5), "gamma": 0.0})
        B = model.remainder_for((12, 12))
        p0 = np.zeros((13, 13))
        p0[1, 1] = 1.0
        runs = [
            kron_strang_solve(model.affine, B, p0, T=1.0, K_s=K_s) for K_s in (1, 4, 16)
        ]
        for r in runs[1:]:
            np.testing.assert_allclose(r, runs[0], atol=1e-11)

    def test_k2_against_dense_expm(self):
        # Fig-3-style parameters; both solvers on the cap-14 box, compared
        # on the interior sub-box {0..8}^2 where the commutator dominates.
        model = model_zoo("predator_prey_K", {"K": 2})
        big = 14
        p0 = np.zeros((big + 1, big + 1))
        p0[5, 2] = 1.0
        out = kron_strang_solve(model.affine, model.remainder_for((big, big)), p0, T=2.0, K_s=80)
        L = (
            np.kron(truncate_generator(model.affine[0], big).todense(), np.eye(big + 1))
            + np.kron(np.eye(big + 1), truncate_generator(model.affine[1], big).todense())
            + model.remainder_for((big, big)).todense()
        )
        pbig = np.zeros((big + 1) ** 2)
        pbig[np.ravel_multi_index((5, 2), (big + 1, big + 1))] = 1.0
        ref = (dense_expm(L, 2.0) @ pbig).reshape(big + 1, big + 1)
        assert np.abs(out - ref)[:9, :9].sum() <= 1e-3

    def test_refinement_slope_minus_two(self):
        # Interior-mass parameters so the self-referenced error is pure
        # commutator.
        model = model_zoo("predator_prey_K", {"K": 2, "nu": (2.0, 0.5), "gamma": 0.2})
        caps = (12, 12)
        p0 = np.zeros((13, 13))
        p0[3, 1] = 1.0
        ref = kron_strang_solve(model.affine, model.remainder_for(caps), p0, T=1.0, K_s=320)
        errs = []
        for K_s in (10, 20, 40):
            out = kron_strang_solve(model.affine, model.remainder_for(caps), p0, T=1.0, K_s=K_s)
            errs.append(np.abs(out - ref).sum())
        slope = np.polyfit(np.log([10, 20, 40]), np.log(errs), 1)[0]
        assert abs(slope + 2.0) <= 0.3
