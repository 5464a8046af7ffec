import numpy as np
import pytest
from scipy.linalg import expm as scipy_expm
from scipy.special import factorial

from linrate.baselines import (
    dense_expm,
    dense_stationary,
    truncated_direct_solve,
    uniformization_solve,
)
from linrate.closure import closure_solve
from linrate.models import LinearRateGenerator, model_zoo, truncate_generator
from linrate.series import delta_window


class TestDenseExpm:
    def test_zero_matrix(self):
        # 1-ulp diagonal round-off from the Pade solve is the method floor.
        np.testing.assert_allclose(dense_expm(np.zeros((3, 3)), 1.0), np.eye(3), atol=1e-15)

    def test_diagonal(self):
        out = dense_expm(np.diag([-1.0, -1.0]), 1.0)
        np.testing.assert_allclose(out, np.diag([np.exp(-1)] * 2), atol=1e-15)

    def test_nilpotent_exact(self):
        N = np.array([[0.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(dense_expm(N, 1.0), np.eye(2) + N, atol=1e-15)

    def test_matches_scipy_on_random_generator(self):
        rng = np.random.default_rng(12)
        A = rng.uniform(0, 1, (40, 40))
        np.fill_diagonal(A, 0.0)
        A[np.diag_indices(40)] = -A.sum(axis=0)
        ours = dense_expm(A, 2.0)
        ref = scipy_expm(A * 2.0)
        assert np.abs(ours - ref).max() <= 1e-12

    def test_semigroup_property(self):
        L = truncate_generator(model_zoo("bdi"), 30).todense()
        E1 = dense_expm(L, 0.4)
        E2 = dense_expm(L, 0.7)
        E3 = dense_expm(L, 1.1)
        assert np.abs(E1 @ E2 - E3).max() <= 1e-10

    def test_against_taylor_series_norm_bounded(self):
        rng = np.random.default_rng(3)
        A = rng.uniform(-0.05, 0.05, (12, 12))
        terms = np.eye(12)
        acc = np.eye(12)
        for k in range(1, 30):
            terms = terms @ A / k
            acc = acc + terms
        ours = dense_expm(A, 1.0)
        assert np.abs(ours - acc).max() / np.abs(acc).max() <= 1e-12

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            dense_expm(np.array([[np.nan, 0], [0, 1.0]]), 1.0)


class TestUniformization:
    def test_pure_death_single_particle(self):
        gen = LinearRateGenerator({-1: (1.0, 0.0)}, conservative=True)
        L = truncate_generator(gen, 3)
        p0 = delta_window(3, at=1)
        out = uniformization_solve(L, p0, 1.0)
        assert abs(out[1] - np.exp(-1.0)) <= 1e-12

    def test_matches_dense_expm_mm_inf_n50(self):
        L = truncate_generator(model_zoo("mm_inf"), 50)
        p0 = delta_window(50)
        ours = uniformization_solve(L, p0, 1.5, tol=1e-14)
        ref = dense_expm(L.todense(), 1.5) @ p0
        assert np.abs(ours - ref).max() <= 1e-10

    def test_t0_identity(self):
        L = truncate_generator(model_zoo("mm_inf"), 8)
        p0 = np.linspace(0, 1, 9)
        np.testing.assert_array_equal(uniformization_solve(L, p0, 0.0), p0)

    def test_zero_generator_identity(self):
        p0 = np.array([0.25, 0.75])
        np.testing.assert_array_equal(
            uniformization_solve(np.zeros((2, 2)), p0, 5.0), p0
        )

    def test_nonnegative_substochastic_output(self):
        L = truncate_generator(model_zoo("bdi"), 25)
        p0 = delta_window(25, at=2)
        out = uniformization_solve(L, p0, 2.0)
        assert (out >= -1e-14).all()
        assert out.sum() <= 1.0 + 1e-12

    def test_large_alpha_t(self):
        # alpha*t ~ 1.2e3: weights must be assembled in log space.
        L = truncate_generator(model_zoo("mm_inf", {"nu": 5.0, "mu": 4.0}), 80)
        p0 = delta_window(80)
        out = uniformization_solve(L, p0, 3.0, tol=1e-13)
        m = np.arange(81)
        c = 5.0 / 4.0 * (1 - np.exp(-4.0 * 3.0))
        poisson = np.exp(-c) * c**m / factorial(m)
        assert np.abs(out - poisson).max() <= 1e-11


class TestTruncatedDirect:
    def test_signed_instance_bias_at_small_cap(self):
        gen = model_zoo("signed_mm_inf")
        exact = closure_solve(gen, delta_window(0), 10, 1.0, rtol=1e-12)
        L = truncate_generator(gen, 10)
        direct = truncated_direct_solve(L, delta_window(10), 1.0, rtol=1e-10)
        closure_err = 0.0  # exact in-window by construction; compare both to analytic
        c = -(1 - np.exp(-1.0))
        n = np.arange(11)
        analytic = np.exp(-c) * c**n / factorial(n)
        assert np.abs(direct - analytic).sum() >= 1e3 * max(
            np.abs(exact - analytic).sum(), 1e-15
        )

    def test_large_cap_limit_matches_dense(self):
        # Boundary bias dominates up to N ~ 10; past that the integrator
        # tolerance is the floor, so the monotone range is the biased one.
        gen = model_zoo("signed_mm_inf")
        errs = []
        c = -(1 - np.exp(-1.0))
        for N in (6, 8, 10):
            L = truncate_generator(gen, N)
            out = truncated_direct_solve(L, delta_window(N), 1.0, rtol=1e-11)
            n = np.arange(N + 1)
            analytic = np.exp(-c) * c**n / factorial(n)
            errs.append(np.abs(out[:7] - analytic[:7]).sum())
        assert errs[0] > errs[1] > errs[2]
        ref = dense_expm(truncate_generator(gen, 40).todense(), 1.0) @ delta_window(40)
        out40 = truncated_direct_solve(truncate_generator(gen, 40), delta_window(40), 1.0, rtol=1e-11)
        assert np.abs(out40 - ref).max() <= 1e-8

    def test_t0_identity(self):
        L = truncate_generator(model_zoo("bdi"), 5)
        p0 = delta_window(5, at=3)
        np.testing.assert_array_equal(truncated_direct_solve(L, p0, 0.0), p0)


class TestDenseStationary:
    def test_mm_inf_truncated_poisson(self):
        L = truncate_generator(model_zoo("mm_inf", {"nu": 2.0, "mu": 1.0}), 20)
        p = dense_stationary(L)
        m = np.arange(21)
        poisson = np.exp(-2.0) * 2.0**m / factorial(m)
        assert abs(p[0] - 0.135335) <= 1e-6
        assert np.abs(p - poisson / poisson.sum()).max() <= 1e-12

    def test_two_state_flip(self):
        a, b = 0.3, 1.1
        L = np.array([[-a, b], [a, -b]])
        p = dense_stationary(L)
        np.testing.assert_allclose(p, [b / (a + b), a / (a + b)], atol=1e-14)

    def test_decoupled_blocks_raise(self):
        L = np.zeros((4, 4))
        L[:2, :2] = [[-1.0, 1.0], [1.0, -1.0]]
        L[2:, 2:] = [[-2.0, 2.0], [2.0, -2.0]]
        with pytest.raises(np.linalg.LinAlgError):
            dense_stationary(L)
