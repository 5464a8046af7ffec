import numpy as np
import pytest
from scipy.linalg import expm

from linrate.closure import closure_solve, integrate_closure
from linrate.models import LinearRateGenerator, MultiTypeGenerator, model_zoo
from linrate.multitype import (
    MultiClosureState,
    integrate_closure_multi,
    multi_closure_rhs,
    multi_composition,
)


def independent_bd_pair(lam1=0.7, mu1=1.0, lam2=0.4, mu2=0.9):
    """Two non-interacting binary-fission species as one 2-type generator."""
    tables = [
        {(1, 0): lam1, (-1, 0): mu1},
        {(0, 1): lam2, (0, -1): mu2},
    ]
    return MultiTypeGenerator(2, tables, conservative=True)


class TestIntegrateClosureMulti:
    def test_t0_initial_data(self):
        gen = independent_bd_pair()
        st = integrate_closure_multi(gen, 3, 0.0)
        init = MultiClosureState.initial(2, 3)
        for a, b in zip(st.phis, init.phis):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(st.kappa, init.kappa)

    def test_independent_species_embed_scalar_closure(self):
        lam, mu = 0.7, 1.0
        gen = independent_bd_pair(lam1=lam, mu1=mu)
        st = integrate_closure_multi(gen, 5, 0.8, rtol=1e-11)
        scalar = integrate_closure(
            LinearRateGenerator({1: (lam, 0.0), -1: (mu, 0.0)}, conservative=True),
            5,
            0.8,
            rtol=1e-11,
        )
        np.testing.assert_allclose(st.phis[0][:, 0], scalar.phi, atol=1e-9)
        off_axis = st.phis[0][:, 1:]
        np.testing.assert_allclose(off_axis, 0.0, atol=1e-10)

    def test_componentwise_lower_triangular_bitwise(self):
        gen = model_zoo("cyclic_cross_production", {"K": 2})
        rng = np.random.default_rng(5)
        st = MultiClosureState(
            phis=[rng.uniform(-0.4, 0.4, (5, 5)) for _ in range(2)],
            kappa=rng.uniform(-0.4, 0.4, (5, 5)),
            t=0.1,
        )
        base_phi, base_kappa = multi_closure_rhs(gen, st)
        pert = MultiClosureState(
            phis=[p.copy() for p in st.phis], kappa=st.kappa.copy(), t=0.1
        )
        for p in pert.phis + [pert.kappa]:
            p[3:, :] += 40.0  # outside the lower set of (2, 3)
            p[:, 4:] -= 90.0
        pert_phi, pert_kappa = multi_closure_rhs(gen, pert)
        for a, b in zip(base_phi, pert_phi):
            assert np.array_equal(a[:3, :4], b[:3, :4])
        assert np.array_equal(base_kappa[:3, :4], pert_kappa[:3, :4])

    def test_markov_normalization_in_box(self):
        gen = model_zoo("cyclic_cross_production", {"K": 2, "lam": 0.5, "alpha": 0.3})
        st = integrate_closure_multi(gen, 9, 0.25, rtol=1e-10)
        init = np.zeros((10, 10))
        init[1, 0] = 1.0
        out = multi_composition(st, init)
        assert out.sum() <= 1.0 + 1e-9
        assert out.sum() >= 1.0 - 1e-8  # short horizon, wide box: tail tiny
        assert (out >= -1e-10).all()

    @pytest.mark.slow
    def test_k4_cyclic_against_dense_expm_cap8(self):
        gen = model_zoo("cyclic_cross_production", {"K": 4})
        N, cap, t = 4, 8, 0.25
        st = integrate_closure_multi(gen, N, t, rtol=1e-10)
        init = np.zeros((N + 1,) * 4)
        idx = (1, 0, 0, 0)
        init[idx] = 1.0
        out = multi_composition(st, init)
        L = gen.joint_generator((cap,) * 4).toarray()
        p0 = np.zeros(L.shape[0])
        p0[np.ravel_multi_index(idx, (cap + 1,) * 4)] = 1.0
        full = expm(L * t) @ p0
        joint = full.reshape((cap + 1,) * 4)[tuple(slice(0, N + 1) for _ in range(4))]
        assert np.abs(out - joint).sum() <= 1e-8


class TestMultiComposition:
    def test_delta_origin_invariant_without_immigration(self):
        gen = independent_bd_pair()
        st = integrate_closure_multi(gen, 4, 0.9, rtol=1e-10)
        init = np.zeros((5, 5))
        init[0, 0] = 1.0
        out = multi_composition(st, init)
        np.testing.assert_allclose(out, init, atol=1e-10)

    def test_single_type1_ancestor_is_kappa_times_phi1(self):
        from linrate.series import tensor_cauchy_product

        gen = model_zoo("cyclic_cross_production", {"K": 2})
        st = integrate_closure_multi(gen, 4, 0.5, rtol=1e-10)
        init = np.zeros((5, 5))
        init[1, 0] = 1.0
        out = multi_composition(st, init)
        np.testing.assert_array_equal(out, tensor_cauchy_product(st.kappa, st.phis[0]))

    def test_product_of_independent_bds_factorizes(self):
        lam1, mu1, lam2, mu2, t = 0.7, 1.0, 0.4, 0.9, 0.8
        gen = independent_bd_pair(lam1, mu1, lam2, mu2)
        st = integrate_closure_multi(gen, 6, t, rtol=1e-11)
        init = np.zeros((7, 7))
        init[1, 1] = 1.0  # one ancestor of each type
        out = multi_composition(st, init)
        g1 = LinearRateGenerator({1: (lam1, 0.0), -1: (mu1, 0.0)}, conservative=True)
        g2 = LinearRateGenerator({1: (lam2, 0.0), -1: (mu2, 0.0)}, conservative=True)
        d1 = np.zeros(7)
        d1[1] = 1.0
        m1 = closure_solve(g1, d1, 6, t, rtol=1e-12)
        m2 = closure_solve(g2, d1, 6, t, rtol=1e-12)
        np.testing.assert_allclose(out, np.outer(m1, m2), atol=1e-10)

    def test_support_outside_box_rejected(self):
        gen = independent_bd_pair()
        st = integrate_closure_multi(gen, 3, 0.2)
        with pytest.raises(ValueError):
            multi_composition(st, np.zeros((6, 6)))
