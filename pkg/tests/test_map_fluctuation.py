import numpy as np
import pytest
from scipy import integrate

from mapq import map_fluctuation as mf
from mapq import scalar_levy as sl
from mapq.mc_simulator import SimConfig, simulate_free_exit
from mapq.model_core import JumpDistribution, LevyComponent, ModelSpec, build_F, build_F_prime

from conftest import assert_within_se, random_model, single

BM = LevyComponent(-1.0, 1.0)
CPP = LevyComponent(-1.0, 0.0, 1.0, JumpDistribution.exponential(1.0))
MIXED = LevyComponent(-0.5, 0.7, 1.3, JumpDistribution.hyperexponential([0.3, 0.7], [0.5, 2.0]))


def two_bm():
    comps = [LevyComponent(-1.0, 1.0), LevyComponent(0.5, 0.8)]
    return ModelSpec.create([[-1.0, 1.0], [2.0, -2.0]], comps, 4.0)


def test_instance1_root_matches_polynomial_oracle(inst1):
    # (1 + g)^2 det(F(g) - I) = (g^2 - 2g - 2)(-4g - 2) - (1 + g)^2
    poly = np.polysub(np.polymul([1, -2, -2], [-4, -2]), [1, 2, 1])
    roots = np.roots(poly)
    pos = roots[roots.real > 0]
    rs = mf.rhp_roots(inst1, 1.0)
    assert len(pos) == 1 and len(rs.roots) == 1
    assert rs.roots[0] == pytest.approx(pos[0], abs=1e-12)


def test_instance2_root_is_one(inst2):
    # (g + g^2/2 - 2)(-2) - 1 = 0 gives g^2 + 2g - 3 = 0
    assert mf.rhp_roots(inst2, 1.0).roots[0] == pytest.approx(1.0, abs=1e-12)


def test_single_state_root_is_psi():
    for comp in (BM, CPP, MIXED):
        for b in (0.5, 2.0):
            assert mf.rhp_roots(single(comp), b).roots[0] == pytest.approx(
                sl.right_inverse_psi(comp, b), abs=1e-10)


@pytest.mark.parametrize("beta", [1 + 5j, 0.3 + 40j, 2 - 100j])
def test_complex_beta_roots_by_continuation(inst1, inst3, beta):
    for spec in (inst1, inst3):
        rs = mf.rhp_roots(spec, beta)
        ordered, _ = spec.ordering
        assert len(rs.roots) == spec.d_minus
        assert rs.provenance == "homotopy-from-real"
        for g in rs.roots:
            M = build_F(ordered, g) - beta * np.eye(spec.d)
            assert abs(np.linalg.det(M)) < 1e-9 * np.prod(np.linalg.norm(M, axis=0) + 1)
        cache = mf.get_cache(ordered, complex(beta))
        assert cache.pole_residuals(0.5) < 1e-7


def test_kappa_check_forms(inst1):
    s = single(BM)
    assert mf.kappa_check(s, 0.4, 1.3)[0, 0] == pytest.approx(1 + (0.4 + 1.3) / 2)
    assert np.allclose(mf.kappa_check(inst1, 1.0, 1.0), build_F_prime(inst1, 1.0))
    h = 1e-6
    fd = (build_F(inst1, 0.7 + h) - build_F(inst1, 0.7 - h)) / (2 * h)
    assert np.allclose(mf.kappa_check(inst1, 0.7, 0.7), fd, atol=1e-6)
    F1, F2 = build_F(inst1, 1.0), build_F(inst1, 2.0)
    assert np.max(np.abs(mf.kappa_check(inst1, 1.0, 2.0) - (F2 - F1))) < 1e-12


def test_kappa_bar_rows_and_scalar_reduction(inst1):
    kb = mf.solve_kappa_bar(inst1, 1.0, 1.0)
    assert np.all(kb[1] == 0)
    for comp in (BM, CPP):
        psi = sl.right_inverse_psi(comp, 1.0)
        expect = (comp.exponent(0.6) - 1.0) / (psi - 0.6)
        assert mf.solve_kappa_bar(single(comp), 0.6, 1.0)[0, 0] == pytest.approx(expect, abs=1e-10)


@pytest.mark.parametrize("name", ["instance1", "instance2", "instance3"])
def test_pole_cancellation(name):
    from conftest import fixture_model

    spec = fixture_model(name)
    ordered, _ = spec.ordering
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = rng.uniform(0, 3), rng.uniform(0.2, 3)
        assert mf.get_cache(ordered, complex(b)).pole_residuals(a) < 1e-7


def test_zeta_bounded_near_roots(inst1):
    g = mf.rhp_roots(inst1, 1.0).roots[0]
    for eps in (1e-3, -1e-3, 1e-3j):
        assert np.max(np.abs(mf.zeta_matrix(inst1, 0.5, 1.0, g + eps))) < 1e3


def test_zeta_pole_error(inst2):
    with pytest.raises(ArithmeticError, match="zeta pole"):
        mf.zeta_matrix(inst2, 0.5, 1.0, 1.0)


@pytest.mark.parametrize("name", ["instance1", "instance2", "instance3"])
def test_zeta_is_u_transform_of_eta(name):
    from conftest import fixture_model

    spec = fixture_model(name)
    g = 1.3
    Z = mf.zeta_matrix(spec, 0.7, 1.0, g)
    for p in range(2):
        for q in range(2):
            val, _ = integrate.quad(lambda u: np.real(np.exp(-g * u) * mf.eta_matrix(spec, u, 0.7, 1.0)[p, q]),
                                    0, 60, limit=200)
            assert val == pytest.approx(Z[p, q].real, abs=1e-6)


def test_single_state_reduction():
    for comp in (BM, CPP, MIXED, LevyComponent(0.0, 0.0, 2.0, JumpDistribution.exponential(1.0))):
        s = single(comp)
        for b in (0.5, 1.0, 2.0):
            ep = sl.exit_probs_scalar(comp, 1.3, 1.7, b)
            assert mf.delta_minus(s, 1.3, 1.7, b)[0, 0] == pytest.approx(ep.delta_minus, abs=1e-10)
            assert mf.delta_plus(s, 1.3, 1.7, b)[0, 0] == pytest.approx(ep.delta_plus, abs=1e-10)
            assert mf.eta_matrix(s, 1.2, 0.7, b)[0, 0] == pytest.approx(
                sl.overshoot_scalar(comp, 1.2, 0.7, b), abs=1e-10)
            assert mf.zeta_matrix(s, 0.7, b, 1.5)[0, 0] == pytest.approx(
                sl.zeta_scalar(comp, 0.7, b, 1.5), abs=1e-10)
            if not comp.is_subordinator:
                rep = sl.scale_functions(comp, b)
                assert mf.scale_matrix(s, b).W(1.1)[0, 0] == pytest.approx(rep.W(1.1), abs=1e-10)


def test_exit_probability_structure(inst1, inst2, inst3):
    for spec in (inst1, inst2, inst3):
        sub = spec.subordinator_mask
        for (um, up) in ((0.5, 1.0), (2.0, 2.0), (1.0, 3.0)):
            dm = mf.delta_minus(spec, um, up, 1.0)
            dp = mf.delta_plus(spec, um, up, 1.0)
            assert np.all(dm[:, sub] == 0)
            for m in (dm, dp, mf.eta_matrix(spec, up, 0.0, 1.0)):
                assert np.all(m.real >= -1e-10) and np.all(m.real <= 1 + 1e-10)
            assert np.all((dm + dp).real.sum(axis=1) <= 1 + 1e-10)


def test_delta_minus_identity_for_draining_cpp(inst1_neg):
    assert np.allclose(mf.delta_minus(inst1_neg, 0.0, 4.0, 1.0), np.eye(2), atol=1e-12)


def test_delta_minus_composition(inst1, inst2, inst3):
    # passing -(a + b) requires passing -a first, and the path reaches -a exactly
    a, b, up = 0.7, 1.1, 1.5
    for spec in (inst1, inst2, inst3, two_bm()):
        direct = mf.delta_minus(spec, a + b, up, 1.0)
        composed = mf.delta_minus(spec, a, up, 1.0) @ mf.delta_minus(spec, b, up + a, 1.0)
        assert np.max(np.abs(direct - composed)) < 1e-10


def test_second_scale_matrix_identity():
    for spec in (two_bm(),):
        cache = mf.get_cache(spec.ordering[0], 1.0 + 0j)
        for u in (1.0, 2.0, 4.0):
            lhs = cache.p_plus(u)
            rhs = cache.Z(u) + cache.W(u) @ cache.kappa_bar(0.0)
            assert np.max(np.abs(lhs - rhs)) < 1e-8
        um, up = 1.0, 2.0
        alt = cache.Z(up) - cache.W(up) @ np.linalg.solve(cache.W(um + up), cache.Z(um + up))
        assert np.max(np.abs(mf.delta_plus(spec, um, up, 1.0) - alt)) < 1e-8


def test_scale_matrix_laplace_identity(inst3):
    rep = mf.scale_matrix(inst3, 1.0)
    assert np.allclose(rep.Z(0.0), np.eye(2))
    for a in (3.0, 5.0):
        L = rep.laplace(a)
        for p in range(2):
            for q in range(L.shape[1]):
                val, _ = integrate.quad(lambda y: np.real(np.exp(-a * y) * rep.W(y)[p, q]), 0, 60, limit=200)
                assert val == pytest.approx(L[p, q].real, rel=1e-6, abs=1e-12)


def test_exit_probabilities_match_simulation(inst1):
    dm = mf.delta_minus(inst1, 2.0, 2.0, 1.0).real
    dp = mf.delta_plus(inst1, 2.0, 2.0, 1.0).real
    eta = mf.eta_matrix(inst1, 2.0, 0.0, 1.0).real
    for i in range(2):
        est = simulate_free_exit(inst1, 2.0, 2.0, 1.0, SimConfig(paths=200_000, seed=10 + i), i=i)
        up = simulate_free_exit(inst1, np.inf, 2.0, 1.0, SimConfig(paths=200_000, seed=20 + i), i=i)
        for j in range(2):
            assert_within_se(dm[i, j], *est[f"delta_minus_{j}"])
            assert_within_se(dp[i, j], *est[f"delta_plus_{j}"])
            assert_within_se(eta[i, j], *up[f"delta_plus_{j}"])


def test_delta_plus_matches_simulation_instance2(inst2):
    dp = mf.delta_plus(inst2, 1.0, 3.0, 1.0).real
    est = simulate_free_exit(inst2, 1.0, 3.0, 1.0, SimConfig(paths=100_000, seed=8, dt=2e-3), i=0)
    for j in range(2):
        assert_within_se(dp[0, j], *est[f"delta_plus_{j}"])


def test_zeta_matches_simulated_overshoot_transform(inst1):
    # int_0^inf e^{-g u} P(tau(u) < T, J = j) du by quadrature over simulated u-grid
    g = 2.0
    Z = mf.zeta_matrix(inst1, 0.0, 1.0, g).real
    us = np.linspace(0, 8, 17)
    vals = []
    for k, u in enumerate(us):
        est = simulate_free_exit(inst1, np.inf, u, 1.0, SimConfig(paths=20_000, seed=100 + k), i=0)
        vals.append([float(np.ravel(est[f"delta_plus_{j}"][0])[0]) for j in range(2)])
    vals = np.array(vals)
    num = integrate.simpson(np.exp(-g * us)[:, None] * vals, x=us, axis=0)
    assert np.max(np.abs(num - Z[0])) < 1e-2


def test_random_models_probability_bounds():
    rng = np.random.default_rng(11)
    for _ in range(8):
        spec = random_model(rng, 3)
        for b in (0.5, 2.0):
            dm = mf.delta_minus(spec, 0.8, 1.2, b)
            dp = mf.delta_plus(spec, 0.8, 1.2, b)
            assert np.max(np.abs(dm.imag)) < 1e-9 and np.max(np.abs(dp.imag)) < 1e-9
            assert np.all(dm.real >= -1e-10) and np.all(dp.real >= -1e-10)
            assert np.all((dm + dp).real.sum(axis=1) <= 1 + 1e-10)
