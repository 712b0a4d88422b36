import numpy as np
import pytest

from mapq.errors import ModelError
from mapq.mc_simulator import SimConfig, simulate_free_exit
from mapq.model_core import (JumpDistribution, LevyComponent, ModelSpec, build_F, build_F_prime,
                             build_Phi, laplace_exponent, model_from_dict, validate)

from conftest import assert_within_se, random_model


def test_instance1_classification(inst1):
    ordered, perm = validate(inst1)
    assert inst1.d_minus == 1
    assert list(perm) == [0, 1]
    assert not inst1.components[0].is_subordinator
    assert inst1.components[1].is_subordinator


def test_row_sum_violation_reported():
    data = {"states": [{"drift": -1.0}, {"drift": 1.0}], "Q": [[-1.0, 1.001], [1.0, -1.0]],
            "capacity": 1.0}
    with pytest.raises(ModelError, match="row-sum"):
        model_from_dict(data)


def test_problems_listed_with_location():
    data = {"states": [{"drift": -1.0, "sigma": -1.0}, {"drift": 1.0, "jump_rate": -2.0}],
            "Q": [[-1.0, 1.0], [-1.0, 1.0]], "capacity": 0.0}
    with pytest.raises(ModelError) as info:
        model_from_dict(data)
    text = str(info.value)
    assert "capacity" in text and "state 0" in text and "state 1" in text and "Q[1][0]" in text


def test_absorbing_state_is_valid(inst3):
    ordered, perm = validate(inst3)
    assert ordered.d == 2


def test_validate_idempotent():
    spec = ModelSpec.create([[-1, 1], [2, -2]], [LevyComponent(1.0), LevyComponent(-1.0, 1.0)], 3.0)
    ordered, perm = validate(spec)
    assert list(perm) == [1, 0]
    again, perm2 = validate(ordered)
    assert list(perm2) == [0, 1]


def test_laplace_exponent_examples(inst1, inst2):
    assert laplace_exponent(inst2.components[0], 2.0) == pytest.approx(4.0)
    assert laplace_exponent(inst1.components[1], 1.0) == pytest.approx(-1.0)
    for c in inst1.components + inst2.components:
        assert laplace_exponent(c, 0.0) == 0


def test_exponent_pole_rejected(inst1):
    with pytest.raises(ArithmeticError, match="exponent pole"):
        laplace_exponent(inst1.components[0], -1.0)


def test_jump_lst_at_zero_is_one():
    for jump in (JumpDistribution.exponential(2.0), JumpDistribution.erlang(3, 1.5),
                 JumpDistribution.hyperexponential([0.3, 0.7], [1.0, 4.0]), JumpDistribution.zero()):
        assert jump.lst(0.0) == pytest.approx(1.0)


def test_jump_lst_matches_quadrature():
    from scipy import integrate

    for jump in (JumpDistribution.erlang(3, 1.5), JumpDistribution.hyperexponential([0.3, 0.7], [1.0, 4.0])):
        val, _ = integrate.quad(lambda y: np.exp(-0.7 * y) * jump.pdf(np.array([y]))[0], 0, np.inf)
        assert jump.lst(0.7) == pytest.approx(val, rel=1e-8)


def test_build_F_instance1(inst1):
    a = 0.8
    F = build_F(inst1, a)
    phi = [laplace_exponent(c, a) for c in inst1.components]
    assert np.allclose(F, [[phi[0] - 1, 1], [1, phi[1] - 1]])
    assert np.allclose(build_F(inst1, 0.0), inst1.Q_array)


def test_F_prime_matches_difference(inst1):
    rng = np.random.default_rng(1)
    spec = random_model(rng, 3)
    for s in (inst1, spec):
        h = 1e-6
        fd = (build_F(s, 1.0 + h) - build_F(s, 1.0 - h)) / (2 * h)
        assert np.allclose(build_F_prime(s, 1.0), fd, atol=1e-6)


def test_Phi_properties(inst1):
    P0 = build_Phi(inst1, 0.0, 1.0)
    assert np.allclose(P0.sum(axis=1), 1.0, atol=1e-10)
    P = np.real(build_Phi(inst1, 1.0, 1.0))
    assert np.all(P >= 0)
    # a draining state makes E exp(-a Y) exceed 1; row sums stay below 1 for nondecreasing input
    sub = ModelSpec.create(inst1.Q, [inst1.components[1], inst1.components[1]], 4.0)
    assert np.all(np.real(build_Phi(sub, 1.0, 1.0)).sum(axis=1) <= 1 + 1e-12)
    one = ModelSpec.create([[0.0]], [inst1.components[0]], 4.0)
    phi = laplace_exponent(inst1.components[0], 1.0)
    assert build_Phi(one, 1.0, 2.0)[0, 0] == pytest.approx(2.0 / (2.0 - phi))


def test_Phi_singular():
    spec = ModelSpec.create([[0.0]], [LevyComponent(-1.0, 1.0)], 1.0)
    # phi(1) = 1.5, so beta = 1.5 is an eigenvalue of F(1)
    with pytest.raises(ArithmeticError, match="Phi singular"):
        build_Phi(spec, 1.0, 1.5)


def test_Phi_matches_free_process_simulation(inst1):
    est = simulate_free_exit(inst1, np.inf, np.inf, 1.0, SimConfig(paths=200_000, seed=4), i=0,
                             alphas=(1.0,))
    P = np.real(build_Phi(inst1, 1.0, 1.0))
    for j in range(2):
        v, e = est[f"kill_{j}_1"]
        assert_within_se(P[0, j], v, e)


def test_round_trip_canonical(inst1, inst3):
    import json

    for s in (inst1, inst3):
        again = model_from_dict(json.loads(s.canonical_json()))
        assert again.canonical_json() == s.canonical_json()
        assert again.model_hash() == s.model_hash()


def test_subordinator_classification_by_simulation():
    from mapq.mc_simulator import simulate

    comps = [LevyComponent(0.5, 0.0, 1.0, JumpDistribution.exponential(1.0)),
             LevyComponent(0.0, 0.0, 2.0, JumpDistribution.exponential(1.0))]
    spec = ModelSpec.create([[-1, 1], [1, -1]], comps, 1e9)
    assert spec.d_minus == 0
    times = np.linspace(0.5, 10, 20)
    est = simulate(spec, 0.0, 0, SimConfig(paths=1000, seed=2), metrics=("mean",), times=times,
                   functions={"Vcopy": lambda V, J, idle, lost: V})
    assert np.all(np.diff(est["mean"][0]) > 0)
