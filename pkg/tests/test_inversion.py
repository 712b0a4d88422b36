import numpy as np
import pytest

from mapq.errors import NumericalError
from mapq.inversion import InversionConfig, invert, invert_time_metric, invert_time_metrics
from mapq.mc_simulator import SimConfig, simulate

from conftest import assert_within_se


def test_known_pairs():
    v, _ = invert(lambda s: 1.0 / (s + 1.0), 1.0)
    assert abs(v - np.exp(-1.0)) < 1e-9
    v, _ = invert(lambda s: 1.0 / s ** 2, 2.5)
    assert abs(v - 2.5) < 1e-9
    v, _ = invert(lambda s: 1.0 / (s ** 2 + 1.0), 1.0)
    assert abs(v - np.sin(1.0)) < 1e-8


def test_linearity():
    f = lambda s: 1.0 / (s + 1.0)  # noqa: E731
    g = lambda s: 1.0 / (s + 3.0)  # noqa: E731
    a = invert(lambda s: 2 * f(s) - 0.5 * g(s), 1.7)[0]
    b = 2 * invert(f, 1.7)[0] - 0.5 * invert(g, 1.7)[0]
    assert abs(a - b) < 1e-10


def test_vector_valued():
    v, _ = invert(lambda s: np.array([1.0 / (s + 1.0), 1.0 / (s + 2.0)]), 1.0)
    assert np.allclose(v, [np.exp(-1.0), np.exp(-2.0)], atol=1e-9)


def test_terms_refinement(inst1):
    base = invert_time_metrics(inst1, 0.0, [2.0], ("mean",))["mean"].values
    more = invert_time_metrics(inst1, 0.0, [2.0], ("mean",), InversionConfig(terms=24))["mean"].values
    fewer = invert_time_metrics(inst1, 0.0, [2.0], ("mean",), InversionConfig(terms=12))["mean"].values
    # more terms magnify rounding by 10^(M/3), so the check stays at moderate M
    assert np.max(np.abs(base - more)) < 1e-7
    assert np.max(np.abs(base - fewer)) < 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        InversionConfig(terms=5)
    with pytest.raises(ValueError):
        InversionConfig(method="talbot")
    with pytest.raises(ValueError):
        InversionConfig(target=1e-14)
    with pytest.raises(ValueError):
        invert(lambda s: 1 / s, 0.0)


def test_divergence_reported():
    with pytest.raises(NumericalError):
        invert(lambda s: np.exp(s), 1.0)


def test_unknown_metric(inst1):
    with pytest.raises(ValueError, match="unknown metrics"):
        invert_time_metrics(inst1, 0.0, [1.0], ("median",))


def test_probabilities_and_mass(inst1, inst3):
    for spec, x in ((inst1, 0.0), (inst3, 4.0)):
        out = invert_time_metrics(spec, x, [0.5, 2.0, 6.0], ("p_empty", "p_full", "mean", "var"))
        for m in ("p_empty", "p_full"):
            assert np.all(out[m].values > -1e-6) and np.all(out[m].values < 1 + 1e-6)
        assert np.all(out["mean"].values >= -1e-8)
        assert np.all(out["mean"].values <= spec.capacity + 1e-8)
        assert np.all(out["var"].values >= -1e-6)


def test_long_time_flattening(inst1):
    out = invert_time_metrics(inst1, 0.0, [100.0, 200.0], ("mean",))["mean"].values
    other = invert_time_metrics(inst1, 4.0, [200.0], ("mean",))["mean"].values
    assert np.max(np.abs(out[0] - out[1])) < 1e-4
    # the initial level is forgotten in the long run
    assert np.max(np.abs(out[1] - other[0])) < 1e-4


def test_single_metric_rows(inst1):
    rows = invert_time_metric(inst1, "mean", 0.0, 1, [1.0, 2.0])
    assert [r[0] for r in rows] == [1.0, 2.0]
    full = invert_time_metrics(inst1, 0.0, [1.0, 2.0], ("mean",))["mean"].values[:, 1]
    assert np.allclose([r[1] for r in rows], full)


def test_cdf_metric_matches_simulation(inst1):
    val = invert_time_metrics(inst1, 0.0, [2.0], ("cdf",), y=1.0)["cdf"].values[0]
    for i in range(2):
        est = simulate(inst1, 0.0, i, SimConfig(paths=100_000, seed=90 + i), metrics=(), times=(2.0,),
                       functions={"below": lambda V, J, idle, lost: (V <= 1.0).astype(float)})
        assert_within_se(val[i], *est["below"])


def test_idle_and_lost_over_time_match_simulation(inst1_neg):
    # t = 1 is where idle time starts to accrue on the no-event path; the paths
    # with events still leave a kink there, resolved to about 1e-3
    out = invert_time_metrics(inst1_neg, 1.0, [1.0, 3.0], ("idle", "lost"))
    for i in range(2):
        est = simulate(inst1_neg, 1.0, i, SimConfig(paths=100_000, seed=95 + i), metrics=("idle", "lost"),
                       times=(1.0, 3.0))
        assert_within_se(out["idle"].values[:, i], *est["idle"], floor=1e-3)
        assert_within_se(out["lost"].values[:, i], *est["lost"], floor=1e-3)


def test_complex_valued_mode():
    # transform of exp(i t) is 1 / (s - i)
    from mapq.inversion import euler_invert

    v, _ = euler_invert(lambda s: 1.0 / (s - 1j), 1.0, complex_valued=True)
    assert abs(v - np.exp(1j)) < 1e-8


def test_crossing_time_jump(inst1):
    # from x = 2 in the draining state the no-event path empties at t = 2, where
    # P(empty) jumps by exp(-4); the closed side is reported there
    vals = invert_time_metrics(inst1, 2.0, [1.999, 2.0, 2.001], ("p_empty",))["p_empty"].values[:, 0]
    assert vals[0] < 1e-3
    assert vals[1] > np.exp(-4.0) and abs(vals[1] - vals[2]) < 1e-3
    est = simulate(inst1, 2.0, 0, SimConfig(paths=200_000, seed=97), metrics=("p_empty",), times=(2.0,))
    assert_within_se(vals[1], *est["p_empty"], floor=1e-3)
