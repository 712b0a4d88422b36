import json

import numpy as np
import pytest

from mapq.cli import resolve_model
from mapq.model_core import JumpDistribution, LevyComponent, ModelSpec, load_model, model_from_dict


def fixture_model(name):
    return load_model(resolve_model(name))


def negative_drift_instance1():
    """Instance 1 with both drifts set to -1 (compound Poisson input in every state)."""
    data = json.loads(resolve_model("instance1").read_text())
    data["states"][1]["drift"] = -1.0
    return model_from_dict(data)


def single(component, K=4.0):
    return ModelSpec.create([[0.0]], [component], K)


def random_component(rng):
    """Random one-state component: Brownian, compound Poisson or subordinator."""
    kind = rng.integers(3)
    lam = float(rng.uniform(0.3, 2.0))
    jump = JumpDistribution.exponential(float(rng.uniform(0.5, 2.0)))
    if kind == 0:
        return LevyComponent(float(rng.uniform(-1.5, 0.5)), float(rng.uniform(0.5, 1.5)))
    if kind == 1:
        return LevyComponent(float(rng.uniform(-2.0, -0.3)), 0.0, lam, jump)
    return LevyComponent(float(rng.uniform(0.0, 1.0)), 0.0, lam, jump)


def random_model(rng, d=2, K=None):
    """Random ``d``-state model mixing Brownian, compound Poisson and subordinator states."""
    comps = [random_component(rng) for _ in range(d)]
    Q = rng.uniform(0.2, 1.5, (d, d))
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    jumps = {}
    if d > 1 and rng.random() < 0.5:
        jumps[(0, 1)] = JumpDistribution.exponential(float(rng.uniform(0.5, 2.0)))
    return ModelSpec.create(Q, comps, float(K or rng.uniform(1.0, 5.0)), jumps)


@pytest.fixture(scope="session")
def inst1():
    return fixture_model("instance1")


@pytest.fixture(scope="session")
def inst2():
    return fixture_model("instance2")


@pytest.fixture(scope="session")
def inst3():
    return fixture_model("instance3")


@pytest.fixture(scope="session")
def inst1_neg():
    return negative_drift_instance1()


def assert_within_se(analytic, mc, se, k=3.0, floor=1e-12):
    analytic, mc, se = (np.asarray(v, dtype=float) for v in (analytic, mc, se))
    diff = np.abs(analytic - mc)
    ok = (diff <= k * se) | (diff <= floor)
    assert np.all(ok), f"analytic {analytic} vs MC {mc} (se {se})"


ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    """Record and print the verdict line of one acceptance criterion."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
