import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from railfd import helm
from railfd.checkpoint import Checkpoint, dumps, loads
from railfd.errors import DataError, DimensionError, NumericError


def test_soft_threshold_orthonormal_design():
    beta = helm.ista_l1_solve(np.eye(2), np.array([3.0, 0.0005]), 1e-3)
    np.testing.assert_allclose(beta, [3.0 - 1e-3, 0.0], atol=1e-6)


def test_lambda_zero_least_squares():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((6, 3))
    x = rng.standard_normal(6)
    beta = helm.ista_l1_solve(h, x, 0.0, max_iter=100_000, tol=1e-15)
    np.testing.assert_allclose(beta, np.linalg.solve(h.T @ h, h.T @ x), atol=1e-6)


def test_ridge_closed_form():
    h = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.2]])
    c = 1e-5
    ref = np.linalg.inv(h.T @ h + c * np.eye(2)) @ h.T @ np.ones(3)
    np.testing.assert_allclose(helm.ridge_solve(h, np.ones(3), c), ref, atol=1e-8)


def test_ridge_large_c_shrinks_to_zero():
    h = np.random.default_rng(1).standard_normal((5, 3))
    assert np.abs(helm.ridge_solve(h, np.ones(5), 1e12)).max() < 1e-10


@given(st.integers(0, 2**31), st.floats(0.0, 1.0))
def test_property_ista_monotone(seed, lam):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((8, 4))
    x = rng.standard_normal((8, 3))
    hist = []
    helm.ista_l1_solve(h, x, lam, max_iter=200, history=hist)
    assert all(b <= a + 1e-12 * max(1.0, abs(a)) for a, b in zip(hist, hist[1:]))


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.floats(0, 5))
def test_property_soft_threshold_pointwise(v, lam):
    out = helm.soft_threshold(v, lam)
    for a, b in zip(v, out):
        assert b == pytest.approx(np.sign(a) * max(abs(a) - lam, 0.0))


def test_ista_rejects_nonfinite():
    with pytest.raises(NumericError):
        helm.ista_l1_solve(np.eye(2), np.array([np.inf, 0.0]), 0.1)
    with pytest.raises(DimensionError):
        helm.ista_l1_solve(np.eye(2), np.ones(3), 0.1)


def small_train(seed=0, n=80, length=32):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, length)
    return 1 + 0.1 * np.sin(2 * np.pi * (t[None] + rng.uniform(0, 1, (n, 1)))) + 0.01 * rng.standard_normal((n, length))


CFG = helm.HelmConfig(layer_sizes=(10, 10), occ_units=20)


def test_fit_deterministic_and_calibrated():
    x = small_train()
    a, b = helm.fit_helm(x, CFG, 3), helm.fit_helm(x, CFG, 3)
    assert helm.helm_health_values(a, x).tobytes() == helm.helm_health_values(b, x).tobytes()
    assert np.sum(helm.helm_health_values(a, x) > 1) <= np.ceil(0.01 * len(x))
    assert any(np.any(beta == 0) for beta in a.betas)


def test_health_definition():
    x = small_train()
    m = helm.fit_helm(x, CFG, 0)
    out = helm.occ_output(m, x[:3])
    np.testing.assert_allclose(helm.helm_health_values(m, x[:3]), np.abs(1 - out) / m.scale)
    assert helm.helm_health(m, x[0], 11).timestamp == 11


def test_fit_empty_and_dimension_errors():
    with pytest.raises(DataError):
        helm.fit_helm(np.zeros((0, 4)))
    m = helm.fit_helm(small_train(), CFG, 0)
    with pytest.raises(DimensionError):
        helm.helm_health_values(m, np.ones((1, 5)))


def test_section_round_trip():
    x = small_train()
    m = helm.fit_helm(x, CFG, 0)
    ck = loads(dumps(Checkpoint(None, {helm.SECTION_TAG: m.to_section()})))
    m2 = helm.HelmModel.from_section(ck.sections[helm.SECTION_TAG])
    assert helm.helm_health_values(m, x).tobytes() == helm.helm_health_values(m2, x).tobytes()
    assert m2.config == m.config


def test_flat_fault_fires():
    from railfd import signal_prep as sp
    from railfd.wheelsim import FaultAssignment, FleetConfig, inject_fault, simulate_wheel

    cfg = FleetConfig(n_wheels=2, train_wheels=2, monitoring_days=20)
    train = sp.prepare_many(simulate_wheel(cfg, 0, 0).measurements + simulate_wheel(cfg, 0, 1).measurements)
    model = helm.fit_helm(train, helm.HelmConfig(), 0)
    m = simulate_wheel(cfg, 1, 0).measurements[0]
    segs = inject_fault(m.segments, "flat", 1.0, np.random.default_rng(0), position=0.3, scale=m.load)
    faulty = sp.prepare(sp.Measurement(0, 0, 0, m.speed, m.load, tuple(segs)))
    assert helm.helm_health_values(model, faulty)[0] > 0.88
