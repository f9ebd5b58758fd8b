import numpy as np
import pytest

from scripts.dynamics import Counters
from scripts.errors import DimensionMismatch, RankDeficientExcitation, ScenarioLoadError, WindowNotFull
from scripts.estimator import (
    EstimatorSettings,
    MeasurementWindow,
    OnlineEstimator,
    Snapshot,
    build_regression,
    solve_sensitivities,
    update,
)
from scripts.feeder import GroundTruth, MeasurementNoiseSpec, voltage


@pytest.fixture(scope="module")
def truth(ieee33):
    return GroundTruth(ieee33, MeasurementNoiseSpec(reactance_var=0.001), seed=21)


def _snapshots(truth, count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        P = rng.uniform(-0.02, 0.01, 32)
        Q = rng.uniform(-0.01, 0.01, 32)
        out.append(Snapshot(t=0.02 * k, P=P, Q=Q, V=truth.measure(P, Q)))
    return out


def _window(snaps, m=1, eta=1.0):
    window = MeasurementWindow(32, m, eta)
    for s in snaps:
        update(window, s)
    return window


def test_exact_recovery(truth):
    window = _window(_snapshots(truth, 2))
    est = solve_sensitivities(build_regression(window, truth.incidence, truth.zeta), truth.incidence, truth.zeta)
    x_true = truth.true_topology.x
    assert np.max(np.abs(est.x_hat - x_true) / x_true) <= 1e-6
    assert est.clamped == 0
    for snap in window.snapshots:
        assert np.linalg.norm(voltage(est.model, snap.P, snap.Q) - snap.V) <= 1e-8


def test_single_snapshot_is_enough(truth):
    window = _window(_snapshots(truth, 1, seed=4), m=0)
    est = solve_sensitivities(build_regression(window, truth.incidence, truth.zeta), truth.incidence, truth.zeta)
    assert np.allclose(est.x_hat, truth.true_topology.x, rtol=1e-6)


def test_forgetting_keeps_exact_recovery(truth):
    window = _window(_snapshots(truth, 5, seed=9), m=3, eta=0.25)
    assert len(window) == 4
    sys = build_regression(window, truth.incidence, truth.zeta)
    assert sys.Z.shape == (4 * 32, 32)
    est = solve_sensitivities(sys, truth.incidence, truth.zeta)
    assert np.allclose(est.x_hat, truth.true_topology.x, rtol=1e-6)


def test_window_must_be_full(truth):
    window = _window(_snapshots(truth, 1))
    with pytest.raises(WindowNotFull):
        build_regression(window, truth.incidence, truth.zeta)


def test_window_rejects_wrong_shape():
    window = MeasurementWindow(3, 1)
    with pytest.raises(DimensionMismatch):
        window.push(Snapshot(t=0.0, P=np.zeros(2), Q=np.zeros(3), V=np.ones(3)))


def test_topology_change_flushes():
    window = MeasurementWindow(2, 1)
    update(window, Snapshot(t=0.0, P=np.ones(2), Q=np.ones(2), V=np.ones(2)))
    update(window, topology_changed=True)
    assert len(window) == 0


def test_zero_excitation_is_rank_deficient(truth):
    zero = Snapshot(t=0.0, P=np.zeros(32), Q=np.zeros(32), V=np.ones(32))
    window = _window([zero, zero])
    counters = Counters()
    with pytest.raises(RankDeficientExcitation):
        solve_sensitivities(build_regression(window, truth.incidence, truth.zeta), truth.incidence,
                            truth.zeta, counters=counters)
    assert counters.lstsq_solves == 1


def test_online_estimator_statuses(truth):
    counters = Counters()
    est = OnlineEstimator(truth.incidence, truth.zeta, truth.rated_model, EstimatorSettings(window=1),
                          counters=counters)
    good = _snapshots(truth, 2, seed=3)
    model, status = est.observe(good[0])
    assert status == "rated-fallback"
    assert model is truth.rated_model
    model, status = est.observe(good[1])
    assert status == "estimated"
    assert np.allclose(model.B, truth.model.B, rtol=1e-6, atol=1e-12)

    zero = Snapshot(t=1.0, P=np.zeros(32), Q=np.zeros(32), V=np.ones(32))
    model, status = est.observe(zero)
    assert status == "estimated"
    held, status = est.observe(zero)
    assert status == "held"
    assert held is model
    assert counters.lstsq_solves == 3


def test_reset_falls_back_to_rated(truth):
    est = OnlineEstimator(truth.incidence, truth.zeta, truth.rated_model)
    for snap in _snapshots(truth, 2):
        est.observe(snap)
    assert est.status == "estimated"
    est.reset(truth.incidence, truth.zeta, truth.rated_model)
    assert est.status == "rated-fallback"
    assert len(est.window) == 0
    assert est.model is truth.rated_model


def test_fixed_rated_mode_never_solves(truth):
    counters = Counters()
    est = OnlineEstimator(truth.incidence, truth.zeta, truth.rated_model, mode="fixed_rated", counters=counters)
    for snap in _snapshots(truth, 3):
        model, status = est.observe(snap)
        assert status == "fixed-rated"
        assert model is truth.rated_model
    assert counters.lstsq_solves == 0


def test_estimate_every_k_intervals(truth):
    counters = Counters()
    est = OnlineEstimator(truth.incidence, truth.zeta, truth.rated_model,
                          EstimatorSettings(window=0, every=2), counters=counters)
    for snap in _snapshots(truth, 5):
        est.observe(snap)
    assert counters.lstsq_solves == 3


def test_settings_validation(truth):
    with pytest.raises(ScenarioLoadError):
        EstimatorSettings(forgetting=0.0)
    with pytest.raises(ScenarioLoadError):
        OnlineEstimator(truth.incidence, truth.zeta, truth.rated_model, mode="bogus")
