import math

import numpy as np
import pytest

from scripts.errors import DimensionMismatch, ScenarioLoadError, SignalOutOfRange
from scripts.feeder import SensitivityModel, model_for
from scripts.problem import (
    ProblemSettings,
    assemble_qp,
    constraint_values,
    is_feasible,
    objective_gradient,
    objective_value,
    with_sensitivity,
)


def test_two_bus_snapshot(two_bus_qp):
    qp = two_bus_qp
    tan = math.tan(math.acos(0.9))
    assert qp.n == 1 and qp.p == 6
    assert qp.box.u_max == pytest.approx([0.05 + 1e-6, 0.05 * tan + 1e-6])
    assert qp.box.u_min == pytest.approx([-1e-6, -0.05 * tan - 1e-6])
    assert qp.W == pytest.approx([-0.1, -0.05])
    assert qp.V_exo == pytest.approx([0.998])
    assert qp.objective.k_diag == pytest.approx([6.0, 2.0])
    assert qp.objective.d == pytest.approx([-0.3, 0.0])


def test_constraint_ordering(two_bus_qp):
    qp = two_bus_qp
    u = np.array([0.02, 0.0])
    f = constraint_values(qp, u)
    V = qp.voltage(u)[0]
    assert f == pytest.approx([
        qp.box.u_min[0] - 0.02, qp.box.u_min[1],
        0.02 - qp.box.u_max[0], -qp.box.u_max[1],
        0.95 - V, V - 1.05,
    ])
    assert np.allclose(qp.G @ u - qp.h, f)
    assert is_feasible(qp, u)
    assert not is_feasible(qp, np.array([0.1, 0.0]))


def test_gradient_matches_finite_differences(two_bus_qp):
    qp = two_bus_qp
    u = np.array([0.03, 0.01])
    g = objective_gradient(qp, u)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (objective_value(qp, u + e) - objective_value(qp, u - e)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_time_derivatives(ramp_provider):
    qp = ramp_provider(5.0)
    assert qp.box.du_max[0] == pytest.approx(0.01)
    assert qp.dd[0] == pytest.approx(-2.0 * 3.0 * 0.01)
    assert qp.dW == pytest.approx([-0.01, -0.005])


def test_with_sensitivity(two_bus_qp):
    other = SensitivityModel(A=np.array([[0.03]]), B=np.array([[0.04]]))
    qp = with_sensitivity(two_bus_qp, other)
    assert qp.D == pytest.approx(np.array([[0.03, 0.04]]))
    assert qp.box is two_bus_qp.box
    with pytest.raises(DimensionMismatch):
        with_sensitivity(two_bus_qp, SensitivityModel(A=np.eye(2), B=np.eye(2)))


def test_bad_inputs(two_bus, pv_device, constant_signals, two_bus_qp):
    with pytest.raises(DimensionMismatch):
        objective_value(two_bus_qp, np.zeros(3))
    with pytest.raises(SignalOutOfRange):
        assemble_qp([pv_device], model_for(two_bus), constant_signals, -1.0)
    with pytest.raises(ScenarioLoadError):
        ProblemSettings(v_min=1.1)


def test_halted_device_has_zero_box(two_bus, pv_device, constant_signals):
    qp = assemble_qp([pv_device], model_for(two_bus), constant_signals.with_halt(1), 1.0)
    assert qp.box.u_max == pytest.approx([1e-6, 1e-6])
    assert qp.objective.d == pytest.approx([0.0, 0.0])


def test_feeder_placement_box(ieee33_provider):
    qp = ieee33_provider(10.0)
    n = qp.n
    open_entries = qp.box.width > 1e-5
    assert np.flatnonzero(open_entries[:n]).tolist() == [1, 5, 10, 12, 15, 18, 23, 25, 27, 30]
    # storage is active-power only
    assert np.flatnonzero(open_entries[n:]).tolist() == [1, 5, 10, 12, 15, 18, 23, 25, 27]
