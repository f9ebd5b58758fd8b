import math
from dataclasses import replace

import numpy as np
import pytest

from scripts.errors import Infeasible, MisalignedTrajectories, ScenarioLoadError
from scripts.oracle_baselines import (
    BaselineSettings,
    compute_metrics,
    default_gains,
    discrete_pc_track,
    oracle_trajectory,
    primal_dual_track,
    qp_matrices,
    solve_box_qp,
    solve_sampled_qp,
)
from scripts.problem import constraint_values, objective_gradient, objective_value
from scripts.trajectory import TrajectoryBuilder

TIMES = [0.02 * k for k in range(151)]


def test_active_bounds():
    sol = solve_box_qp(np.eye(2), np.array([-2.0, -2.0]), np.eye(2), np.ones(2))
    assert sol.u == pytest.approx([1.0, 1.0], abs=1e-8)
    assert sol.multipliers == pytest.approx([1.0, 1.0], abs=1e-7)


def test_inactive_bounds():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = np.array([1.0, -1.0])
    G = np.vstack([np.eye(2), -np.eye(2)])
    sol = solve_box_qp(Q, q, G, np.full(4, 10.0))
    assert sol.u == pytest.approx(np.linalg.solve(Q, -q), abs=1e-8)
    assert np.all(sol.multipliers < 1e-8)


def test_kkt_residuals(two_bus_qp):
    sol = solve_sampled_qp(two_bus_qp)
    assert sol.residuals["stationarity"] <= 1e-8
    assert sol.residuals["primal"] <= 1e-8
    assert sol.residuals["complementarity"] <= 1e-8
    assert np.all(constraint_values(two_bus_qp, sol.u) <= 1e-8)
    assert sol.objective == pytest.approx(objective_value(two_bus_qp, sol.u))
    assert sol.multipliers.shape == (6,)
    assert np.all(sol.multipliers >= -1e-12)


def test_qp_matrices_match_objective(two_bus_qp):
    Q, q, _, _ = qp_matrices(two_bus_qp)
    u = np.array([0.01, -0.02])
    assert Q @ u + q == pytest.approx(objective_gradient(two_bus_qp, u))


def test_empty_box_is_infeasible(two_bus_qp):
    box = replace(two_bus_qp.box, u_min=two_bus_qp.box.u_max + 1.0)
    with pytest.raises(Infeasible) as err:
        solve_sampled_qp(replace(two_bus_qp, box=box))
    assert err.value.violated == [0, 1]


def test_oracle_trajectory_parallel_matches(ramp_provider):
    times = [0.0, 1.0, 2.0, 3.0]
    seq = oracle_trajectory(ramp_provider, times)
    par = oracle_trajectory(ramp_provider, times, warm=False, workers=2)
    for a, b in zip(seq, par):
        assert a.u == pytest.approx(b.u, abs=1e-7)


def test_primal_dual_holds_between_samples(ramp_provider):
    rec = primal_dual_track(ramp_provider, TIMES, sample_period=1.0, iterations_per_sample=5)
    assert len(rec) == len(TIMES)
    assert np.array_equal(rec.u[1], rec.u[49])
    assert not np.array_equal(rec.u[49], rec.u[50])
    qp = ramp_provider(TIMES[-1])
    g = default_gains(qp)
    assert g.beta_p > 0 and g.beta_d > 0


def test_primal_dual_stays_in_box(ramp_provider):
    rec = primal_dual_track(ramp_provider, TIMES, iterations_per_sample=20)
    for t, u in zip(rec.t, rec.u):
        # held setpoints come from the most recent sample
        box = ramp_provider(float(math.floor(t + 1e-9))).box
        assert np.all(u >= box.u_min - 1e-12)
        assert np.all(u <= box.u_max + 1e-12)


def test_discrete_pc_approaches_static_optimum(two_bus_qp):
    times = [0.1 * k for k in range(41)]
    rec = discrete_pc_track(lambda t: replace(two_bus_qp, t=t), times, sample_period=1.0, correction_steps=3)
    exact = solve_sampled_qp(two_bus_qp).u
    assert np.linalg.norm(rec.u[-1] - exact) < 1e-2
    assert set(rec.status) == {"discrete-pc"}


def test_discrete_pc_needs_corrections(two_bus_qp):
    with pytest.raises(ScenarioLoadError):
        discrete_pc_track(lambda t: two_bus_qp, [0.0], correction_steps=0)


def _record(us, fs, times):
    b = TrajectoryBuilder(1)
    for t, u, f in zip(times, us, fs):
        b.append(t=t, u=np.array(u), V=np.ones(1), f=f, s=0.0, c=0.0)
    return b.build()


def test_metrics_time_to_track():
    times = [0.0, 1.0, 2.0, 3.0]
    oracle = _record([[0.0, 0.0]] * 4, [0.0] * 4, times)
    tracked = _record([[1.0, 0.0], [0.1, 0.0], [1e-3, 0.0], [1e-4, 0.0]], [0.0] * 4, times)
    m = compute_metrics(tracked, oracle)
    assert m.err_u == pytest.approx([1.0, 0.1, 1e-3, 1e-4])
    assert m.time_to_track == 2.0
    summary = m.summary(burn_in=2.0)
    assert summary["max_err_u"] == pytest.approx(1e-3)
    assert summary["time_to_track"] == 2.0


def test_metrics_never_tracked():
    times = [0.0, 1.0]
    m = compute_metrics(_record([[1.0, 0.0]] * 2, [0.0] * 2, times), _record([[0.0, 0.0]] * 2, [0.0] * 2, times))
    assert math.isinf(m.time_to_track)
    assert m.summary()["time_to_track"] is None


def test_metrics_need_aligned_grids():
    a = _record([[0.0, 0.0]] * 2, [0.0] * 2, [0.0, 1.0])
    b = _record([[0.0, 0.0]] * 3, [0.0] * 3, [0.0, 1.0, 2.0])
    with pytest.raises(MisalignedTrajectories):
        compute_metrics(a, b)


def test_baseline_settings_validation():
    with pytest.raises(ScenarioLoadError):
        BaselineSettings(sample_period=0.0)


# box width per dimension; keeps every 1e-3 grid under ~2e5 points
GRID_WIDTHS = {1: 1.0, 2: 0.4, 3: 0.04, 4: 0.02}


def _random_box_qp(rng, d):
    rot, _ = np.linalg.qr(rng.normal(size=(d, d)))
    Q = rot @ np.diag(rng.uniform(1.0, 3.0, d)) @ rot.T
    width = GRID_WIDTHS[d]
    lo = np.round(rng.uniform(-1.0, 1.0, d), 3)
    hi = lo + width
    target = lo + 0.5 * width + rng.uniform(-width, width, d)
    return Q, -Q @ target, lo, hi


def _grid_minimum(Q, q, lo, hi):
    axes = [np.linspace(a, b, int(round((b - a) / 1e-3)) + 1) for a, b in zip(lo, hi)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    f = 0.5 * np.einsum("ij,jk,ik->i", X, Q, X) + X @ q
    k = int(np.argmin(f))
    return X[k], float(f[k])


def test_box_qp_matches_grid_search():
    rng = np.random.default_rng(21)
    for k in range(50):
        d = k % 4 + 1
        Q, q, lo, hi = _random_box_qp(rng, d)
        G = np.vstack([np.eye(d), -np.eye(d)])
        sol = solve_box_qp(Q, q, G, np.concatenate([hi, -lo]))
        u_grid, f_grid = _grid_minimum(Q, q, lo, hi)
        assert np.max(np.abs(sol.u - u_grid)) <= 2e-3
        assert sol.objective <= f_grid + 1e-9


def test_kkt_on_feeder_snapshots(ieee33_provider):
    for t in (0.5, 12.3, 30.0, 47.7):
        qp = ieee33_provider(t)
        sol = solve_sampled_qp(qp)
        Q, q, G, h = qp_matrices(qp)
        slack = h - G @ sol.u
        stationarity = Q @ sol.u + q + G.T @ sol.multipliers
        assert np.max(np.abs(stationarity)) <= 1e-8 * (1.0 + np.max(np.abs(q)))
        assert np.min(slack) >= -1e-8
        assert np.max(np.abs(sol.multipliers * slack)) <= 1e-8
        assert np.all(sol.multipliers >= -1e-12)
