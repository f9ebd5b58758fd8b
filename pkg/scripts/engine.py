"""Scenario execution: events, the one-step-per-interval loop, comparisons.

Per interval t_k = k * tau:
  events due at t_k -> measure (true feeder, current setpoints) -> estimator
  -> assemble qp -> record -> one dynamics step.
"""
import logging
import time
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from scripts.devices import DeviceSpec, ess_nodes
from scripts.dynamics import Counters, PcState, ensure_interior, init_slack, step
from scripts.errors import UnknownNode
from scripts.estimator import MeasurementWindow, OnlineEstimator, Snapshot, build_regression, solve_sensitivities, update
from scripts.feeder import FeederTopology, GroundTruth, SensitivityModel, voltage
from scripts.oracle_baselines import (
    TrackingMetrics,
    compute_metrics,
    discrete_pc_track,
    primal_dual_track,
    solve_sampled_qp,
)
from scripts.problem import TimeVaryingQp, assemble_qp, objective_value, with_sensitivity
from scripts.scenario import Event, PreparedScenario, event_topology
from scripts.signals import ExogenousSignals
from scripts.trajectory import TrajectoryBuilder, TrajectoryRecord

logger = logging.getLogger(__name__)

REFERENCE_STEP_S = 0.0117
STEP_BUDGET_S = 0.02


@dataclass
class World:
    topology: FeederTopology
    truth: GroundTruth
    signals: ExogenousSignals


def _renewable(devices: Sequence[DeviceSpec], node: Optional[int]) -> DeviceSpec:
    for dev in devices:
        if dev.node == node and dev.kind == "PV":
            return dev
    raise UnknownNode(f"no PV device at node {node}")


def apply_event(
    state: Optional[PcState],
    world: World,
    event: Event,
    index: int,
    devices: Sequence[DeviceSpec],
    estimator: Optional[OnlineEstimator] = None,
) -> Tuple[Optional[PcState], World]:
    """Apply one event; the dispatch state carries over unchanged."""
    if event.kind == "pv_halt":
        _renewable(devices, event.node)
        logger.info("t=%.3fs: PV%d halted", event.time, event.node)
        return state, replace(world, signals=world.signals.with_halt(event.node))
    if event.kind == "pv_resume":
        _renewable(devices, event.node)
        logger.info("t=%.3fs: PV%d resumed", event.time, event.node)
        return state, replace(world, signals=world.signals.with_resume(event.node))

    topology = event_topology(world.topology, event)
    world.truth.reconfigure(topology, index + 1)
    if estimator is not None:
        estimator.reset(world.truth.incidence, world.truth.zeta, world.truth.rated_model)
    logger.info("t=%.3fs: reconfigured feeder (+%s -%s); estimator window flushed",
                event.time, [a[:2] for a in event.add], [r[:2] for r in event.remove])
    return state, replace(world, topology=topology)


def _provider(sc: PreparedScenario, model: SensitivityModel, signals: ExogenousSignals, soc: Dict[int, float]):
    def qp_at(t: float) -> TimeVaryingQp:
        return assemble_qp(sc.devices, model, signals, t, sc.problem, soc)
    return qp_at


class Timeline:
    """Replays scenario events forward in time for the oracle and the baselines.

    Uses true sensitivities and the initial storage energy. Queries must be non-decreasing in t.
    """

    def __init__(self, sc: PreparedScenario):
        self.sc = sc
        self.world = World(sc.topology, GroundTruth(sc.topology, sc.noise, sc.seed), sc.signals)
        self.soc = {d.node: d.ess.w0 for d in ess_nodes(sc.devices)}
        self._pending = list(enumerate(sc.events))

    def qp(self, t: float) -> TimeVaryingQp:
        while self._pending and self._pending[0][1].time <= t + 1e-9:
            idx, ev = self._pending.pop(0)
            _, self.world = apply_event(None, self.world, ev, idx, self.sc.devices)
        return assemble_qp(self.sc.devices, self.world.truth.model, self.world.signals, t, self.sc.problem, self.soc)


def run(
    sc: PreparedScenario,
    with_oracle: bool = False,
    counters: Optional[Counters] = None,
    mode: Optional[str] = None,
    step_times: Optional[List[float]] = None,
) -> TrajectoryRecord:
    counters = counters if counters is not None else Counters()
    n = sc.topology.n
    tau = sc.integrator.tau
    truth = GroundTruth(sc.topology, sc.noise, sc.seed)
    world = World(sc.topology, truth, sc.signals)
    estimator = OnlineEstimator(truth.incidence, truth.zeta, truth.rated_model, sc.estimator,
                                mode or sc.mode, counters)
    storage = ess_nodes(sc.devices)
    builder = TrajectoryBuilder(n)
    pending = list(enumerate(sc.events))
    state: Optional[PcState] = None
    warm = None

    for k in range(sc.steps + 1):
        t = k * tau
        tick = time.perf_counter()
        while pending and pending[0][1].time <= t + 1e-9:
            idx, ev = pending.pop(0)
            state, world = apply_event(state, world, ev, idx, sc.devices, estimator)

        if state is None:
            soc0 = {d.node: d.ess.w0 for d in storage}
            qp0 = _provider(sc, estimator.model, world.signals, soc0)(t)
            u0 = qp0.box.midpoint
            schedule = sc.schedule
            s0 = init_slack(u0, qp0, sc.integrator.slack_margin, schedule.s(t))
            if s0 > schedule.s(t):
                schedule = schedule.reseeded(t, s0)
            state = PcState(u=u0, t=t, schedule=schedule, soc=soc0)

        W, _ = world.signals.loads(t)
        P_net = state.u[:n] + W[:n]
        Q_net = state.u[n:] + W[n:]
        V_meas = world.truth.measure(P_net, Q_net)
        solves_before = counters.lstsq_solves
        model, status = estimator.observe(Snapshot(t=t, P=P_net, Q=Q_net, V=V_meas))
        counters.max_lstsq_per_interval = max(counters.max_lstsq_per_interval, counters.lstsq_solves - solves_before)

        provider = _provider(sc, model, world.signals, state.soc)
        qp = provider(t)
        reseeded = ensure_interior(state, qp, sc.integrator.slack_margin)
        if reseeded is not state:
            counters.reseeds += 1
            state = reseeded

        true_qp = with_sensitivity(qp, world.truth.model)
        oracle_u = oracle_f = None
        if with_oracle:
            sol = solve_sampled_qp(true_qp, warm_start=warm)
            warm = sol.u
            oracle_u, oracle_f = sol.u, sol.objective
        builder.append(
            t=t, u=state.u, V=true_qp.voltage(state.u), f=objective_value(true_qp, state.u),
            s=state.s, c=state.c, status=status, oracle_u=oracle_u, oracle_f=oracle_f,
        )

        if k < sc.steps:
            state = step(state, provider, sc.integrator, storage, counters)
            state = replace(state, t=(k + 1) * tau)
        if step_times is not None:
            step_times.append(time.perf_counter() - tick)

    return builder.build()


def oracle_record(sc: PreparedScenario) -> TrajectoryRecord:
    """Oracle trajectory on the replayed timeline (frozen storage energy)."""
    timeline = Timeline(sc)
    builder = TrajectoryBuilder(sc.topology.n)
    warm = None
    for t in sc.times:
        qp = timeline.qp(t)
        sol = solve_sampled_qp(qp, warm_start=warm)
        warm = sol.u
        builder.append(t=t, u=sol.u, V=qp.voltage(sol.u), f=sol.objective, s=0.0, c=0.0, status="oracle")
    return builder.build()


@dataclass
class Comparison:
    records: Dict[str, TrajectoryRecord]
    metrics: Dict[str, TrackingMetrics]
    burn_in: float

    def summary(self) -> Dict[str, Dict[str, float]]:
        return {name: m.summary(self.burn_in) for name, m in self.metrics.items()}


def run_compare(sc: PreparedScenario, include_fixed: bool = True, counters: Optional[Counters] = None) -> Comparison:
    bs = sc.baselines
    pc = run(sc, with_oracle=True, counters=counters)
    records = {"pc": pc}
    metrics = {"pc": compute_metrics(pc, pc.oracle_record())}

    if include_fixed and sc.mode == "estimated":
        fixed = run(sc, with_oracle=True, mode="fixed_rated")
        records["pc_fixed_rated"] = fixed
        metrics["pc_fixed_rated"] = compute_metrics(fixed, fixed.oracle_record())

    oracle = oracle_record(sc)
    records["oracle"] = oracle
    pd = primal_dual_track(Timeline(sc).qp, sc.times, bs.sample_period, bs.pd_iterations,
                           step_scale=bs.pd_step_scale, dual_scale=bs.pd_dual_scale)
    dpc = discrete_pc_track(Timeline(sc).qp, sc.times, bs.sample_period, bs.dpc_corrections, schedule=sc.schedule)
    records["primal_dual"] = pd
    records["discrete_pc"] = dpc
    metrics["primal_dual"] = compute_metrics(pd, oracle)
    metrics["discrete_pc"] = compute_metrics(dpc, oracle)
    return Comparison(records=records, metrics=metrics, burn_in=bs.burn_in)


def estimate_report(sc: PreparedScenario, snapshots: int = 20) -> Dict[str, object]:
    """Recover perturbed reactances from generic injections and compare against the truth."""
    truth = GroundTruth(sc.topology, sc.noise, sc.seed)
    n = sc.topology.n
    rng = np.random.default_rng([sc.seed, 3])
    window = MeasurementWindow(n, sc.estimator.window, sc.estimator.forgetting)
    base_p = np.array(sc.topology.base_p or (0.01,) * n)
    base_q = np.array(sc.topology.base_q or (0.005,) * n)
    counters = Counters()
    errors: List[float] = []
    residuals: List[float] = []
    for k in range(snapshots):
        P = -base_p * rng.uniform(0.5, 1.5, n) + rng.uniform(0.0, 0.01, n)
        Q = -base_q * rng.uniform(0.5, 1.5, n) + rng.uniform(-0.005, 0.005, n)
        update(window, Snapshot(t=k * sc.integrator.tau, P=P, Q=Q, V=truth.measure(P, Q)))
        if not window.full:
            continue
        est = solve_sensitivities(build_regression(window, truth.incidence, truth.zeta), truth.incidence,
                                  truth.zeta, counters=counters)
        x_true = truth.true_topology.x
        errors.append(float(np.max(np.abs(est.x_hat - x_true) / x_true)))
        residuals.append(max(
            float(np.max(np.abs(voltage(est.model, s.P, s.Q) - s.V))) for s in window.snapshots
        ))
    return {
        "scenario": sc.name,
        "snapshots": snapshots,
        "window": sc.estimator.window,
        "forgetting": sc.estimator.forgetting,
        "estimates": len(errors),
        "max_relative_error": max(errors) if errors else None,
        "median_relative_error": float(np.median(errors)) if errors else None,
        "max_voltage_residual": max(residuals) if residuals else None,
        "lstsq_solves": counters.lstsq_solves,
    }


def bench(sc: PreparedScenario, steps: Optional[int] = None) -> Dict[str, object]:
    if steps is not None:
        sc = replace(sc, horizon_s=steps * sc.integrator.tau)
    counters = Counters()
    step_times: List[float] = []
    run(sc, counters=counters, step_times=step_times)
    times = np.array(step_times[:-1] or step_times)
    median = float(np.median(times))
    return {
        "scenario": sc.name,
        "steps": int(len(times)),
        "median_step_s": median,
        "p95_step_s": float(np.percentile(times, 95)),
        "reference_step_s": REFERENCE_STEP_S,
        "budget_s": STEP_BUDGET_S,
        "within_budget": median <= STEP_BUDGET_S,
        "counters": counters.as_dict(),
    }
