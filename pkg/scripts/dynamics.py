"""Prediction-correction barrier flow and its explicit integration.

du/dt = -H^{-1} [alpha * grad_u + grad_us * ds/dt + grad_uc * dc/dt + grad_ut]
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from scripts.barrier import BarrierSchedule, eval_blocks, slacks
from scripts.devices import DeviceSpec, ess_soc_step
from scripts.errors import IllConditionedHessian, ScenarioLoadError, StepRejected
from scripts.problem import TimeVaryingQp, constraint_values

logger = logging.getLogger(__name__)

QpProvider = Callable[[float], TimeVaryingQp]


@dataclass
class Counters:
    """Instrumentation shared by the engine, the integrator and the estimator."""
    factorizations: int = 0
    substeps: int = 0
    halvings: int = 0
    lstsq_solves: int = 0
    reseeds: int = 0
    steps: int = 0
    max_factorizations_per_substep: int = 0
    max_lstsq_per_interval: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class IntegratorConfig:
    tau: float = 0.02
    n_sub: int = 4
    alpha: float = 100.0
    max_halvings: int = 20
    cond_cap: float = 1e12
    slack_margin: float = 1e-3
    boundary_fraction: float = 0.1

    def __post_init__(self):
        if self.tau <= 0 or self.n_sub < 1 or self.alpha <= 0:
            raise ScenarioLoadError("integrator needs tau > 0, n_sub >= 1 and alpha > 0")
        if not 0.0 <= self.boundary_fraction < 1.0:
            raise ScenarioLoadError("boundary_fraction must lie in [0, 1)")
        if self.alpha * self.tau / self.n_sub >= 2.0:
            logger.warning("alpha * tau / n_sub = %.3f >= 2: correction flow is unstable under explicit Euler",
                           self.alpha * self.tau / self.n_sub)


@dataclass(frozen=True)
class PcState:
    u: np.ndarray
    t: float
    schedule: BarrierSchedule
    soc: Dict[int, float] = field(default_factory=dict)

    @property
    def s(self) -> float:
        return self.schedule.s(self.t)

    @property
    def c(self) -> float:
        return self.schedule.c(self.t)


def init_slack(u0: np.ndarray, qp: TimeVaryingQp, margin: float = 1e-3, s_default: float = 2.0) -> float:
    return max(s_default, float(np.max(constraint_values(qp, u0))) + margin)


def ensure_interior(state: PcState, qp: TimeVaryingQp, margin: float = 1e-3) -> PcState:
    """Restart the slack decay at state.t when u sits outside the relaxed domain."""
    worst = float(np.max(constraint_values(qp, state.u)))
    if worst < state.s:
        return state
    s_new = worst + margin
    logger.info("Reseeding slack at t=%.3fs: s=%.3e (max f_i=%.3e)", state.t, s_new, worst)
    return replace(state, schedule=state.schedule.reseeded(state.t, s_new))


def _factor(hess: np.ndarray, cond_cap: float):
    try:
        factor = sla.cho_factor(hess, lower=True, check_finite=False)
    except sla.LinAlgError as e:
        raise IllConditionedHessian(f"Hessian is not positive definite: {e}")
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= 0 or (diag.max() / diag.min()) ** 2 > cond_cap:
        raise IllConditionedHessian(
            f"Hessian condition estimate {(diag.max() / max(diag.min(), 1e-300)) ** 2:.2e} above {cond_cap:.0e}")
    return factor


def pc_rhs(state: PcState, qp: TimeVaryingQp, cfg: IntegratorConfig,
           counters: Optional[Counters] = None) -> np.ndarray:
    t = state.t
    sched = state.schedule
    blocks = eval_blocks(qp, state.u, sched.s(t), sched.c(t))
    rhs = (cfg.alpha * blocks.grad_u
           + blocks.grad_us * sched.ds(t)
           + blocks.grad_uc * sched.dc(t)
           + blocks.grad_ut)
    factor = _factor(blocks.hess_uu, cfg.cond_cap)
    if counters is not None:
        counters.factorizations += 1
    return -sla.cho_solve(factor, rhs, check_finite=False)


def step(
    state: PcState,
    qp_provider: QpProvider,
    cfg: IntegratorConfig,
    storage: Sequence[DeviceSpec] = (),
    counters: Optional[Counters] = None,
) -> PcState:
    """Advance one outer interval tau with n_sub Euler substeps (halved on domain violation)."""
    t_start = state.t
    t_end = t_start + cfg.tau
    h_nominal = cfg.tau / cfg.n_sub
    u = state.u
    t = t_start
    qp_cache: Dict[float, TimeVaryingQp] = {}

    def qp_at(tq: float) -> TimeVaryingQp:
        if tq not in qp_cache:
            qp_cache[tq] = qp_provider(tq)
        return qp_cache[tq]

    while t < t_end:
        before = counters.factorizations if counters is not None else 0
        du = pc_rhs(replace(state, u=u, t=t), qp_at(t), cfg, counters)
        # each slack may shrink to at most boundary_fraction of its value per substep
        floor = cfg.boundary_fraction * slacks(qp_at(t), u, state.schedule.s(t))
        remaining = t_end - t
        h = min(h_nominal, remaining)
        halvings = 0
        while True:
            t_new = t_end if h >= remaining * (1.0 - 1e-9) else t + h
            u_new = u + (t_new - t) * du
            sl = slacks(qp_at(t_new), u_new, state.schedule.s(t_new))
            worst = int(np.argmin(sl - floor))
            if sl[worst] > floor[worst] and sl[worst] > 0 and np.all(np.isfinite(u_new)):
                break
            halvings += 1
            if halvings > cfg.max_halvings:
                raise StepRejected(t, worst, f"slack {sl[worst]:.3e} after {cfg.max_halvings} halvings")
            h *= 0.5
        if counters is not None:
            counters.substeps += 1
            counters.halvings += halvings
            counters.max_factorizations_per_substep = max(
                counters.max_factorizations_per_substep, counters.factorizations - before)
        u, t = u_new, t_new
        qp_cache = {k: v for k, v in qp_cache.items() if k >= t}

    soc = dict(state.soc)
    for dev in storage:
        if dev.kind == "ESS" and dev.node in soc:
            soc[dev.node] = ess_soc_step(dev.ess, soc[dev.node], float(state.u[dev.node - 1]), cfg.tau)
    if counters is not None:
        counters.steps += 1
    return replace(state, u=u, t=t_end, soc=soc)
