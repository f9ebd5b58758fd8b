"""Sampled exact-QP oracle, the two iterative baselines, and tracking metrics."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from scripts.barrier import BarrierSchedule, eval_blocks, eval_phi, slacks
from scripts.errors import (
    Infeasible,
    MaxIterations,
    MisalignedTrajectories,
    ScenarioLoadError,
)
from scripts.problem import TimeVaryingQp, constraint_values, objective_value
from scripts.trajectory import TrajectoryBuilder, TrajectoryRecord

logger = logging.getLogger(__name__)

QpProvider = Callable[[float], TimeVaryingQp]


# --- oracle ------------------------------------------------------------------

@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    multipliers: np.ndarray
    objective: float
    residuals: Dict[str, float]
    iterations: int


@dataclass(frozen=True)
class OracleSettings:
    tol_stationarity: float = 1e-9
    tol_primal: float = 1e-10
    tol_complementarity: float = 1e-10
    max_iter: int = 100
    step_fraction: float = 0.99


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def solve_box_qp(
    Q: np.ndarray,
    q: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    warm_start: Optional[np.ndarray] = None,
    settings: Optional[OracleSettings] = None,
) -> QpSolution:
    """Mehrotra predictor-corrector for min 1/2 x'Qx + q'x s.t. Gx <= h."""
    cfg = settings or OracleSettings()
    nx, m = Q.shape[0], G.shape[0]
    x = np.zeros(nx) if warm_start is None else np.array(warm_start, dtype=float)
    w = np.maximum(h - G @ x, 1.0)
    z = np.ones(m)
    scale = 1.0 + float(np.max(np.abs(q), initial=0.0))

    for it in range(1, cfg.max_iter + 1):
        r_d = Q @ x + q + G.T @ z
        r_p = G @ x + w - h
        mu = float(w @ z) / m
        if (np.max(np.abs(r_d)) <= cfg.tol_stationarity * scale
                and np.max(np.abs(r_p)) <= cfg.tol_primal
                and np.max(w * z) <= cfg.tol_complementarity):
            violation = np.maximum(G @ x - h, 0.0)
            return QpSolution(
                u=x,
                multipliers=z,
                objective=float(0.5 * x @ Q @ x + q @ x),
                residuals={
                    "stationarity": float(np.max(np.abs(r_d))),
                    "primal": float(np.max(violation, initial=0.0)),
                    "complementarity": float(np.max(np.abs(w * z))),
                },
                iterations=it - 1,
            )
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e10 or mu > 1e20:
            break

        ratio = z / w
        try:
            factor = sla.cho_factor(Q + G.T @ (ratio[:, None] * G), lower=True, check_finite=False)
        except sla.LinAlgError:
            break

        def direction(r_c: np.ndarray):
            dx = sla.cho_solve(factor, -r_d + G.T @ ((r_c - z * r_p) / w), check_finite=False)
            dw = -r_p - G @ dx
            dz = -(r_c + z * dw) / w
            return dx, dw, dz

        # predictor
        dx_a, dw_a, dz_a = direction(w * z)
        a_aff = min(_max_step(w, dw_a), _max_step(z, dz_a))
        mu_aff = float((w + a_aff * dw_a) @ (z + a_aff * dz_a)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        dx, dw, dz = direction(w * z + dw_a * dz_a - sigma * mu)
        a = cfg.step_fraction * min(_max_step(w, dw), _max_step(z, dz))
        a = min(a, 1.0)
        x = x + a * dx
        w = w + a * dw
        z = z + a * dz

    violated = [int(i) for i in np.flatnonzero(G @ x - h > 1e-6)] if np.all(np.isfinite(x)) else []
    r_p = G @ x + w - h
    if violated or not np.all(np.isfinite(x)) or np.max(np.abs(r_p)) > 1e-6:
        raise Infeasible(f"QP appears infeasible ({len(violated)} constraints violated)", violated)
    raise MaxIterations(f"interior-point iteration did not converge in {cfg.max_iter} iterations")


def qp_matrices(qp: TimeVaryingQp):
    obj = qp.objective
    Q = np.diag(obj.k_diag) + obj.gamma * qp.DtD
    q = obj.d + obj.gamma * qp.D.T @ (qp.V_exo - obj.v_nom)
    return Q, q, qp.G, qp.h


def solve_sampled_qp(qp: TimeVaryingQp, warm_start: Optional[np.ndarray] = None,
                     settings: Optional[OracleSettings] = None) -> QpSolution:
    lo, hi = qp.box.u_min, qp.box.u_max
    if np.any(lo > hi):
        raise Infeasible("control box is empty", [int(i) for i in np.flatnonzero(lo > hi)])
    Q, q, G, h = qp_matrices(qp)
    if warm_start is not None:
        warm_start = np.clip(warm_start, lo, hi)
    sol = solve_box_qp(Q, q, G, h, warm_start=warm_start, settings=settings)
    return QpSolution(
        u=sol.u,
        multipliers=sol.multipliers,
        objective=objective_value(qp, sol.u),
        residuals=sol.residuals,
        iterations=sol.iterations,
    )


def oracle_trajectory(qp_provider: QpProvider, times: Sequence[float], warm: bool = True,
                      workers: int = 1) -> List[QpSolution]:
    """Oracle solves along a time grid; sequential with warm starts, or concurrent without."""
    qps = [qp_provider(t) for t in times]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(solve_sampled_qp, qps))
    out: List[QpSolution] = []
    prev = None
    for qp in qps:
        sol = solve_sampled_qp(qp, warm_start=prev if warm else None)
        out.append(sol)
        prev = sol.u
    return out


# --- baselines ---------------------------------------------------------------

@dataclass(frozen=True)
class BaselineSettings:
    sample_period: float = 1.0
    pd_iterations: int = 10
    pd_step_scale: float = 1.0
    pd_dual_scale: float = 0.5
    dpc_corrections: int = 3
    burn_in: float = 3.0

    def __post_init__(self):
        if self.sample_period <= 0 or self.pd_iterations < 0 or self.dpc_corrections < 1:
            raise ScenarioLoadError("baseline settings out of range")
        if self.pd_step_scale < 0 or self.pd_dual_scale < 0:
            raise ScenarioLoadError("baseline gains must be non-negative")


@dataclass(frozen=True)
class PrimalDualGains:
    beta_p: float
    beta_d: float


def default_gains(qp: TimeVaryingQp, step_scale: float = 1.0, dual_scale: float = 0.5) -> PrimalDualGains:
    """beta_p = scale / L with L the gradient Lipschitz constant; beta_d from the dual curvature."""
    Q, _, _, _ = qp_matrices(qp)
    lipschitz = float(np.linalg.eigvalsh(Q)[-1])
    dual_curv = float(np.linalg.eigvalsh(qp.D @ np.linalg.solve(Q, qp.D.T))[-1])
    return PrimalDualGains(beta_p=step_scale / lipschitz, beta_d=dual_scale / max(dual_curv, 1e-12))


def _record_row(builder: TrajectoryBuilder, qp: TimeVaryingQp, u: np.ndarray, status: str,
                s: float = 0.0, c: float = 0.0) -> None:
    builder.append(t=qp.t, u=u, V=qp.voltage(u), f=objective_value(qp, u), s=s, c=c, status=status)


def _sample_index(t: float, period: float) -> int:
    return int(math.floor(t / period + 1e-9))


def primal_dual_track(
    qp_provider: QpProvider,
    times: Sequence[float],
    sample_period: float = 1.0,
    iterations_per_sample: int = 10,
    gains: Optional[PrimalDualGains] = None,
    u0: Optional[np.ndarray] = None,
    step_scale: float = 1.0,
    dual_scale: float = 0.5,
) -> TrajectoryRecord:
    """Projected primal descent / dual ascent on the voltage-dualized Lagrangian, held between samples."""
    builder: Optional[TrajectoryBuilder] = None
    u = None
    lam_lo = lam_hi = None
    current = -1
    for t in times:
        qp = qp_provider(t)
        if builder is None:
            builder = TrajectoryBuilder(qp.n)
            u = qp.box.midpoint.copy() if u0 is None else np.array(u0, dtype=float)
            lam_lo = np.zeros(qp.n)
            lam_hi = np.zeros(qp.n)
        k = _sample_index(t, sample_period)
        if k != current:
            current = k
            g = gains or default_gains(qp, step_scale, dual_scale)
            obj = qp.objective
            for _ in range(iterations_per_sample):
                V = qp.voltage(u)
                grad = obj.k_diag * u + obj.d + obj.gamma * qp.D.T @ (V - obj.v_nom) + qp.D.T @ (lam_hi - lam_lo)
                u = np.clip(u - g.beta_p * grad, qp.box.u_min, qp.box.u_max)
                V = qp.voltage(u)
                lam_lo = np.maximum(0.0, lam_lo + g.beta_d * (qp.v_min - V))
                lam_hi = np.maximum(0.0, lam_hi + g.beta_d * (V - qp.v_max))
        _record_row(builder, qp, u, "primal-dual")
    if builder is None:
        raise ScenarioLoadError("primal_dual_track needs at least one time point")
    return builder.build()


def _newton_correction(qp: TimeVaryingQp, u: np.ndarray, s: float, c: float, max_backtracks: int = 40) -> np.ndarray:
    blocks = eval_blocks(qp, u, s, c)
    factor = sla.cho_factor(blocks.hess_uu, lower=True, check_finite=False)
    du = -sla.cho_solve(factor, blocks.grad_u, check_finite=False)
    phi0 = eval_phi(qp, u, s, c)
    slope = float(blocks.grad_u @ du)
    a = 1.0
    for _ in range(max_backtracks):
        cand = u + a * du
        if np.min(slacks(qp, cand, s)) > 0 and eval_phi(qp, cand, s, c) <= phi0 + 1e-4 * a * slope:
            return cand
        a *= 0.5
    return u


def discrete_pc_track(
    qp_provider: QpProvider,
    times: Sequence[float],
    sample_period: float = 1.0,
    correction_steps: int = 3,
    schedule: Optional[BarrierSchedule] = None,
    u0: Optional[np.ndarray] = None,
) -> TrajectoryRecord:
    """Sampled prediction-correction: one Euler prediction, then damped Newton corrections, held between samples.

    When the predicted point leaves the sampled relaxed domain, the sample's slack is
    widened by the violation instead of moving the point.
    """
    if correction_steps < 1:
        raise ScenarioLoadError("correction_steps must be >= 1")
    sched = schedule or BarrierSchedule()
    builder: Optional[TrajectoryBuilder] = None
    u = None
    pending_prediction = None
    current = -1
    s_k = c_k = 0.0
    for t in times:
        qp = qp_provider(t)
        if builder is None:
            builder = TrajectoryBuilder(qp.n)
            u = qp.box.midpoint.copy() if u0 is None else np.array(u0, dtype=float)
        k = _sample_index(t, sample_period)
        if k != current:
            current = k
            if pending_prediction is not None:
                u = u + pending_prediction
            s_k, c_k = sched.s(t), sched.c(t)
            worst = float(np.max(constraint_values(qp, u)))
            if worst >= s_k:
                s_k = worst + sched.s(t) + sched.s_min
            for _ in range(correction_steps):
                u = _newton_correction(qp, u, s_k, c_k)
            blocks = eval_blocks(qp, u, s_k, c_k)
            factor = sla.cho_factor(blocks.hess_uu, lower=True, check_finite=False)
            pending_prediction = -sample_period * sla.cho_solve(factor, blocks.grad_ut, check_finite=False)
        _record_row(builder, qp, u, "discrete-pc", s=s_k, c=c_k)
    if builder is None:
        raise ScenarioLoadError("discrete_pc_track needs at least one time point")
    return builder.build()


# --- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class TrackingMetrics:
    t: np.ndarray
    err_u: np.ndarray
    err_f: np.ndarray
    time_to_track: float
    thresholds: tuple = (1e-2, 1e-3)

    def summary(self, burn_in: float = 0.0) -> Dict[str, float]:
        mask = self.t >= burn_in
        eu = self.err_u[mask] if np.any(mask) else self.err_u
        ef = self.err_f[mask] if np.any(mask) else self.err_f
        return {
            "mean_err_u": float(np.mean(eu)) if eu.size else 0.0,
            "max_err_u": float(np.max(eu)) if eu.size else 0.0,
            "mean_err_f": float(np.mean(ef)) if ef.size else 0.0,
            "max_err_f": float(np.max(ef)) if ef.size else 0.0,
            "time_to_track": self.time_to_track if math.isfinite(self.time_to_track) else None,
            "burn_in": burn_in,
        }


def compute_metrics(tracked: TrajectoryRecord, oracle: TrajectoryRecord,
                    thresholds: Sequence[float] = (1e-2, 1e-3)) -> TrackingMetrics:
    if len(tracked) != len(oracle) or not np.allclose(tracked.t, oracle.t, rtol=0.0, atol=1e-9):
        raise MisalignedTrajectories(f"trajectories have {len(tracked)} and {len(oracle)} rows on different grids")
    err_u = np.linalg.norm(tracked.u - oracle.u, axis=1)
    err_f = np.abs(tracked.f - oracle.f)
    thr_u, thr_f = thresholds
    inside = (err_u <= thr_u) & (err_f <= thr_f)
    if inside.size == 0 or inside.all():
        ttt = float(tracked.t[0]) if len(tracked) else 0.0
    elif not inside[-1]:
        ttt = math.inf
    else:
        last_out = int(np.flatnonzero(~inside)[-1])
        ttt = float(tracked.t[last_out + 1])
    return TrackingMetrics(t=tracked.t.copy(), err_u=err_u, err_f=err_f, time_to_track=ttt,
                           thresholds=tuple(thresholds))
