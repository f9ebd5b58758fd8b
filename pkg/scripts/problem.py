"""Time-varying dispatch QP snapshots.

u = [P_g; Q_g] (2n), W = [-P_L; -Q_L] (2n), V = 1 + D u + D W with D = [A B].
Constraint ordering f(u, t) = [u_min - u; u - u_max; V_min - V; V - V_max].
"""
import math
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np

from scripts.devices import EPS_BOX, ControlBox, DeviceSpec, assemble_box, cost_vectors
from scripts.errors import DimensionMismatch, ScenarioLoadError, SignalOutOfRange
from scripts.feeder import SensitivityModel
from scripts.signals import ExogenousSignals

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemSettings:
    gamma: float = 1.0
    v_nom: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    eps_box: float = EPS_BOX

    def __post_init__(self):
        if self.gamma <= 0:
            raise ScenarioLoadError("gamma must be positive")
        if not (self.v_min < self.v_nom < self.v_max):
            raise ScenarioLoadError("need V_min < V_nom < V_max")


@dataclass(frozen=True)
class QpObjective:
    k_diag: np.ndarray
    d: np.ndarray
    gamma: float = 1.0
    v_nom: float = 1.0


@dataclass(frozen=True, eq=False)
class TimeVaryingQp:
    objective: QpObjective
    D: np.ndarray
    box: ControlBox
    W: np.ndarray
    dW: np.ndarray
    dd: np.ndarray
    v_min: float
    v_max: float
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @property
    def p(self) -> int:
        return 6 * self.n

    @cached_property
    def DtD(self) -> np.ndarray:
        return self.D.T @ self.D

    @cached_property
    def V_exo(self) -> np.ndarray:
        """Voltage with zero dispatch, 1 + D W."""
        return 1.0 + self.D @ self.W

    def voltage(self, u: np.ndarray) -> np.ndarray:
        return self.V_exo + self.D @ u

    def check_u(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (2 * self.n,):
            raise DimensionMismatch(f"expected a {2 * self.n}-vector, got {u.shape}")
        return u

    @cached_property
    def G(self) -> np.ndarray:
        """Constraint matrix with f(u) = G u - h."""
        eye = np.eye(2 * self.n)
        return np.vstack([-eye, eye, -self.D, self.D])

    @cached_property
    def h(self) -> np.ndarray:
        return np.concatenate([
            -self.box.u_min,
            self.box.u_max,
            self.V_exo - self.v_min,
            self.v_max - self.V_exo,
        ])


def assemble_qp(
    devices: Sequence[DeviceSpec],
    sensitivity: SensitivityModel,
    signals: ExogenousSignals,
    t: float,
    settings: Optional[ProblemSettings] = None,
    soc: Optional[Mapping[int, float]] = None,
) -> TimeVaryingQp:
    settings = settings or ProblemSettings()
    n = sensitivity.n
    if signals.n != n:
        raise DimensionMismatch(f"signals cover {signals.n} nodes, sensitivities {n}")
    if not math.isfinite(t) or t < 0:
        raise SignalOutOfRange(f"query time {t} outside the scenario timeline")

    availability = signals.availability_at(t)
    box = assemble_box(devices, n, availability, soc or {}).widened(settings.eps_box)

    c_p, c_q = cost_vectors(devices, n)
    d = np.zeros(2 * n)
    dd = np.zeros(2 * n)
    for dev in devices:
        if dev.is_renewable:
            p_tar, dp_tar = availability.get(dev.node, (0.0, 0.0))
            d[dev.node - 1] = -2.0 * dev.c_p * p_tar
            dd[dev.node - 1] = -2.0 * dev.c_p * dp_tar

    W, dW = signals.loads(t)
    return TimeVaryingQp(
        objective=QpObjective(
            k_diag=np.concatenate([2.0 * c_p, 2.0 * c_q]),
            d=d,
            gamma=settings.gamma,
            v_nom=settings.v_nom,
        ),
        D=sensitivity.D,
        box=box,
        W=W,
        dW=dW,
        dd=dd,
        v_min=settings.v_min,
        v_max=settings.v_max,
        t=float(t),
    )


def with_sensitivity(qp: TimeVaryingQp, sensitivity: SensitivityModel) -> TimeVaryingQp:
    """Same snapshot evaluated on another voltage model."""
    if sensitivity.n != qp.n:
        raise DimensionMismatch(f"expected n={qp.n}, got {sensitivity.n}")
    return TimeVaryingQp(
        objective=qp.objective, D=sensitivity.D, box=qp.box, W=qp.W, dW=qp.dW,
        dd=qp.dd, v_min=qp.v_min, v_max=qp.v_max, t=qp.t,
    )


def objective_value(qp: TimeVaryingQp, u: np.ndarray) -> float:
    u = qp.check_u(u)
    obj = qp.objective
    dv = qp.voltage(u) - obj.v_nom
    return float(0.5 * u @ (obj.k_diag * u) + obj.d @ u + 0.5 * obj.gamma * dv @ dv)


def objective_gradient(qp: TimeVaryingQp, u: np.ndarray) -> np.ndarray:
    u = qp.check_u(u)
    obj = qp.objective
    return obj.k_diag * u + obj.d + obj.gamma * qp.D.T @ (qp.voltage(u) - obj.v_nom)


def constraint_values(qp: TimeVaryingQp, u: np.ndarray) -> np.ndarray:
    u = qp.check_u(u)
    V = qp.voltage(u)
    return np.concatenate([
        qp.box.u_min - u,
        u - qp.box.u_max,
        qp.v_min - V,
        V - qp.v_max,
    ])


def is_feasible(qp: TimeVaryingQp, u: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.all(constraint_values(qp, u) <= tol))
