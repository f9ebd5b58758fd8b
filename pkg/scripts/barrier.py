"""Relaxed log-barrier Phi(u, t) = f(u, t) - (1/c) * sum ln(s - f_i(u, t)) and its derivative blocks."""
import math
import logging
from dataclasses import dataclass, replace

import numpy as np

from scripts.errors import BarrierDomainViolation, ScenarioLoadError
from scripts.problem import TimeVaryingQp, constraint_values, objective_value

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BarrierSchedule:
    """s(t) = s0 exp(-lambda_s (t - t0)) floored at s_min; c(t) = c0 exp(lambda_c t) capped at c_max.

    The slack origin (t0, s0) can be moved by reseeding; c never restarts.
    """
    s0: float = 2.0
    lambda_s: float = 10.0
    c0: float = 1.0
    lambda_c: float = 10.0
    c_max: float = 1e12
    s_min: float = 1e-9
    t0: float = 0.0

    def __post_init__(self):
        if self.s0 <= 0 or self.c0 <= 0 or self.s_min <= 0 or self.c_max < self.c0:
            raise ScenarioLoadError("schedule needs s0, c0, s_min > 0 and c_max >= c0")
        if self.lambda_s < 0 or self.lambda_c < 0:
            raise ScenarioLoadError("schedule rates must be non-negative")

    def _s_raw(self, t: float) -> float:
        return self.s0 * math.exp(-self.lambda_s * max(t - self.t0, 0.0))

    def s(self, t: float) -> float:
        return max(self._s_raw(t), self.s_min)

    def ds(self, t: float) -> float:
        raw = self._s_raw(t)
        return -self.lambda_s * raw if raw > self.s_min else 0.0

    def _log_c(self, t: float) -> float:
        return math.log(self.c0) + self.lambda_c * max(t, 0.0)

    def c(self, t: float) -> float:
        lc = self._log_c(t)
        return self.c_max if lc >= math.log(self.c_max) else math.exp(lc)

    def dc(self, t: float) -> float:
        lc = self._log_c(t)
        return 0.0 if lc >= math.log(self.c_max) else self.lambda_c * math.exp(lc)

    def saturated(self, t: float) -> bool:
        return self.ds(t) == 0.0 and self.dc(t) == 0.0

    def reseeded(self, t: float, s_value: float) -> "BarrierSchedule":
        return replace(self, s0=float(s_value), t0=float(t))


@dataclass(frozen=True)
class BarrierBlocks:
    grad_u: np.ndarray
    hess_uu: np.ndarray
    grad_us: np.ndarray
    grad_uc: np.ndarray
    grad_ut: np.ndarray
    h_lo: np.ndarray
    h_hi: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray


def slacks(qp: TimeVaryingQp, u: np.ndarray, s: float) -> np.ndarray:
    """s - f_i(u, t) for every constraint, in constraint order."""
    return s - constraint_values(qp, u)


def check_interior(qp: TimeVaryingQp, u: np.ndarray, s: float) -> np.ndarray:
    sl = slacks(qp, u, s)
    i = int(np.argmin(sl))
    if not sl[i] > 0:
        raise BarrierDomainViolation(i, float(sl[i]))
    return sl


def eval_phi(qp: TimeVaryingQp, u: np.ndarray, s: float, c: float) -> float:
    sl = check_interior(qp, u, s)
    return objective_value(qp, u) - float(np.sum(np.log(sl))) / c


def eval_blocks(qp: TimeVaryingQp, u: np.ndarray, s: float, c: float) -> BarrierBlocks:
    sl = check_interior(qp, u, s)
    m = 2 * qp.n
    n = qp.n
    h_lo, h_hi = sl[:m], sl[m:2 * m]
    g_lo, g_hi = sl[2 * m:2 * m + n], sl[2 * m + n:]
    D = qp.D
    obj = qp.objective

    inv_hl, inv_hh = 1.0 / h_lo, 1.0 / h_hi
    inv_gl, inv_gh = 1.0 / g_lo, 1.0 / g_hi

    # K1 + K2 + K3 + K4
    k_sum = inv_hl - inv_hh + D.T @ (inv_gl - inv_gh)
    # K1s + K2s + K3s + K4s
    ks_sum = -inv_hl ** 2 + inv_hh ** 2 - D.T @ (inv_gl ** 2) + D.T @ (inv_gh ** 2)
    # -(K~1 + ... + K~4)
    curvature = np.diag(inv_hl ** 2 + inv_hh ** 2) + D.T @ ((inv_gl ** 2 + inv_gh ** 2)[:, None] * D)
    # grad_t K1 + ... + grad_t K4
    dv_exo = D @ qp.dW
    kt_sum = (qp.box.du_min * inv_hl ** 2 + qp.box.du_max * inv_hh ** 2
              - D.T @ (inv_gl ** 2 * dv_exo) - D.T @ (inv_gh ** 2 * dv_exo))

    V = qp.voltage(u)
    grad_u = obj.k_diag * u + obj.d + obj.gamma * D.T @ (V - obj.v_nom) - k_sum / c
    hess = np.diag(obj.k_diag) + obj.gamma * qp.DtD + curvature / c
    grad_ut = qp.dd + obj.gamma * qp.DtD @ qp.dW - kt_sum / c
    return BarrierBlocks(
        grad_u=grad_u,
        hess_uu=0.5 * (hess + hess.T),
        grad_us=-ks_sum / c,
        grad_uc=k_sum / c ** 2,
        grad_ut=grad_ut,
        h_lo=h_lo,
        h_hi=h_hi,
        g_lo=g_lo,
        g_hi=g_hi,
    )
