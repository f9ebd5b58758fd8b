"""Online identification of voltage sensitivities from voltage/power snapshots.

With the incidence matrix known and r/x ratios zeta known per line, every
window of m+1 snapshots gives the linear system Z x = phi in the line
reactances. The estimate is one least-squares solve per interval.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

import numpy as np
import scipy.linalg as sla

from scripts.dynamics import Counters
from scripts.errors import DimensionMismatch, RankDeficientExcitation, ScenarioLoadError, WindowNotFull
from scripts.feeder import ReducedIncidenceMatrix, SensitivityModel, sensitivity_from_lines

logger = logging.getLogger(__name__)

X_FLOOR = 1e-6
RANK_TOL = 1e-8


@dataclass(frozen=True)
class EstimatorSettings:
    window: int = 1
    forgetting: float = 1.0
    every: int = 1
    rank_tol: float = RANK_TOL
    x_floor: float = X_FLOOR

    def __post_init__(self):
        if self.window < 0 or self.every < 1:
            raise ScenarioLoadError("estimator needs window >= 0 and every >= 1")
        if not 0 < self.forgetting <= 1:
            raise ScenarioLoadError("forgetting factor must lie in (0, 1]")


@dataclass(frozen=True)
class Snapshot:
    t: float
    P: np.ndarray
    Q: np.ndarray
    V: np.ndarray


class MeasurementWindow:
    def __init__(self, n: int, m: int = 1, eta: float = 1.0):
        self.n = n
        self.m = m
        self.eta = eta
        self._buf: Deque[Snapshot] = deque(maxlen=m + 1)

    def __len__(self) -> int:
        return len(self._buf)

    @property
    def full(self) -> bool:
        return len(self._buf) == self.m + 1

    @property
    def snapshots(self) -> List[Snapshot]:
        return list(self._buf)

    def push(self, snap: Snapshot) -> None:
        for name in ("P", "Q", "V"):
            if np.shape(getattr(snap, name)) != (self.n,):
                raise DimensionMismatch(f"snapshot {name} must be a {self.n}-vector")
        self._buf.append(snap)

    def flush(self) -> None:
        self._buf.clear()


def update(window: MeasurementWindow, snapshot: Optional[Snapshot] = None, topology_changed: bool = False) -> MeasurementWindow:
    if topology_changed:
        window.flush()
    if snapshot is not None:
        window.push(snapshot)
    return window


@dataclass(frozen=True)
class RegressionSystem:
    Z: np.ndarray
    phi: np.ndarray


def build_regression(window: MeasurementWindow, incidence: ReducedIncidenceMatrix, zeta: np.ndarray) -> RegressionSystem:
    if not window.full:
        raise WindowNotFull(f"window holds {len(window)} of {window.m + 1} snapshots")
    Minv = incidence.Minv
    zeta = np.asarray(zeta, dtype=float)
    snaps = window.snapshots
    blocks = []
    rhs = []
    for idx, snap in enumerate(snaps):
        age = len(snaps) - 1 - idx
        w = window.eta ** (age / 2.0)
        # column l: Y_l chi_l = Minv[l]^T (Minv[l] . w (zeta_l P + Q))
        coef = w * (zeta * (Minv @ snap.P) + Minv @ snap.Q)
        blocks.append(Minv.T * coef[None, :])
        rhs.append(w * (snap.V - 1.0))
    return RegressionSystem(Z=np.vstack(blocks), phi=np.concatenate(rhs))


@dataclass(frozen=True)
class SensitivityEstimate:
    x_hat: np.ndarray
    r_hat: np.ndarray
    model: SensitivityModel
    clamped: int = 0


def solve_sensitivities(
    sys: RegressionSystem,
    incidence: ReducedIncidenceMatrix,
    zeta: np.ndarray,
    rank_tol: float = RANK_TOL,
    x_floor: float = X_FLOOR,
    counters: Optional[Counters] = None,
) -> SensitivityEstimate:
    x_hat, _, _, sv = sla.lstsq(sys.Z, sys.phi, lapack_driver="gelsd")
    if counters is not None:
        counters.lstsq_solves += 1
    if sv.size == 0 or sv[0] <= 0 or sv[-1] < rank_tol * sv[0]:
        raise RankDeficientExcitation(
            f"excitation rank deficient: smallest/largest singular value "
            f"{(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0:.2e}")
    low = x_hat < x_floor
    if np.any(low):
        logger.warning("Clamping %d estimated reactances to %.1e pu", int(low.sum()), x_floor)
        x_hat = np.where(low, x_floor, x_hat)
    r_hat = np.asarray(zeta, dtype=float) * x_hat
    model = sensitivity_from_lines(incidence, r_hat, x_hat)
    return SensitivityEstimate(x_hat=x_hat, r_hat=r_hat, model=model, clamped=int(low.sum()))


class OnlineEstimator:
    """Window + regression + hold-last policy, owned by the engine loop.

    Status is one of: estimated, held, rated-fallback, fixed-rated.
    """

    def __init__(
        self,
        incidence: ReducedIncidenceMatrix,
        zeta: np.ndarray,
        rated: SensitivityModel,
        settings: Optional[EstimatorSettings] = None,
        mode: str = "estimated",
        counters: Optional[Counters] = None,
    ):
        if mode not in ("estimated", "fixed_rated"):
            raise ScenarioLoadError(f"unknown estimator mode {mode!r}")
        self.settings = settings or EstimatorSettings()
        self.mode = mode
        self.counters = counters
        self.window = MeasurementWindow(incidence.n, self.settings.window, self.settings.forgetting)
        self._observed = 0
        self.reset(incidence, zeta, rated)

    def reset(self, incidence: ReducedIncidenceMatrix, zeta: np.ndarray, rated: SensitivityModel) -> None:
        self.incidence = incidence
        self.zeta = np.asarray(zeta, dtype=float)
        self.rated = rated
        self.model = rated
        self.last: Optional[SensitivityEstimate] = None
        self.status = "fixed-rated" if self.mode == "fixed_rated" else "rated-fallback"
        update(self.window, topology_changed=True)
        self._observed = 0

    def observe(self, snap: Snapshot) -> Tuple[SensitivityModel, str]:
        if self.mode == "fixed_rated":
            return self.model, self.status
        self._observed += 1
        if (self._observed - 1) % self.settings.every:
            return self.model, self.status
        update(self.window, snap)
        if not self.window.full:
            return self.model, self.status
        try:
            est = solve_sensitivities(
                build_regression(self.window, self.incidence, self.zeta),
                self.incidence,
                self.zeta,
                rank_tol=self.settings.rank_tol,
                x_floor=self.settings.x_floor,
                counters=self.counters,
            )
        except RankDeficientExcitation as e:
            logger.warning("t=%.3fs: %s; holding previous sensitivities", snap.t, e)
            self.status = "held" if self.last is not None else "rated-fallback"
            return self.model, self.status
        self.last = est
        self.model = est.model
        self.status = "estimated"
        return self.model, self.status
