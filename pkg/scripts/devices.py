"""PV / wind / storage device models and the stacked control box."""
import math
import logging
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from scripts.errors import (
    DimensionMismatch,
    DuplicateDeviceNode,
    NegativeAvailablePower,
    ScenarioLoadError,
    SocOutOfRange,
)

logger = logging.getLogger(__name__)

RENEWABLE_KINDS = ("PV", "WT")
DEVICE_KINDS = RENEWABLE_KINDS + ("ESS",)
DEFAULT_C_P = 3.0
DEFAULT_C_Q = 1.0
EPS_BOX = 1e-6


@dataclass(frozen=True)
class EssParams:
    p_ch_max: float
    p_dis_max: float
    eta_c: float = 0.9
    eta_d: float = 0.9
    w_min: float = 0.0
    w_max: float = 1.0
    w0: float = 0.5
    horizon_h: float = 1.0

    def __post_init__(self):
        if self.p_ch_max <= 0 or self.p_dis_max <= 0:
            raise ScenarioLoadError("ESS power limits must be positive")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            raise ScenarioLoadError("ESS efficiencies must lie in (0, 1]")
        if not (0 <= self.w_min < self.w_max):
            raise ScenarioLoadError("ESS energy bounds need 0 <= W_min < W_max")
        if self.horizon_h <= 0:
            raise ScenarioLoadError("ESS energy horizon must be positive")


@dataclass(frozen=True)
class DeviceSpec:
    node: int
    kind: str
    c_p: float = DEFAULT_C_P
    c_q: float = DEFAULT_C_Q
    theta: float = math.acos(0.85)
    ess: Optional[EssParams] = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ScenarioLoadError(f"unknown device kind {self.kind!r}")
        if self.c_p <= 0 or self.c_q <= 0:
            raise ScenarioLoadError("cost coefficients must be positive")
        if self.kind in RENEWABLE_KINDS and not (0 < self.theta < math.pi / 2):
            raise ScenarioLoadError("power-factor angle must lie in (0, pi/2)")
        if self.kind == "ESS" and self.ess is None:
            raise ScenarioLoadError(f"ESS at node {self.node} needs ess parameters")

    @property
    def label(self) -> str:
        return self.name or f"{self.kind}{self.node}"

    @property
    def is_renewable(self) -> bool:
        return self.kind in RENEWABLE_KINDS


@dataclass(frozen=True)
class ControlBox:
    u_min: np.ndarray
    u_max: np.ndarray
    du_min: np.ndarray
    du_max: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.u_max - self.u_min

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.u_min + self.u_max)

    def widened(self, eps: float = EPS_BOX) -> "ControlBox":
        return replace(self, u_min=self.u_min - eps, u_max=self.u_max + eps)


@dataclass(frozen=True)
class RenewableBounds:
    p_lo: float
    p_hi: float
    q_lo: float
    q_hi: float
    rates: Tuple[float, float, float, float]


def renewable_bounds(spec: DeviceSpec, p_av: float, dp_av_dt: float) -> RenewableBounds:
    if p_av < 0:
        raise NegativeAvailablePower(f"{spec.label}: P_av = {p_av}")
    tan_theta = math.tan(spec.theta)
    q_hi = p_av * tan_theta
    dq = dp_av_dt * tan_theta
    return RenewableBounds(
        p_lo=0.0,
        p_hi=p_av,
        q_lo=-q_hi,
        q_hi=q_hi,
        rates=(0.0, dp_av_dt, -dq, dq),
    )


def ess_bounds(params: EssParams, w0: float) -> Tuple[float, float]:
    tol = 1e-12
    if w0 < params.w_min - tol or w0 > params.w_max + tol:
        raise SocOutOfRange(f"W0 = {w0} outside [{params.w_min}, {params.w_max}]")
    p_lo = max(-params.p_ch_max, -(params.w_max - w0) / (params.eta_c * params.horizon_h))
    p_hi = min(params.p_dis_max, params.eta_d * (w0 - params.w_min) / params.horizon_h)
    return min(p_lo, 0.0), max(p_hi, 0.0)


def ess_soc_step(params: EssParams, w0: float, p_g: float, tau: float) -> float:
    hours = tau / 3600.0
    if p_g > 0:
        w = w0 - p_g / params.eta_d * hours
    else:
        w = w0 - params.eta_c * p_g * hours
    return min(max(w, params.w_min), params.w_max)


def validate_devices(devices: Sequence[DeviceSpec], n: int) -> None:
    seen: Dict[int, str] = {}
    for dev in devices:
        if not 1 <= dev.node <= n:
            raise DimensionMismatch(f"{dev.label} placed at node {dev.node} outside 1..{n}")
        if dev.node in seen:
            raise DuplicateDeviceNode(f"node {dev.node} carries both {seen[dev.node]} and {dev.label}")
        seen[dev.node] = dev.label


def cost_vectors(devices: Sequence[DeviceSpec], n: int) -> Tuple[np.ndarray, np.ndarray]:
    c_p = np.full(n, DEFAULT_C_P)
    c_q = np.full(n, DEFAULT_C_Q)
    for dev in devices:
        c_p[dev.node - 1] = dev.c_p
        c_q[dev.node - 1] = dev.c_q
    return c_p, c_q


def assemble_box(
    devices: Sequence[DeviceSpec],
    n: int,
    availability: Mapping[int, Tuple[float, float]],
    soc: Mapping[int, float],
) -> ControlBox:
    """Stack per-device bounds into the [P_g; Q_g] ordering.

    availability maps renewable node -> (P_av, dP_av/dt); soc maps ESS node -> W.
    """
    validate_devices(devices, n)
    u_min = np.zeros(2 * n)
    u_max = np.zeros(2 * n)
    du_min = np.zeros(2 * n)
    du_max = np.zeros(2 * n)
    for dev in devices:
        i = dev.node - 1
        if dev.is_renewable:
            p_av, dp_av = availability.get(dev.node, (0.0, 0.0))
            b = renewable_bounds(dev, p_av, dp_av)
            u_min[i], u_max[i] = b.p_lo, b.p_hi
            u_min[n + i], u_max[n + i] = b.q_lo, b.q_hi
            du_min[i], du_max[i], du_min[n + i], du_max[n + i] = b.rates
        else:
            w = soc.get(dev.node, dev.ess.w0)
            u_min[i], u_max[i] = ess_bounds(dev.ess, w)
    return ControlBox(u_min=u_min, u_max=u_max, du_min=du_min, du_max=du_max)


def ess_nodes(devices: Iterable[DeviceSpec]) -> List[DeviceSpec]:
    return [d for d in devices if d.kind == "ESS"]
