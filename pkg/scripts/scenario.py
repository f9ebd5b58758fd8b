"""Scenario files: pydantic schema plus resolution into runtime objects."""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from scripts.barrier import BarrierSchedule
from scripts.devices import DeviceSpec, EssParams, validate_devices
from scripts.dynamics import IntegratorConfig
from scripts.errors import ScenarioLoadError, TrackerError
from scripts.estimator import EstimatorSettings
from scripts.feeder import FeederTopology, Line, MeasurementNoiseSpec, load_feeder, reconfigured
from scripts.oracle_baselines import BaselineSettings
from scripts.problem import ProblemSettings
from scripts.profiles import profile_rng, synthetic_profile
from scripts.run_utils import compute_fingerprint
from scripts.signals import ExogenousSignals, Interpolant, hermite_fit, read_profile

logger = logging.getLogger(__name__)


class SyntheticProfile(BaseModel):
    kind: Literal["pv", "wind", "load", "ramp", "constant"]
    capacity: float = 1.0
    value: float = 0.0
    rate: float = 0.0
    fluctuation: Optional[float] = None


class ProfileConfig(BaseModel):
    file: Optional[str] = None
    synthetic: Optional[SyntheticProfile] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.file is None) == (self.synthetic is None):
            raise ValueError("profile needs exactly one of 'file' or 'synthetic'")
        return self


class EssConfig(BaseModel):
    p_ch_max: float
    p_dis_max: float
    eta_c: float = 0.9
    eta_d: float = 0.9
    w_min: float
    w_max: float
    w0: float
    horizon_h: float = 1.0


class DeviceConfig(BaseModel):
    node: int
    kind: Literal["PV", "WT", "ESS"]
    c_p: float = 3.0
    c_q: float = 1.0
    power_factor: float = Field(0.85, gt=0.0, lt=1.0)
    profile: Optional[ProfileConfig] = None
    ess: Optional[EssConfig] = None
    name: str = ""

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "ESS" and self.ess is None:
            raise ValueError(f"ESS at node {self.node} needs 'ess' parameters")
        if self.kind != "ESS" and self.profile is None:
            raise ValueError(f"{self.kind} at node {self.node} needs an availability profile")
        return self


class LoadConfig(BaseModel):
    scale: float = 1.0
    profile: Optional[ProfileConfig] = None


class NoiseConfig(BaseModel):
    reactance_var: float = Field(0.0, ge=0.0)
    voltage_var: float = Field(0.0, ge=0.0)
    mode: Literal["additive", "multiplicative"] = "additive"
    floor_fraction: float = 0.1


class EventConfig(BaseModel):
    time: float
    kind: Literal["pv_halt", "pv_resume", "reconfigure"]
    node: Optional[int] = None
    add: List[List[float]] = Field(default_factory=list)
    remove: List[List[int]] = Field(default_factory=list)
    lines: Optional[List[Dict[str, float]]] = None

    @model_validator(mode="after")
    def _payload(self):
        if self.kind in ("pv_halt", "pv_resume") and self.node is None:
            raise ValueError(f"{self.kind} needs a node")
        if self.kind == "reconfigure" and not (self.add or self.remove or self.lines):
            raise ValueError("reconfigure needs add/remove or a full line set")
        return self


class IntegratorSettings(BaseModel):
    tau: float = 0.02
    n_sub: int = 4
    alpha: float = 100.0
    max_halvings: int = 20
    slack_margin: float = 1e-3
    boundary_fraction: float = Field(0.1, ge=0.0, lt=1.0)


class ScheduleSettings(BaseModel):
    s0: float = 2.0
    lambda_s: float = 10.0
    c0: float = 1.0
    lambda_c: float = 10.0
    c_max: float = 1e12
    s_min: float = 1e-9


class EstimatorConfig(BaseModel):
    window: int = 1
    forgetting: float = 1.0
    every: int = 1


class ProblemConfig(BaseModel):
    gamma: float = 1.0
    v_nom: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05


class BaselineConfig(BaseModel):
    sample_period: float = 1.0
    pd_iterations: int = 10
    pd_step_scale: float = 1.0
    pd_dual_scale: float = 0.5
    dpc_corrections: int = 3
    burn_in: float = 3.0


class ScenarioConfig(BaseModel):
    name: str = "scenario"
    feeder: str
    horizon_s: float = Field(60.0, ge=0.0)
    seed: int = 0
    mode: Literal["estimated", "fixed_rated"] = "estimated"
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    loads: LoadConfig = Field(default_factory=LoadConfig)
    devices: List[DeviceConfig] = Field(default_factory=list)
    events: List[EventConfig] = Field(default_factory=list)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    integrator: IntegratorSettings = Field(default_factory=IntegratorSettings)
    schedule: ScheduleSettings = Field(default_factory=ScheduleSettings)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    baselines: BaselineConfig = Field(default_factory=BaselineConfig)

    @field_validator("events")
    @classmethod
    def _ordered(cls, events: List[EventConfig]) -> List[EventConfig]:
        times = [e.time for e in events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        return events

    @model_validator(mode="after")
    def _events_in_horizon(self):
        for e in self.events:
            if not 0.0 <= e.time <= self.horizon_s:
                raise ValueError(f"event at t={e.time} outside horizon [0, {self.horizon_s}]")
        return self


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    node: Optional[int] = None
    add: Tuple[Tuple[float, ...], ...] = ()
    remove: Tuple[Tuple[int, ...], ...] = ()
    lines: Optional[Tuple[Dict[str, float], ...]] = None


@dataclass(frozen=True)
class PreparedScenario:
    name: str
    topology: FeederTopology
    devices: Tuple[DeviceSpec, ...]
    signals: ExogenousSignals
    noise: MeasurementNoiseSpec
    seed: int
    horizon_s: float
    mode: str
    events: Tuple[Event, ...]
    problem: ProblemSettings
    integrator: IntegratorConfig
    schedule: BarrierSchedule
    estimator: EstimatorSettings
    baselines: BaselineSettings
    fingerprint: str

    @property
    def steps(self) -> int:
        return int(round(self.horizon_s / self.integrator.tau))

    @property
    def times(self) -> List[float]:
        return [k * self.integrator.tau for k in range(self.steps + 1)]


def event_topology(topology: FeederTopology, event: Event) -> FeederTopology:
    """Topology after a reconfigure event; payload impedances are in ohms."""
    z_base = topology.z_base
    lines = None
    if event.lines is not None:
        lines = [Line(int(rec["from"]), int(rec["to"]), float(rec["r_ohm"]) / z_base, float(rec["x_ohm"]) / z_base)
                 for rec in event.lines]
    add = [tuple(a[:2]) + (a[2] / z_base, a[3] / z_base) if len(a) >= 4 else tuple(a[:2]) for a in event.add]
    return reconfigured(topology, add=add, remove=event.remove, lines=lines)


def scenario_fingerprint(config: ScenarioConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return compute_fingerprint(canonical)


def parse_scenario(raw: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(raw)
    except ValidationError as e:
        raise ScenarioLoadError(f"invalid scenario: {e}")


def load_scenario_config(path: Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioLoadError(f"cannot read scenario {path}: {e}")
    return parse_scenario(raw)


def _resolve(base_dir: Path, ref: str) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else (base_dir / p).resolve()


def _interpolant(profile: ProfileConfig, base_dir: Path, horizon: float, seed: int, key: int) -> Interpolant:
    if profile.file is not None:
        series = read_profile(_resolve(base_dir, profile.file))
    else:
        spec = profile.synthetic
        series = synthetic_profile(
            spec.kind, horizon, profile_rng(seed, key),
            capacity=spec.capacity, value=spec.value, rate=spec.rate, fluctuation=spec.fluctuation,
        )
    return hermite_fit(series)


def prepare(config: ScenarioConfig, base_dir: Path) -> PreparedScenario:
    """Resolve file references against base_dir and build runtime objects."""
    base_dir = Path(base_dir)
    try:
        topology = load_feeder(_resolve(base_dir, config.feeder))
        n = topology.n
        devices = []
        for dc in config.devices:
            ess = EssParams(**dc.ess.model_dump()) if dc.ess is not None else None
            devices.append(DeviceSpec(
                node=dc.node, kind=dc.kind, c_p=dc.c_p, c_q=dc.c_q,
                theta=math.acos(dc.power_factor), ess=ess, name=dc.name,
            ))
        validate_devices(devices, n)

        availability = {
            dc.node: _interpolant(dc.profile, base_dir, config.horizon_s, config.seed, dc.node)
            for dc in config.devices if dc.kind != "ESS"
        }
        load_profile = config.loads.profile or ProfileConfig(synthetic=SyntheticProfile(kind="constant", value=1.0))
        base_p = np.array(topology.base_p or (0.0,) * n) * config.loads.scale
        base_q = np.array(topology.base_q or (0.0,) * n) * config.loads.scale
        signals = ExogenousSignals(
            availability=availability,
            load_multiplier=_interpolant(load_profile, base_dir, config.horizon_s, config.seed, 0),
            base_p=base_p,
            base_q=base_q,
        )
        events = tuple(
            Event(
                time=e.time, kind=e.kind, node=e.node,
                add=tuple(tuple(a) for a in e.add),
                remove=tuple(tuple(int(v) for v in r) for r in e.remove),
                lines=tuple(e.lines) if e.lines is not None else None,
            )
            for e in config.events
        )
        # every reconfigure payload must leave the feeder radial
        current = topology
        for ev in events:
            if ev.kind == "reconfigure":
                current = event_topology(current, ev)
        prepared = PreparedScenario(
            name=config.name,
            topology=topology,
            devices=tuple(devices),
            signals=signals,
            noise=MeasurementNoiseSpec(**config.noise.model_dump()),
            seed=config.seed,
            horizon_s=config.horizon_s,
            mode=config.mode,
            events=events,
            problem=ProblemSettings(**config.problem.model_dump()),
            integrator=IntegratorConfig(**config.integrator.model_dump()),
            schedule=BarrierSchedule(**config.schedule.model_dump()),
            estimator=EstimatorSettings(**config.estimator.model_dump()),
            baselines=BaselineSettings(**config.baselines.model_dump()),
            fingerprint=scenario_fingerprint(config),
        )
    except TrackerError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ScenarioLoadError(f"scenario {config.name}: {e}")
    logger.info("Prepared scenario %s: n=%d, %d devices, %d events, %d steps",
                prepared.name, n, len(devices), len(events), prepared.steps)
    return prepared


def load_scenario(path: Path, overrides: Optional[Dict[str, Any]] = None) -> PreparedScenario:
    path = Path(path)
    config = load_scenario_config(path)
    if overrides:
        config = parse_scenario({**config.model_dump(mode="json"), **overrides})
    return prepare(config, path.parent)
