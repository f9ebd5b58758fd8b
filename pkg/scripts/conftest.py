import math

import numpy as np
import pytest

from scripts import settings
from scripts.devices import DeviceSpec
from scripts.feeder import FeederTopology, Line, load_feeder, model_for
from scripts.problem import assemble_qp
from scripts.signals import ExogenousSignals, SampledSeries, constant_interpolant, hermite_fit


@pytest.fixture(scope="session")
def ieee33() -> FeederTopology:
    return load_feeder(settings.FEEDERS_DIR / "ieee33.json")


@pytest.fixture
def two_bus() -> FeederTopology:
    return FeederTopology(node_count=1, lines=(Line(0, 1, r=0.01, x=0.02),), base_p=(0.1,), base_q=(0.05,))


@pytest.fixture
def pv_device() -> DeviceSpec:
    return DeviceSpec(node=1, kind="PV", theta=math.acos(0.9))


@pytest.fixture
def constant_signals() -> ExogenousSignals:
    return ExogenousSignals(
        availability={1: constant_interpolant(0.05, 100.0)},
        load_multiplier=constant_interpolant(1.0, 100.0),
        base_p=np.array([0.1]),
        base_q=np.array([0.05]),
    )


@pytest.fixture
def ramp_signals() -> ExogenousSignals:
    t = np.arange(0.0, 21.0)
    return ExogenousSignals(
        availability={1: hermite_fit(SampledSeries(t=t, values=0.05 + 0.01 * t))},
        load_multiplier=hermite_fit(SampledSeries(t=t, values=1.0 + 0.1 * t)),
        base_p=np.array([0.1]),
        base_q=np.array([0.05]),
    )


@pytest.fixture
def two_bus_qp(two_bus, pv_device, constant_signals):
    return assemble_qp([pv_device], model_for(two_bus), constant_signals, 0.0)


@pytest.fixture
def ramp_provider(two_bus, pv_device, ramp_signals):
    model = model_for(two_bus)

    def qp_at(t: float):
        return assemble_qp([pv_device], model, ramp_signals, t)
    return qp_at


@pytest.fixture(scope="session")
def normal_scenario():
    from scripts.scenario import load_scenario

    return load_scenario(settings.SCENARIOS_DIR / "normal.json")


@pytest.fixture(scope="session")
def ieee33_provider(normal_scenario):
    sc = normal_scenario
    model = model_for(sc.topology)
    soc = {d.node: d.ess.w0 for d in sc.devices if d.kind == "ESS"}

    def qp_at(t: float):
        return assemble_qp(sc.devices, model, sc.signals, t, sc.problem, soc)
    return qp_at
