"""Radial feeder model: topology, reduced incidence matrix, linear voltage model.

Node numbering is 0-based with the PCC at node 0; node k (1..n) maps to vector
index k - 1 in every n-vector and in both halves of the 2n control vector.
"""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.linalg as sla

from scripts.errors import (
    DimensionMismatch,
    NonRadialTopology,
    ScenarioLoadError,
    SingularIncidence,
)

logger = logging.getLogger(__name__)

CONDITION_CAP = 1e12


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    r: float
    x: float

    @property
    def zeta(self) -> float:
        return self.r / self.x

    @property
    def endpoints(self) -> frozenset:
        return frozenset((self.from_node, self.to_node))


@dataclass(frozen=True)
class FeederTopology:
    node_count: int
    lines: Tuple[Line, ...]
    z_base: float = 1.0
    s_base_mva: float = 1.0
    name: str = "feeder"
    base_p: Tuple[float, ...] = ()
    base_q: Tuple[float, ...] = ()
    ties: Tuple[Line, ...] = ()

    def __post_init__(self):
        if self.node_count <= 0:
            raise ScenarioLoadError("node_count must be positive")
        for ln in self.lines:
            if not (ln.r > 0 and ln.x > 0):
                raise ScenarioLoadError(f"line {ln.from_node}-{ln.to_node} needs r > 0 and x > 0")
        if self.base_p and len(self.base_p) != self.node_count:
            raise DimensionMismatch("base_p must have one entry per non-PCC node")
        if self.base_q and len(self.base_q) != self.node_count:
            raise DimensionMismatch("base_q must have one entry per non-PCC node")

    @property
    def n(self) -> int:
        return self.node_count

    @property
    def r(self) -> np.ndarray:
        return np.array([ln.r for ln in self.lines], dtype=float)

    @property
    def x(self) -> np.ndarray:
        return np.array([ln.x for ln in self.lines], dtype=float)

    @property
    def zeta(self) -> np.ndarray:
        return self.r / self.x

    def find_line(self, a: int, b: int) -> Optional[Line]:
        key = frozenset((a, b))
        for ln in tuple(self.lines) + tuple(self.ties):
            if ln.endpoints == key:
                return ln
        return None

    def with_lines(self, lines: Sequence[Line]) -> "FeederTopology":
        return replace(self, lines=tuple(lines))

    def with_reactances(self, x: np.ndarray) -> "FeederTopology":
        if len(x) != len(self.lines):
            raise DimensionMismatch(f"expected {len(self.lines)} reactances, got {len(x)}")
        return replace(self, lines=tuple(replace(ln, x=float(v)) for ln, v in zip(self.lines, x)))


@dataclass(frozen=True)
class ReducedIncidenceMatrix:
    M: np.ndarray
    Minv: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class SensitivityModel:
    A: np.ndarray
    B: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def offset(self) -> np.ndarray:
        return np.ones(self.n)

    @property
    def D(self) -> np.ndarray:
        return np.hstack([self.A, self.B])


@dataclass(frozen=True)
class MeasurementNoiseSpec:
    """Ground-truth uncertainty.

    reactance_var is expressed in the feeder file's native impedance unit
    (ohms for the shipped feeders) and converted with the topology's z_base.
    """
    reactance_var: float = 0.0
    voltage_var: float = 0.0
    mode: str = "additive"
    floor_fraction: float = 0.1

    def __post_init__(self):
        if self.reactance_var < 0 or self.voltage_var < 0:
            raise ScenarioLoadError("noise variances must be >= 0")
        if self.mode not in ("additive", "multiplicative"):
            raise ScenarioLoadError(f"unknown perturbation mode: {self.mode}")


def radial_graph(topology: FeederTopology) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(topology.n + 1))
    for ln in topology.lines:
        if not (0 <= ln.from_node <= topology.n and 0 <= ln.to_node <= topology.n):
            raise NonRadialTopology(f"line {ln.from_node}-{ln.to_node} references a node outside 0..{topology.n}")
        g.add_edge(ln.from_node, ln.to_node)
    return g


def check_radial(topology: FeederTopology) -> nx.Graph:
    if len(topology.lines) != topology.n:
        raise NonRadialTopology(f"radial feeder with {topology.n} nodes needs {topology.n} lines, got {len(topology.lines)}")
    g = radial_graph(topology)
    if not nx.is_tree(g):
        raise NonRadialTopology("line set is not a spanning tree rooted at node 0")
    return g


def root_path_lines(topology: FeederTopology, node: int) -> List[int]:
    """Indices of the lines on the path from the PCC to `node`."""
    g = radial_graph(topology)
    path = nx.shortest_path(g, 0, node)
    index = {ln.endpoints: i for i, ln in enumerate(topology.lines)}
    return [index[frozenset(pair)] for pair in zip(path[:-1], path[1:])]


def build_incidence(topology: FeederTopology) -> ReducedIncidenceMatrix:
    check_radial(topology)
    n = topology.n
    M = np.zeros((n, n))
    for col, ln in enumerate(topology.lines):
        if ln.from_node > 0:
            M[ln.from_node - 1, col] = 1.0
        if ln.to_node > 0:
            M[ln.to_node - 1, col] = -1.0
    try:
        Minv = sla.inv(M)
    except sla.LinAlgError as e:
        raise SingularIncidence(str(e))
    return ReducedIncidenceMatrix(M=M, Minv=Minv)


def sensitivity_from_lines(
    incidence: ReducedIncidenceMatrix,
    r: np.ndarray,
    x: np.ndarray,
    condition_cap: float = CONDITION_CAP,
) -> SensitivityModel:
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    n = incidence.n
    if r.shape != (n,) or x.shape != (n,):
        raise DimensionMismatch(f"expected {n} line parameters, got r{r.shape} x{x.shape}")
    if np.any(r <= 0) or np.any(x <= 0):
        raise ScenarioLoadError("line resistances and reactances must be strictly positive")
    if np.linalg.cond(incidence.M) > condition_cap:
        raise SingularIncidence("reduced incidence matrix is numerically singular")
    Minv = incidence.Minv
    A = Minv.T @ (r[:, None] * Minv)
    B = Minv.T @ (x[:, None] * Minv)
    return SensitivityModel(A=0.5 * (A + A.T), B=0.5 * (B + B.T))


def model_for(topology: FeederTopology) -> SensitivityModel:
    return sensitivity_from_lines(build_incidence(topology), topology.r, topology.x)


def voltage(model: SensitivityModel, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != (model.n,) or Q.shape != (model.n,):
        raise DimensionMismatch(f"expected {model.n}-vectors, got P{P.shape} Q{Q.shape}")
    return model.A @ P + model.B @ Q + model.offset


def perturb_reactances(topology: FeederTopology, noise: MeasurementNoiseSpec, rng: np.random.Generator) -> np.ndarray:
    x_rated = topology.x
    if noise.reactance_var == 0:
        return x_rated.copy()
    eps = rng.normal(0.0, np.sqrt(noise.reactance_var), size=x_rated.shape)
    if noise.mode == "multiplicative":
        x = x_rated * (1.0 + eps)
    else:
        x = x_rated + eps / topology.z_base
    return np.maximum(x, noise.floor_fraction * x_rated)


class GroundTruth:
    """Perturbed feeder parameters plus the seeded measurement stream.

    The perturbation is drawn once per topology; topology events redraw it
    from a stream keyed by the event index.
    """

    def __init__(self, topology: FeederTopology, noise: MeasurementNoiseSpec, seed: int):
        self.noise = noise
        self.seed = int(seed)
        self._measure_rng = np.random.default_rng([self.seed, 1])
        self._install(topology, 0)

    def _install(self, topology: FeederTopology, event_index: int) -> None:
        self.rated = topology
        self.incidence = build_incidence(topology)
        rng = np.random.default_rng([self.seed, 0, event_index])
        self.true_topology = topology.with_reactances(perturb_reactances(topology, self.noise, rng))
        self.model = sensitivity_from_lines(self.incidence, self.true_topology.r, self.true_topology.x)
        self.rated_model = sensitivity_from_lines(self.incidence, topology.r, topology.x)

    @property
    def zeta(self) -> np.ndarray:
        return self.true_topology.zeta

    def reconfigure(self, topology: FeederTopology, event_index: int) -> None:
        self._install(topology, event_index)
        logger.info("Ground truth rebuilt for %d lines (event %d)", len(topology.lines), event_index)

    def measure(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        V = voltage(self.model, P, Q)
        if self.noise.voltage_var > 0:
            V = V + self._measure_rng.normal(0.0, np.sqrt(self.noise.voltage_var), size=V.shape)
        return V


def perturb_and_measure(
    topology: FeederTopology,
    noise: MeasurementNoiseSpec,
    seed: int,
    P: np.ndarray,
    Q: np.ndarray,
) -> Tuple[np.ndarray, SensitivityModel]:
    truth = GroundTruth(topology, noise, seed)
    return truth.measure(P, Q), truth.model


def _line_from_json(rec: Dict, z_base: float) -> Line:
    try:
        return Line(
            from_node=int(rec["from"]),
            to_node=int(rec["to"]),
            r=float(rec["r_ohm"]) / z_base,
            x=float(rec["x_ohm"]) / z_base,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioLoadError(f"bad line record {rec}: {e}")


def load_feeder(path: Path) -> FeederTopology:
    """Read a feeder JSON file (ohms, kW, kVAr) into a per-unit topology."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioLoadError(f"cannot read feeder file {path}: {e}")
    base_kv = float(raw.get("base_kV", 1.0))
    base_mva = float(raw.get("base_MVA", 1.0))
    z_base = base_kv ** 2 / base_mva
    lines = tuple(_line_from_json(rec, z_base) for rec in raw.get("lines", []))
    ties = tuple(_line_from_json(rec, z_base) for rec in raw.get("ties", []))
    n = int(raw.get("node_count", len(lines)))
    base_p: Tuple[float, ...] = ()
    base_q: Tuple[float, ...] = ()
    if raw.get("loads"):
        p = np.zeros(n)
        q = np.zeros(n)
        for rec in raw["loads"]:
            node = int(rec["node"])
            if not 1 <= node <= n:
                raise ScenarioLoadError(f"load at node {node} outside 1..{n}")
            p[node - 1] = float(rec["p_kw"]) / 1000.0 / base_mva
            q[node - 1] = float(rec["q_kvar"]) / 1000.0 / base_mva
        base_p, base_q = tuple(p), tuple(q)
    topology = FeederTopology(
        node_count=n,
        lines=lines,
        z_base=z_base,
        s_base_mva=base_mva,
        name=str(raw.get("name", path.stem)),
        base_p=base_p,
        base_q=base_q,
        ties=ties,
    )
    check_radial(topology)
    logger.info("Loaded feeder %s: %d nodes, z_base=%.4f ohm", topology.name, n, z_base)
    return topology


def reconfigured(topology: FeederTopology, add: Iterable[Sequence] = (), remove: Iterable[Sequence] = (),
                 lines: Optional[Sequence[Line]] = None) -> FeederTopology:
    """New topology with lines swapped; added endpoints are looked up among lines and ties."""
    if lines is not None:
        new = topology.with_lines(lines)
    else:
        drop = {frozenset((int(a), int(b))) for a, b, *_ in remove}
        kept = [ln for ln in topology.lines if ln.endpoints not in drop]
        if len(kept) != len(topology.lines) - len(drop):
            raise NonRadialTopology(f"cannot remove lines not in the feeder: {sorted(tuple(d) for d in drop)}")
        for rec in add:
            a, b = int(rec[0]), int(rec[1])
            if len(rec) >= 4:
                kept.append(Line(a, b, float(rec[2]), float(rec[3])))
                continue
            known = topology.find_line(a, b)
            if known is None:
                raise NonRadialTopology(f"line {a}-{b} has no impedance data; list it under ties")
            kept.append(Line(a, b, known.r, known.x))
        new = topology.with_lines(kept)
    check_radial(new)
    return new
