"""Continuous-time reconstruction of sampled forecasts and loads."""
import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from scripts.errors import IoError, ScenarioLoadError, TooFewSamples

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampledSeries:
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ScenarioLoadError("timestamps and values must be 1-D arrays of equal length")
        if len(t) < 2:
            raise TooFewSamples(f"need at least 2 samples, got {len(t)}")
        if np.any(np.diff(t) <= 0):
            raise ScenarioLoadError("timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, values, spacing: float = 1.0, start: float = 0.0) -> "SampledSeries":
        values = np.asarray(values, dtype=float)
        return cls(t=start + spacing * np.arange(len(values)), values=values)


class Interpolant:
    """Piecewise cubic Hermite curve; clamped to the end values outside its span."""

    def __init__(self, spline: CubicHermiteSpline, t: np.ndarray, values: np.ndarray):
        self._spline = spline
        self._dspline = spline.derivative()
        self.t_start = float(t[0])
        self.t_end = float(t[-1])
        self._first = float(values[0])
        self._last = float(values[-1])

    def __call__(self, t: float) -> float:
        return eval_with_derivative(self, t)[0]

    def evaluate(self, t: float) -> Tuple[float, float]:
        if t < self.t_start:
            return self._first, 0.0
        if t > self.t_end:
            return self._last, 0.0
        return float(self._spline(t)), float(self._dspline(t))


def _knot_slopes(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    h = np.diff(t)
    delta = np.diff(y) / h
    m = np.empty_like(y)
    if len(y) == 2:
        m[:] = delta[0]
        return m
    # three-point differences; non-uniform weights
    m[1:-1] = (h[:-1] * delta[1:] + h[1:] * delta[:-1]) / (h[:-1] + h[1:])
    m[0] = ((2 * h[0] + h[1]) * delta[0] - h[0] * delta[1]) / (h[0] + h[1])
    m[-1] = ((2 * h[-1] + h[-2]) * delta[-1] - h[-1] * delta[-2]) / (h[-1] + h[-2])
    if np.sign(m[0]) != np.sign(delta[0]):
        m[0] = 0.0
    if np.sign(m[-1]) != np.sign(delta[-1]):
        m[-1] = 0.0

    # Fritsch-Carlson limiting
    for k in range(1, len(y) - 1):
        if delta[k - 1] * delta[k] <= 0:
            m[k] = 0.0
    for k in range(len(delta)):
        if delta[k] == 0:
            m[k] = 0.0
            m[k + 1] = 0.0
            continue
        a = m[k] / delta[k]
        b = m[k + 1] / delta[k]
        r2 = a * a + b * b
        if r2 > 9.0:
            scale = 3.0 / np.sqrt(r2)
            m[k] = scale * a * delta[k]
            m[k + 1] = scale * b * delta[k]
    return m


def hermite_fit(series: SampledSeries) -> Interpolant:
    slopes = _knot_slopes(series.t, series.values)
    spline = CubicHermiteSpline(series.t, series.values, slopes)
    return Interpolant(spline, series.t, series.values)


def eval_with_derivative(f: Interpolant, t: float) -> Tuple[float, float]:
    return f.evaluate(float(t))


def constant_interpolant(value: float, t_end: float = 1.0) -> Interpolant:
    return hermite_fit(SampledSeries(t=np.array([0.0, max(t_end, 1.0)]), values=np.array([value, value])))


def read_profile(path: Path) -> SampledSeries:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or not {"t_s", "value"} <= set(reader.fieldnames):
                raise ScenarioLoadError(f"{path}: profile header must be t_s,value")
            rows = [(float(r["t_s"]), float(r["value"])) for r in reader]
    except OSError as e:
        raise ScenarioLoadError(f"cannot read profile {path}: {e}")
    except ValueError as e:
        raise ScenarioLoadError(f"{path}: {e}")
    if len(rows) < 2:
        raise TooFewSamples(f"{path}: need at least 2 samples, got {len(rows)}")
    arr = np.array(rows)
    return SampledSeries(t=arr[:, 0], values=arr[:, 1])


def write_profile(path: Path, series: SampledSeries) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["t_s", "value"])
            for t, v in zip(series.t, series.values):
                w.writerow([repr(float(t)), repr(float(v))])
    except OSError as e:
        raise IoError(f"cannot write profile {path}: {e}")
    return path


@dataclass(frozen=True)
class ExogenousSignals:
    """Availability forecasts per renewable node plus the shared load curve.

    Halted renewables report zero availability with zero derivative.
    """
    availability: Mapping[int, Interpolant]
    load_multiplier: Interpolant
    base_p: np.ndarray
    base_q: np.ndarray
    halted: FrozenSet[int] = field(default_factory=frozenset)

    @property
    def n(self) -> int:
        return len(self.base_p)

    def available(self, node: int, t: float) -> Tuple[float, float]:
        if node in self.halted or node not in self.availability:
            return 0.0, 0.0
        value, rate = eval_with_derivative(self.availability[node], t)
        if value <= 0.0:
            return 0.0, 0.0
        return value, rate

    def availability_at(self, t: float) -> Dict[int, Tuple[float, float]]:
        return {node: self.available(node, t) for node in self.availability}

    def loads(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """W(t) = [-P_L; -Q_L] and its time derivative."""
        m, dm = eval_with_derivative(self.load_multiplier, t)
        W = -np.concatenate([self.base_p * m, self.base_q * m])
        dW = -np.concatenate([self.base_p * dm, self.base_q * dm])
        return W, dW

    def with_halt(self, node: int) -> "ExogenousSignals":
        return replace(self, halted=self.halted | {node})

    def with_resume(self, node: int) -> "ExogenousSignals":
        return replace(self, halted=self.halted - {node})
