"""Seeded synthetic availability and load profiles (1 s samples).

Each profile is a smooth base curve plus a band-limited fluctuation made of a
few low-frequency sinusoids with random phases.
"""
import math
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from scripts.errors import ScenarioLoadError
from scripts.signals import SampledSeries, write_profile

logger = logging.getLogger(__name__)

# (fluctuation amplitude as a fraction of the base, frequency band in Hz)
KIND_DEFAULTS: Dict[str, Tuple[float, Tuple[float, float]]] = {
    "pv": (0.04, (0.01, 0.05)),
    "wind": (0.08, (0.02, 0.08)),
    "load": (0.02, (0.005, 0.03)),
}
NOON_S = 12 * 3600.0


def _fluctuation(t: np.ndarray, rng: np.random.Generator, amplitude: float, band: Tuple[float, float],
                 components: int = 4) -> np.ndarray:
    freqs = rng.uniform(band[0], band[1], size=components)
    phases = rng.uniform(0.0, 2 * math.pi, size=components)
    weights = rng.uniform(0.5, 1.0, size=components)
    weights = weights / weights.sum()
    return amplitude * np.sum(weights[:, None] * np.sin(2 * math.pi * freqs[:, None] * t[None, :] + phases[:, None]), axis=0)


def synthetic_profile(
    kind: str,
    horizon_s: float,
    rng: np.random.Generator,
    capacity: float = 1.0,
    value: float = 0.0,
    rate: float = 0.0,
    fluctuation: Optional[float] = None,
    start_clock_s: float = NOON_S,
    spacing: float = 1.0,
) -> SampledSeries:
    count = int(math.ceil(max(horizon_s, 0.0) / spacing)) + 3
    t = spacing * np.arange(count)
    if kind == "constant":
        return SampledSeries(t=t, values=np.full(count, float(value)))
    if kind == "ramp":
        return SampledSeries(t=t, values=np.maximum(float(value) + float(rate) * t, 0.0))
    if kind not in KIND_DEFAULTS:
        raise ScenarioLoadError(f"unknown synthetic profile kind {kind!r}")
    amp, band = KIND_DEFAULTS[kind]
    if fluctuation is not None:
        amp = float(fluctuation)
    if kind == "pv":
        clock = start_clock_s + t
        base = np.maximum(np.sin(math.pi * (clock - 6 * 3600.0) / (12 * 3600.0)), 0.0)
        values = capacity * base * (1.0 + _fluctuation(t, rng, amp, band))
    elif kind == "wind":
        values = capacity * (0.7 + _fluctuation(t, rng, amp, band))
    else:
        values = capacity * (1.0 + _fluctuation(t, rng, amp, band))
    return SampledSeries(t=t, values=np.maximum(values, 0.0))


def profile_rng(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), 2, int(key)])


# 33-bus placement used by the shipped scenarios: node -> (kind, capacity pu)
DEFAULT_PLACEMENT: Dict[int, Tuple[str, float]] = {
    2: ("pv", 0.02), 6: ("pv", 0.03), 11: ("pv", 0.03), 16: ("pv", 0.03),
    19: ("pv", 0.02), 24: ("pv", 0.03), 28: ("pv", 0.13),
    13: ("wind", 0.03), 26: ("wind", 0.03),
}


def generate_profiles(seed: int, out_dir: Path, horizon_s: float = 60.0) -> Dict[str, Path]:
    """Write one CSV per default device plus the load multiplier."""
    out_dir = Path(out_dir)
    written: Dict[str, Path] = {}
    for node, (kind, cap) in sorted(DEFAULT_PLACEMENT.items()):
        series = synthetic_profile(kind, horizon_s, profile_rng(seed, node), capacity=cap)
        name = f"{'PV' if kind == 'pv' else 'WT'}{node}"
        written[name] = write_profile(out_dir / f"{name}.csv", series)
    series = synthetic_profile("load", horizon_s, profile_rng(seed, 0), capacity=1.0)
    written["load"] = write_profile(out_dir / "load.csv", series)
    logger.info("Generated %d profiles in %s", len(written), out_dir)
    return written
