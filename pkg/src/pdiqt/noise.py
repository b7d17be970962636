"""Classical Poisson surrogate for photon-counting detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pdiqt.field import RealGrid
from pdiqt.states import make_rng

DEFAULT_PHOTON_BUDGET = 1e6


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Poisson counts scaled to ``photon_budget`` expected photons per frame plus dark counts per pixel."""

    photon_budget: float = DEFAULT_PHOTON_BUDGET
    dark_level: float = 0.0

    def __post_init__(self):
        if not self.photon_budget > 0:
            raise NoiseError(f"photon budget must be positive, got {self.photon_budget}")
        if self.dark_level < 0:
            raise NoiseError(f"dark level must be >= 0, got {self.dark_level}")


def expected_counts(intensity: RealGrid, model: NoiseModel) -> np.ndarray:
    values = intensity.samples
    if np.any(values < 0):
        raise NoiseError("intensity must be non-negative")
    total = float(values.sum())
    # a dark frame (total 0) has no photons to scale, only dark counts
    scale = model.photon_budget / total if total > 0 else 0.0
    return values * scale + model.dark_level


def apply_shot_noise(intensity: RealGrid, model: NoiseModel, rng_seed) -> RealGrid:
    """Independent Poisson draw per pixel, in photon counts."""
    if not np.isfinite(intensity.samples).all():
        raise NoiseError("intensity must be finite")
    rng = make_rng(rng_seed)
    counts = rng.poisson(expected_counts(intensity, model)).astype(np.float64)
    return RealGrid(counts, intensity.pitch_um, kind="intensity")
