"""Sampled 2D fields and the centered, unitary Fourier transforms of the 4f processor.

Arrays are indexed ``[row, column] = [y, x]``. The spatial origin and the zero
frequency both sit at index ``(height // 2, width // 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

DEFAULT_SIZE_PX = 512
DEFAULT_PITCH_UM = 43.0

RealKind = Literal["intensity", "phase", "generic"]


class GridError(ValueError):
    """Invalid grid geometry or contents."""


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the simulation grid."""

    width_px: int = DEFAULT_SIZE_PX
    height_px: int = DEFAULT_SIZE_PX
    pitch_um: float = DEFAULT_PITCH_UM

    def __post_init__(self):
        _check_geometry((self.height_px, self.width_px), self.pitch_um)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_px, self.width_px)


def _check_geometry(shape: tuple[int, ...], pitch_um: float) -> None:
    if len(shape) != 2:
        raise GridError(f"expected a 2D array, got shape {shape}")
    height, width = shape
    if height < 2 or width < 2:
        raise GridError(f"grid must be at least 2x2, got {width}x{height}")
    if height % 2 or width % 2:
        raise GridError(f"grid dimensions must be even, got {width}x{height}")
    if not pitch_um > 0:
        raise GridError(f"pitch_um must be positive, got {pitch_um}")


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ComplexFieldGrid:
    """Complex optical amplitude sampled on a regular grid.

    Parameters
    ----------
    samples : ndarray
        complex array of shape ``(height_px, width_px)``
    pitch_um : float
        physical size of one sample, in microns
    """

    samples: np.ndarray
    pitch_um: float = DEFAULT_PITCH_UM

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        _check_geometry(samples.shape, self.pitch_um)
        if not np.all(np.isfinite(samples)):
            bad = np.argwhere(~np.isfinite(samples))[0]
            raise GridError(f"non-finite field sample at (row, col) = {tuple(bad)}")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "pitch_um", float(self.pitch_um))

    @property
    def height_px(self) -> int:
        return self.samples.shape[0]

    @property
    def width_px(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape

    def with_samples(self, samples: np.ndarray) -> ComplexFieldGrid:
        return ComplexFieldGrid(samples, self.pitch_um)


@dataclass(frozen=True, eq=False)
class RealGrid:
    """Real-valued map on the same geometry as a :class:`ComplexFieldGrid`.

    ``kind="intensity"`` grids are non-negative. ``kind="phase"`` grids hold
    radians in (-pi, pi]; NaN marks pixels where the phase is undefined.
    """

    samples: np.ndarray
    pitch_um: float = DEFAULT_PITCH_UM
    kind: RealKind = "generic"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        _check_geometry(samples.shape, self.pitch_um)
        if self.kind == "intensity":
            if not np.all(np.isfinite(samples)):
                raise GridError("intensity grid contains non-finite values")
            if np.any(samples < 0):
                raise GridError("intensity grid contains negative values")
        elif self.kind == "phase":
            finite = samples[np.isfinite(samples)]
            if np.any(np.isinf(samples)):
                raise GridError("phase grid contains infinite values")
            if finite.size and (finite.min() <= -np.pi or finite.max() > np.pi):
                raise GridError("phase grid values must lie in (-pi, pi]")
        elif self.kind != "generic":
            raise GridError(f"unknown grid kind {self.kind!r}")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "pitch_um", float(self.pitch_um))

    @property
    def height_px(self) -> int:
        return self.samples.shape[0]

    @property
    def width_px(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape


def wrap_phase(phase):
    """Map angles onto (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(phase, dtype=np.float64), 2 * np.pi)


def centered_coordinates(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates ``(y, x)`` relative to the grid center, as broadcastable columns/rows."""
    height, width = shape
    y = (np.arange(height) - height // 2)[:, None]
    x = (np.arange(width) - width // 2)[None, :]
    return y, x


def forward_fourier(field: ComplexFieldGrid) -> ComplexFieldGrid:
    """Centered unitary 2D DFT (the lens L1 mapping the object plane to the Fourier plane)."""
    spectrum = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field.samples), norm="ortho"))
    return field.with_samples(spectrum)


def inverse_fourier(field: ComplexFieldGrid) -> ComplexFieldGrid:
    """Exact inverse of :func:`forward_fourier`."""
    samples = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(field.samples), norm="ortho"))
    return field.with_samples(samples)


def check_same_geometry(a, b) -> None:
    if a.shape != b.shape:
        raise GridError(f"grid geometry mismatch: {a.shape} vs {b.shape}")
    if not np.isclose(a.pitch_um, b.pitch_um):
        raise GridError(f"pitch mismatch: {a.pitch_um} um vs {b.pitch_um} um")


def apply_mask(field: ComplexFieldGrid, mask: ComplexFieldGrid) -> ComplexFieldGrid:
    check_same_geometry(field, mask)
    return field.with_samples(field.samples * mask.samples)


def intensity(field: ComplexFieldGrid) -> RealGrid:
    samples = field.samples
    return RealGrid(samples.real**2 + samples.imag**2, field.pitch_um, kind="intensity")


def total_power(field: ComplexFieldGrid) -> float:
    samples = field.samples
    return float(np.sum(samples.real**2 + samples.imag**2))


def circular_mean(phase, weights=None) -> float:
    """Angle of the mean unit phasor, ignoring NaNs; NaN if nothing is left."""
    phase = np.asarray(phase, dtype=np.float64)
    keep = np.isfinite(phase)
    if not np.any(keep):
        return float("nan")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)[keep]
    z = np.average(np.exp(1j * phase[keep]), weights=w)
    return float(wrap_phase(np.angle(z)))


def circular_std(phase) -> float:
    phase = np.asarray(phase, dtype=np.float64)
    phase = phase[np.isfinite(phase)]
    if phase.size == 0:
        return float("nan")
    resultant = min(1.0, abs(np.mean(np.exp(1j * phase))))
    return float(np.sqrt(-2.0 * np.log(resultant))) if resultant > 0 else float("inf")
