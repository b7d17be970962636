"""Point-diffraction filter, N-step interferograms and phase-shifting reconstruction.

The filter shifts the phase of the zero-frequency content of the object
spectrum by ``alpha_n = 2*pi*n/N``. In the image plane the shifted DC term is a
uniform reference wave ``K (exp(i alpha_n) - 1)`` superposed on the object,
with ``K`` the mean of the object field. Combining the frames with cosine and
sine weights gives

    C = -N|K|^2 + N|K| u cos(phi + mu),    S = N|K| u sin(phi + mu),

so ``phi + mu = arctan2(S, C - C0)`` with ``C0 = -N|K|^2`` read off where the
object vanishes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from pdiqt.aperture import RoiSet, SlitGeometry, radius_map
from pdiqt.field import (
    ComplexFieldGrid,
    RealGrid,
    circular_mean,
    circular_std,
    forward_fourier,
    intensity,
    inverse_fourier,
    wrap_phase,
)
from pdiqt.noise import NoiseModel, apply_shot_noise
from pdiqt.seeding import seed_sequence
from pdiqt.states import QuditState, StateError, normalize

C0_MARGIN_PX = 8


class PsiError(ValueError):
    pass


class ModelViolationWarning(UserWarning):
    """The data contradict the PDI model (e.g. positive C over the zero region)."""


@dataclass(frozen=True)
class PdiFilterSpec:
    """Phase-shifting filter at the Fourier plane.

    ``ideal-dc`` shifts the single zero-frequency bin. ``finite-pixel`` shifts
    every bin in the ``(2*half_width_px + 1)``-wide square around it.
    """

    num_steps_N: int = 4
    filter_kind: Literal["ideal-dc", "finite-pixel"] = "ideal-dc"
    half_width_px: int = 0

    def __post_init__(self):
        if self.num_steps_N < 3:
            raise PsiError(f"need at least 3 phase steps, got {self.num_steps_N}")
        if self.filter_kind not in ("ideal-dc", "finite-pixel"):
            raise PsiError(f"unknown filter kind {self.filter_kind!r}")
        if self.half_width_px < 0:
            raise PsiError("half_width_px must be >= 0")

    @property
    def alphas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.num_steps_N) / self.num_steps_N

    @property
    def half_width(self) -> int:
        return 0 if self.filter_kind == "ideal-dc" else self.half_width_px

    def to_dict(self) -> dict:
        return {"num_steps_N": self.num_steps_N, "filter_kind": self.filter_kind, "half_width_px": self.half_width_px}

    @classmethod
    def from_dict(cls, data: dict) -> PdiFilterSpec:
        return cls(**data)


@dataclass(frozen=True, eq=False)
class InterferogramSet:
    """Stack of ``N`` intensity frames, ``frames[n]`` taken at ``alpha_n = 2*pi*n/N``."""

    frames: np.ndarray
    pitch_um: float
    filter_spec: PdiFilterSpec = PdiFilterSpec()
    noisy: bool = False
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise PsiError(f"frames must be a (N, height, width) stack, got shape {frames.shape}")
        if frames.shape[0] != self.filter_spec.num_steps_N:
            raise PsiError(f"{frames.shape[0]} frames given for an N={self.filter_spec.num_steps_N} filter")
        for n in range(frames.shape[0]):
            RealGrid(frames[n], self.pitch_um, kind="intensity")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def N(self) -> int:
        return self.frames.shape[0]

    def frame(self, n: int) -> RealGrid:
        return RealGrid(self.frames[n], self.pitch_um, kind="intensity")


@dataclass(frozen=True)
class PsiAccumulators:
    C: RealGrid
    S: RealGrid
    C0: float
    K_modulus: float
    mu: float = 0.0


@dataclass(frozen=True)
class ReconstructionResult:
    phase_map: RealGrid
    amplitude_map: RealGrid
    estimated_state: QuditState
    roi_phase_std: tuple[float, ...]
    accumulators: PsiAccumulators | None = None


def apply_pdi_filter(fourier_field: ComplexFieldGrid, alpha: float, spec: PdiFilterSpec = PdiFilterSpec()) -> ComplexFieldGrid:
    """Multiply the central Fourier bin(s) by ``exp(i alpha)``."""
    spectrum = np.array(fourier_field.samples)
    height, width = spectrum.shape
    h = spec.half_width
    cy, cx = height // 2, width // 2
    if cy - h < 0 or cx - h < 0:
        raise PsiError(f"filter half-width {h} exceeds the grid")
    spectrum[cy - h : cy + h + 1, cx - h : cx + h + 1] *= np.exp(1j * alpha)
    return fourier_field.with_samples(spectrum)


def record_interferograms(
    object_field: ComplexFieldGrid,
    spec: PdiFilterSpec = PdiFilterSpec(),
    noise: NoiseModel | None = None,
    rng_seed: int | None = None,
) -> InterferogramSet:
    """Image-plane intensities for every phase step; the object field is frozen across steps."""
    if noise is not None and rng_seed is None:
        raise PsiError("a noise model needs an rng_seed")
    spectrum = forward_fourier(object_field)
    frames = []
    for n, alpha in enumerate(spec.alphas):
        frame = intensity(inverse_fourier(apply_pdi_filter(spectrum, alpha, spec)))
        if noise is not None:
            frame = apply_shot_noise(frame, noise, seed_sequence(rng_seed, n))
        frames.append(frame.samples)
    return InterferogramSet(
        np.stack(frames), object_field.pitch_um, spec, noisy=noise is not None, seed=rng_seed
    )


def accumulate_cs(frames: InterferogramSet) -> tuple[RealGrid, RealGrid]:
    N = frames.N
    if N < 3:
        raise PsiError(f"need at least 3 frames, got {N}")
    angles = 2 * np.pi * np.arange(N) / N
    C = np.tensordot(np.cos(angles), frames.frames, axes=1)
    S = np.tensordot(np.sin(angles), frames.frames, axes=1)
    return RealGrid(C, frames.pitch_um), RealGrid(S, frames.pitch_um)


def outside_pupil_region(geom: SlitGeometry, shape: tuple[int, int], margin_px: float = C0_MARGIN_PX) -> np.ndarray:
    """Default zero region: every pixel farther than ``R + margin`` from the pupil center."""
    return radius_map(geom, shape) > geom.pupil_radius_R_px + margin_px


def rectangle_region(shape: tuple[int, int], rows: tuple[int, int], cols: tuple[int, int]) -> np.ndarray:
    region = np.zeros(shape, dtype=bool)
    region[rows[0] : rows[1], cols[0] : cols[1]] = True
    return region


def estimate_reference(C: RealGrid, zero_region: np.ndarray, num_steps: int) -> tuple[float, float]:
    """``C0`` (mean of C where the object vanishes) and the reference modulus ``|K| = sqrt(-C0/N)``."""
    zero_region = np.asarray(zero_region, dtype=bool)
    if zero_region.shape != C.shape:
        raise PsiError(f"zero region shape {zero_region.shape} does not match grid {C.shape}")
    if not zero_region.any():
        raise PsiError("zero region is empty")
    C0 = float(np.mean(C.samples[zero_region]))
    if C0 > 0:
        warnings.warn(
            f"mean C over the zero region is positive ({C0:.3g}); the object does not vanish there",
            ModelViolationWarning,
            stacklevel=2,
        )
    return C0, float(np.sqrt(max(-C0, 0.0) / num_steps))


def reconstruct_phase(C: RealGrid, S: RealGrid, C0: float, rel_tol: float = 1e-9) -> RealGrid:
    """Wrapped phase ``arctan2(S, C - C0)`` in the gauge ``mu = 0``.

    Pixels whose modulation ``hypot(S, C - C0)`` is below ``rel_tol`` times the
    largest modulation carry no phase information and are set to NaN.
    """
    re = C.samples - C0
    im = S.samples
    modulation = np.hypot(re, im)
    peak = modulation.max()
    phase = wrap_phase(np.arctan2(im, re))
    phase[modulation <= rel_tol * peak] = np.nan
    return RealGrid(phase, C.pitch_um, kind="phase")


def reconstruct_amplitude(frames: InterferogramSet) -> RealGrid:
    """At ``alpha_0 = 0`` the filter is the identity, so frame 0 is ``|U|^2``."""
    return RealGrid(np.sqrt(frames.frames[0]), frames.pitch_um)


def roi_readout(
    phase_map: RealGrid, amplitude_map: RealGrid, rois: RoiSet, amplitude_tol: float = 1e-9
) -> tuple[np.ndarray, tuple[float, ...]]:
    """Unnormalized per-slit coefficients and the circular std of the phase inside each ROI."""
    amplitudes = np.array([np.mean(amplitude_map.samples[roi.slices]) for roi in rois])
    scale = amplitudes.max() if amplitudes.size else 0.0
    coeffs = np.zeros(len(rois), dtype=np.complex128)
    spread = []
    for k, roi in enumerate(rois):
        phases = phase_map.samples[roi.slices]
        mean_phase = circular_mean(phases)
        spread.append(circular_std(phases))
        if np.isnan(mean_phase):
            if amplitudes[k] > amplitude_tol * scale:
                raise PsiError(f"slit {k}: no valid phase pixels inside its ROI")
            continue
        coeffs[k] = amplitudes[k] * np.exp(1j * mean_phase)
    return coeffs, tuple(spread)


def extract_state(phase_map: RealGrid, amplitude_map: RealGrid, rois: RoiSet) -> QuditState:
    """Qudit read out by averaging amplitude and (circularly) phase over each ROI."""
    coeffs, _ = roi_readout(phase_map, amplitude_map, rois)
    try:
        return normalize(coeffs).canonical()
    except StateError as err:
        raise PsiError("all ROIs are dark; no state to extract") from err


def reconstruct(
    frames: InterferogramSet,
    geom: SlitGeometry,
    rois: RoiSet,
    zero_region: np.ndarray | None = None,
) -> ReconstructionResult:
    """Full PSI chain: accumulators, reference, phase and amplitude maps, ROI readout."""
    shape = frames.frames.shape[1:]
    if zero_region is None:
        zero_region = outside_pupil_region(geom, shape)
    C, S = accumulate_cs(frames)
    C0, K_modulus = estimate_reference(C, zero_region, frames.N)
    phase_map = reconstruct_phase(C, S, C0)
    amplitude_map = reconstruct_amplitude(frames)
    coeffs, spread = roi_readout(phase_map, amplitude_map, rois)
    try:
        state = normalize(coeffs).canonical()
    except StateError as err:
        raise PsiError("all ROIs are dark; no state to extract") from err
    return ReconstructionResult(phase_map, amplitude_map, state, spread, PsiAccumulators(C, S, C0, K_modulus))
