"""Kolmogorov phase screens and their structure function.

The target statistics are ``D(dr) = <[phi(r) - phi(r + dr)]^2> = 6.88 (dr / r0)^(5/3)``,
which corresponds to the phase power spectral density
``0.023 r0^(-5/3) f^(-11/3)`` (``f`` in cycles per meter).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import integrate
from scipy.special import j0

from pdiqt.field import ComplexFieldGrid, GridSpec, RealGrid, check_same_geometry
from pdiqt.states import make_rng

KOLMOGOROV_PSD = 0.023
KOLMOGOROV_D = 6.88
# A_m = A0 exp(-m/4) with frequencies f_m = f_0 exp(0.3 m) gives A ~ f^(-5/6),
# the per-octave amplitude of a 5/3-law screen.
MODE_AMPLITUDE_DECAY = 0.25
MODE_FREQUENCY_GROWTH = 0.3
# spectral cells within this many steps of the origin get integrated weights
INNER_CELLS = 3
# largest decaying-modes calibration separation, as a fraction of the grid extent
CALIBRATION_FRACTION = 0.25


class TurbulenceError(ValueError):
    pass


@dataclass(frozen=True)
class ScreenGenSpec:
    """How to draw a screen.

    ``spectral-fft`` filters complex white noise by the Kolmogorov spectrum and
    adds ``subharmonic_levels`` levels of 3x3 subharmonics for the
    scales the FFT grid misses; the f^(-11/3) spectrum puts a large share of the
    structure function below the grid fundamental, so several levels are needed.
    Cells next to the origin are weighted by their integrated tilt power instead
    of the midpoint PSD (see :func:`cell_weight`).
    ``decaying-modes`` sums ``num_modes`` randomly phased plane-wave modes with
    amplitudes ``A0 exp(-m/4)``; ``A0=None`` calibrates it so that the expected
    structure function equals ``6.88`` rad^2 at ``r0`` (or follows the 5/3 law
    at a quarter of the grid extent when ``r0`` is larger). The fundamental mode's
    period is ``fundamental_period_grids`` grid widths: a ladder that starts at
    the grid fundamental behaves like a short outer scale and flattens the
    structure function well below the 5/3 law at ``r0``.
    """

    method: Literal["spectral-fft", "decaying-modes"] = "spectral-fft"
    r0_m: float = 1.9e-3
    rng_seed: int = 0
    A0: float | None = None
    num_modes: int | None = None
    orientations_per_mode: int = 4
    fundamental_period_grids: float = 64.0
    subharmonic_levels: int = 10

    def __post_init__(self):
        if self.method not in ("spectral-fft", "decaying-modes"):
            raise TurbulenceError(f"unknown screen method {self.method!r}")
        if not self.r0_m > 0:
            raise TurbulenceError(f"r0 must be positive, got {self.r0_m}")
        if self.num_modes is not None and self.num_modes < 1:
            raise TurbulenceError("num_modes must be >= 1")
        if self.subharmonic_levels < 0:
            raise TurbulenceError("subharmonic_levels must be >= 0")
        if self.orientations_per_mode < 1:
            raise TurbulenceError("orientations_per_mode must be >= 1")
        if not self.fundamental_period_grids > 0:
            raise TurbulenceError("fundamental_period_grids must be positive")


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    phase: RealGrid
    r0_m: float

    @property
    def pitch_um(self) -> float:
        return self.phase.pitch_um


@dataclass(frozen=True)
class StructureFunctionEstimate:
    separations_m: np.ndarray
    D_values: np.ndarray
    sample_count: np.ndarray = field(repr=False)

    def kolmogorov(self, r0_m: float) -> np.ndarray:
        return KOLMOGOROV_D * (self.separations_m / r0_m) ** (5 / 3)


def _check_resolvable(spec: ScreenGenSpec, pitch_m: float) -> None:
    if spec.r0_m < 2 * pitch_m:
        raise TurbulenceError(
            f"r0 = {spec.r0_m:.3g} m is below two pixels ({2 * pitch_m:.3g} m); the screen is unresolvable"
        )


@lru_cache(maxsize=None)
def cell_weight(i: int, j: int, aspect: float = 1.0) -> float:
    """Integrated-to-midpoint ratio for the spectral cell centered on ``(i, j)`` cell steps.

    The cell spans ``[i - 1/2, i + 1/2] x aspect*[j - 1/2, j + 1/2]``. The weight is
    ``int PSD(f) |f|^2 d^2f / (PSD(f_c) |f_c|^2 area)``, which makes each cell's
    contribution to the small-separation structure function exact. Midpoint
    sampling of the convex f^(-11/3) law underweights the innermost cells.
    """
    fc2 = i * i + (aspect * j) ** 2
    val, _ = integrate.dblquad(
        lambda v, u: (u * u + v * v) ** (-5 / 6),
        i - 0.5,
        i + 0.5,
        aspect * (j - 0.5),
        aspect * (j + 0.5),
        epsabs=1e-12,
    )
    return val / (fc2 ** (-5 / 6) * aspect)


def _inner_weights(aspect: float) -> dict[tuple[int, int], float]:
    return {
        (i, j): cell_weight(i, j, aspect)
        for i in range(-INNER_CELLS, INNER_CELLS + 1)
        for j in range(-INNER_CELLS, INNER_CELLS + 1)
        if (i, j) != (0, 0)
    }


def _spectral_fft_screen(spec: ScreenGenSpec, shape: tuple[int, int], pitch_m: float, rng) -> np.ndarray:
    height, width = shape
    fy = np.fft.fftfreq(height, pitch_m)[:, None]
    fx = np.fft.fftfreq(width, pitch_m)[None, :]
    f = np.hypot(fx, fy)
    f[0, 0] = 1.0
    psd = KOLMOGOROV_PSD * spec.r0_m ** (-5 / 3) * f ** (-11 / 3)
    psd[0, 0] = 0.0
    dfx, dfy = 1 / (width * pitch_m), 1 / (height * pitch_m)
    inner = _inner_weights(dfy / dfx)
    if min(shape) > 2 * INNER_CELLS + 1:
        for (i, j), w in inner.items():
            psd[j % height, i % width] *= w
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    screen = np.real(np.fft.ifft2(noise * np.sqrt(psd * dfx * dfy))) * (height * width)

    if spec.subharmonic_levels:
        y = np.arange(height) * pitch_m
        x = np.arange(width) * pitch_m
        steps = np.array([-1.0, 0.0, 1.0])
        low = np.zeros(shape, dtype=np.complex128)
        for level in range(1, spec.subharmonic_levels + 1):
            sx, sy = dfx / 3**level, dfy / 3**level
            f_sub = np.hypot(steps[None, :] * sx, steps[:, None] * sy)
            f_sub[1, 1] = 1.0
            psd_sub = KOLMOGOROV_PSD * spec.r0_m ** (-5 / 3) * f_sub ** (-11 / 3)
            psd_sub *= np.array([[inner.get((i, j), 0.0) for i in (-1, 0, 1)] for j in (-1, 0, 1)])
            coeffs = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))) * np.sqrt(psd_sub * sx * sy)
            # sum_ij c_ij exp(2i pi (fy_i y + fx_j x)) as a rank-3 product
            wave_y = np.exp(2j * np.pi * sy * np.outer(y, steps))
            wave_x = np.exp(2j * np.pi * sx * np.outer(steps, x))
            low += wave_y @ coeffs @ wave_x
        screen = screen + low.real
    return screen


def mode_frequencies(period_m: float, pitch_m: float, num_modes: int | None) -> np.ndarray:
    """Geometric ladder ``f_m = exp(0.3 m) / period_m``, by default up to Nyquist."""
    f0 = 1.0 / period_m
    f_nyq = 0.5 / pitch_m
    max_modes = int(np.floor(np.log(f_nyq / f0) / MODE_FREQUENCY_GROWTH)) + 1
    m = np.arange(max_modes if num_modes is None else num_modes)
    return f0 * np.exp(MODE_FREQUENCY_GROWTH * m)


def decaying_modes_structure_function(separation_m, frequencies: np.ndarray, A0: float) -> np.ndarray:
    """Expected ``D`` of the mode sum: ``sum_m A_m^2 (1 - J0(2 pi f_m dr))`` (isotropic average)."""
    m = np.arange(frequencies.size)
    amp2 = (A0 * np.exp(-MODE_AMPLITUDE_DECAY * m)) ** 2
    dr = np.atleast_1d(np.asarray(separation_m, dtype=np.float64))
    return np.sum(amp2[None, :] * (1 - j0(2 * np.pi * frequencies[None, :] * dr[:, None])), axis=1)


def calibrated_A0(r0_m: float, frequencies: np.ndarray, reference_m: float | None = None) -> float:
    """``A0`` making the expected ``D`` equal the Kolmogorov law at ``reference_m`` (default ``r0``)."""
    ref = r0_m if reference_m is None else reference_m
    unit = decaying_modes_structure_function(ref, frequencies, 1.0)[0]
    return float(np.sqrt(KOLMOGOROV_D * (ref / r0_m) ** (5 / 3) / unit))


def _decaying_modes_screen(spec: ScreenGenSpec, shape: tuple[int, int], pitch_m: float, rng) -> np.ndarray:
    height, width = shape
    period_m = spec.fundamental_period_grids * max(height, width) * pitch_m
    freqs = mode_frequencies(period_m, pitch_m, spec.num_modes)
    # past a fraction of the grid the ladder no longer follows the 5/3 law, so
    # weak turbulence (r0 beyond the grid) is matched at a separation that fits
    reference_m = min(spec.r0_m, CALIBRATION_FRACTION * max(height, width) * pitch_m)
    A0 = calibrated_A0(spec.r0_m, freqs, reference_m) if spec.A0 is None else spec.A0
    n_orient = spec.orientations_per_mode
    m = np.repeat(np.arange(freqs.size), n_orient)
    f = freqs[m]
    # each mode's amplitude is split over its orientations, keeping its variance at A_m^2 / 2
    amp = A0 * np.exp(-MODE_AMPLITUDE_DECAY * m) / np.sqrt(n_orient)
    theta = rng.uniform(0, 2 * np.pi, m.size)
    psi = rng.uniform(0, 2 * np.pi, m.size)
    y = np.arange(height) * pitch_m
    x = np.arange(width) * pitch_m
    wave_y = np.exp(2j * np.pi * np.outer(y, f * np.sin(theta)))
    wave_x = np.exp(2j * np.pi * np.outer(f * np.cos(theta), x))
    return np.real((wave_y * (amp * np.exp(1j * psi))) @ wave_x)


def generate_screen(spec: ScreenGenSpec, grid_spec: GridSpec = GridSpec()) -> PhaseScreen:
    """Piston-free screen, deterministic in ``spec.rng_seed``."""
    pitch_m = grid_spec.pitch_um * 1e-6
    _check_resolvable(spec, pitch_m)
    rng = make_rng(spec.rng_seed)
    if spec.method == "spectral-fft":
        phase = _spectral_fft_screen(spec, grid_spec.shape, pitch_m, rng)
    else:
        phase = _decaying_modes_screen(spec, grid_spec.shape, pitch_m, rng)
    phase = phase - phase.mean()
    return PhaseScreen(RealGrid(phase, grid_spec.pitch_um), spec.r0_m)


def structure_function(screens, separations_px) -> StructureFunctionEstimate:
    """Mean squared phase difference at integer pixel separations, averaged over x and y and the ensemble."""
    screens = list(screens)
    if not screens:
        raise TurbulenceError("need at least one screen")
    shape = screens[0].phase.shape
    pitch_um = screens[0].pitch_um
    seps = np.asarray(separations_px, dtype=np.int64)
    if np.any(seps < 0):
        raise TurbulenceError("separations must be non-negative")
    if np.any(seps > min(shape) // 2):
        raise TurbulenceError(f"separations must not exceed half the grid ({min(shape) // 2} px)")
    sums = np.zeros(seps.size)
    counts = np.zeros(seps.size, dtype=np.int64)
    for screen in screens:
        if screen.phase.shape != shape:
            raise TurbulenceError("all screens must share one geometry")
        p = screen.phase.samples
        for i, s in enumerate(seps):
            if s == 0:
                counts[i] += 2 * p.size
                continue
            dx = p[:, s:] - p[:, :-s]
            dy = p[s:, :] - p[:-s, :]
            sums[i] += np.sum(dx**2) + np.sum(dy**2)
            counts[i] += dx.size + dy.size
    return StructureFunctionEstimate(seps * pitch_um * 1e-6, sums / counts, counts)


def loglog_slope(estimate: StructureFunctionEstimate, lo_m: float, hi_m: float) -> float:
    """Least-squares slope of ``log D`` vs ``log dr`` over ``[lo_m, hi_m]``."""
    sel = (estimate.separations_m >= lo_m) & (estimate.separations_m <= hi_m) & (estimate.D_values > 0)
    if sel.sum() < 2:
        raise TurbulenceError("fewer than two separations in the fit range")
    return float(np.polyfit(np.log(estimate.separations_m[sel]), np.log(estimate.D_values[sel]), 1)[0])


def apply_screen(field: ComplexFieldGrid, screen: PhaseScreen) -> ComplexFieldGrid:
    check_same_geometry(field, screen.phase)
    return field.with_samples(field.samples * np.exp(1j * screen.phase.samples))


def affine_screen(grid_spec: GridSpec, tilt_x: float, tilt_y: float, offset: float = 0.0) -> PhaseScreen:
    """Deterministic tilt screen (radians per pixel), useful where interpolation must be exact."""
    rows, cols = np.indices(grid_spec.shape)
    phase = offset + tilt_x * (cols - grid_spec.width_px // 2) + tilt_y * (rows - grid_spec.height_px // 2)
    return PhaseScreen(RealGrid(phase, grid_spec.pitch_um), np.inf)
