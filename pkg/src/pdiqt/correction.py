"""Aberration estimate from the background and its interpolation across the slits.

Outside the slits the object phase is known to be constant, so whatever the
reconstructed phase shows there is aberration. Inside a slit the aberration
cannot be told apart from the coefficient phase; it is filled in by linear
interpolation across the slit (along y) between the background bands that
border the slit above and below, column by column. Slit-interior phase values
are never read.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from pdiqt.aperture import SlitGeometry, pupil_mask, slit_labels, slit_rectangles
from pdiqt.field import RealGrid, check_same_geometry, circular_mean, wrap_phase

MIN_BACKGROUND_PX = 100
DEFAULT_BAND_PX = 2
# transverse jumps this close to pi are ambiguous after wrapping
JUMP_WARN_RAD = 0.9 * np.pi


class CorrectionError(ValueError):
    pass


class BranchAmbiguityWarning(UserWarning):
    """Aberration changes by nearly pi across a slit; the unwrapped branch may be wrong."""


@dataclass(frozen=True, eq=False)
class AberrationMap:
    """Aberration phase (NaN where unknown) and where it was measured directly."""

    phase: RealGrid
    validity: np.ndarray

    def __post_init__(self):
        validity = np.array(self.validity, dtype=bool)
        if validity.shape != self.phase.shape:
            raise CorrectionError("validity mask and phase map differ in shape")
        validity.flags.writeable = False
        object.__setattr__(self, "validity", validity)


def background_region(geom: SlitGeometry, shape: tuple[int, int]) -> np.ndarray:
    """Pupil minus the slit footprints."""
    return pupil_mask(geom, shape) & (slit_labels(geom, shape) < 0)


def estimate_background_aberration(phase_map: RealGrid, geom: SlitGeometry) -> AberrationMap:
    """Measured phase minus its circular mean over the background, on the background only."""
    shape = phase_map.shape
    region = background_region(geom, shape) & np.isfinite(phase_map.samples)
    if region.sum() < MIN_BACKGROUND_PX:
        raise CorrectionError(f"only {region.sum()} valid background pixels; need {MIN_BACKGROUND_PX}")
    reference = circular_mean(phase_map.samples[region])
    aberration = np.full(shape, np.nan)
    aberration[region] = wrap_phase(phase_map.samples[region] - reference)
    return AberrationMap(RealGrid(aberration, phase_map.pitch_um), region)


def _band_means(phase: np.ndarray, valid: np.ndarray, rows: np.ndarray, cols: slice):
    """Per-column circular mean and mean row position of the valid band pixels."""
    vals = phase[rows, cols]
    ok = valid[rows, cols]
    z = np.where(ok, np.exp(1j * np.where(ok, vals, 0.0)), 0.0).sum(axis=0)
    n = ok.sum(axis=0)
    pos = np.where(ok, rows[:, None], 0).sum(axis=0) / np.maximum(n, 1)
    return np.angle(z), pos, n > 0


def _fill_columns(values: np.ndarray, have: np.ndarray) -> np.ndarray:
    idx = np.arange(values.size)
    return np.interp(idx, idx[have], values[have])


def interpolate_into_rois(
    aberration: AberrationMap, geom: SlitGeometry, band_px: int = DEFAULT_BAND_PX
) -> AberrationMap:
    """Fill every slit footprint by linear interpolation across the slit.

    For each column, the bands of ``band_px`` rows just below and just above
    the slit are circularly averaged; the upper value is unwrapped onto the
    branch nearest the lower one (the aberration is assumed to change by less
    than pi across one slit) and the slit rows are interpolated linearly in
    between. Columns with one band missing use the other band; columns with
    both missing borrow from neighbouring columns.
    """
    if band_px < 1:
        raise CorrectionError("band_px must be >= 1")
    phase = aberration.phase.samples
    valid = aberration.validity
    shape = phase.shape
    out = np.array(phase)
    for k, rect in enumerate(slit_rectangles(geom, shape)):
        cols = slice(rect.col_start, rect.col_stop)
        below = np.arange(max(rect.row_start - band_px, 0), rect.row_start)
        above = np.arange(rect.row_stop, min(rect.row_stop + band_px, shape[0]))
        phi_b, y_b, has_b = _band_means(phase, valid, below, cols)
        phi_t, y_t, has_t = _band_means(phase, valid, above, cols)
        if not has_b.any() or not has_t.any():
            side = "below" if not has_b.any() else "above"
            raise CorrectionError(f"slit {k}: no valid background pixels {side} the slit")

        delta = wrap_phase(phi_t - phi_b)
        both = has_b & has_t
        if both.any() and np.max(np.abs(delta[both])) > JUMP_WARN_RAD:
            warnings.warn(
                f"slit {k}: aberration jumps by {np.max(np.abs(delta[both])):.2f} rad across the slit",
                BranchAmbiguityWarning,
                stacklevel=2,
            )
        phi_t = phi_b + delta
        only_b = has_b & ~has_t
        only_t = has_t & ~has_b
        phi_t = np.where(only_b, phi_b, phi_t)
        phi_b = np.where(only_t, phi_t, phi_b)
        if not (has_b | has_t).all():
            have = has_b | has_t
            # unwrap along the slit so borrowed values stay on one branch
            step = phi_t - phi_b
            unwrapped = np.zeros_like(phi_b)
            unwrapped[have] = np.unwrap(phi_b[have])
            phi_b = _fill_columns(unwrapped, have)
            phi_t = phi_b + _fill_columns(step, have)
            y_b = _fill_columns(y_b, has_b) if has_b.any() else y_b
            y_t = _fill_columns(y_t, has_t) if has_t.any() else y_t
        y_b = np.where(has_b, y_b, rect.row_start - 0.5)
        y_t = np.where(has_t, y_t, rect.row_stop - 0.5)

        rows = np.arange(rect.row_start, rect.row_stop)[:, None]
        frac = (rows - y_b[None, :]) / (y_t - y_b)[None, :]
        out[rect.row_start : rect.row_stop, cols] = wrap_phase(phi_b + frac * (phi_t - phi_b))
    return AberrationMap(RealGrid(out, aberration.phase.pitch_um), valid)


def correct_phase(phase_map: RealGrid, full_map: AberrationMap) -> RealGrid:
    """Subtract the aberration wherever it is known; other pixels pass through."""
    check_same_geometry(phase_map, full_map.phase)
    known = np.isfinite(full_map.phase.samples)
    corrected = np.array(phase_map.samples)
    corrected[known] = wrap_phase(phase_map.samples[known] - full_map.phase.samples[known])
    return RealGrid(corrected, phase_map.pitch_um, kind="phase")


def full_aberration_map(phase_map: RealGrid, geom: SlitGeometry, band_px: int = DEFAULT_BAND_PX) -> AberrationMap:
    return interpolate_into_rois(estimate_background_aberration(phase_map, geom), geom, band_px)
