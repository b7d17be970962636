"""Slit apertures, the background-augmented aperture, ROIs and blazed-grating encoding.

Slits are long along x (columns) and narrow along y (rows). Slit ``k`` occupies
rows ``y_start + k*s ... y_start + k*s + a - 1``, so the index grows with the
row index; slit 0 is the one with the smallest row index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from pdiqt.field import (
    ComplexFieldGrid,
    GridSpec,
    RealGrid,
    centered_coordinates,
    forward_fourier,
    inverse_fourier,
    wrap_phase,
)
from pdiqt.states import QuditState


class ApertureError(ValueError):
    pass


@dataclass(frozen=True)
class SlitGeometry:
    """Slit array plus circular background pupil.

    ``slit_length_L_px=None`` picks the shortest allowed length, ``5 * d * s``.
    ``center_offset_px`` is the ``(x, y)`` shift of the array and pupil center
    from the grid center.
    """

    d: int = 6
    slit_width_a_px: int = 4
    slit_separation_s_px: int = 6
    slit_length_L_px: int | None = None
    pupil_radius_R_px: float = 96.0
    center_offset_px: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.slit_length_L_px is None:
            object.__setattr__(self, "slit_length_L_px", 5 * self.d * self.slit_separation_s_px)
        object.__setattr__(self, "center_offset_px", tuple(int(v) for v in self.center_offset_px))
        if self.d < 2:
            raise ApertureError(f"need at least 2 slits, got d={self.d}")
        if self.slit_width_a_px < 1:
            raise ApertureError("slit width must be >= 1 px")
        if self.slit_separation_s_px <= self.slit_width_a_px:
            raise ApertureError(
                f"slits overlap: separation {self.slit_separation_s_px} <= width {self.slit_width_a_px}"
            )
        if self.slit_length_L_px < 5 * self.d * self.slit_separation_s_px:
            raise ApertureError(
                f"slit length {self.slit_length_L_px} px is below 5*d*s = {5 * self.d * self.slit_separation_s_px}"
            )
        if not self.pupil_radius_R_px > 0:
            raise ApertureError("pupil radius must be positive")
        if self._farthest_slit_pixel() >= self.pupil_radius_R_px:
            raise ApertureError(
                f"slit array (corner at {self._farthest_slit_pixel():.1f} px) does not fit in pupil R={self.pupil_radius_R_px}"
            )

    @property
    def span_px(self) -> int:
        """Extent of the slit array across the slits."""
        return (self.d - 1) * self.slit_separation_s_px + self.slit_width_a_px

    def slit_rows(self, k: int) -> tuple[int, int]:
        """Half-open row range of slit ``k`` in array-centered coordinates."""
        start = -(self.span_px // 2) + k * self.slit_separation_s_px
        return start, start + self.slit_width_a_px

    def slit_cols(self) -> tuple[int, int]:
        start = -(self.slit_length_L_px // 2)
        return start, start + self.slit_length_L_px

    def _farthest_slit_pixel(self) -> float:
        y0, _ = self.slit_rows(0)
        _, y1 = self.slit_rows(self.d - 1)
        x0, x1 = self.slit_cols()
        ys = np.array([y0, y1 - 1], dtype=float)
        xs = np.array([x0, x1 - 1], dtype=float)
        return float(np.sqrt(np.max(ys**2) + np.max(xs**2)))

    def center_index(self, shape: tuple[int, int]) -> tuple[int, int]:
        """(row, col) of the array center on a grid of the given shape."""
        height, width = shape
        return height // 2 + self.center_offset_px[1], width // 2 + self.center_offset_px[0]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "slit_width_a_px": self.slit_width_a_px,
            "slit_separation_s_px": self.slit_separation_s_px,
            "slit_length_L_px": self.slit_length_L_px,
            "pupil_radius_R_px": self.pupil_radius_R_px,
            "center_offset_px": list(self.center_offset_px),
        }

    @classmethod
    def from_dict(cls, data: dict) -> SlitGeometry:
        data = dict(data)
        if "center_offset_px" in data:
            data["center_offset_px"] = tuple(data["center_offset_px"])
        return cls(**data)


@dataclass(frozen=True)
class Roi:
    """Half-open pixel rectangle ``[row_start, row_stop) x [col_start, col_stop)``."""

    row_start: int
    row_stop: int
    col_start: int
    col_stop: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.row_start, self.row_stop), slice(self.col_start, self.col_stop)

    @property
    def height(self) -> int:
        return self.row_stop - self.row_start

    @property
    def width(self) -> int:
        return self.col_stop - self.col_start

    @property
    def center(self) -> tuple[float, float]:
        return (self.row_start + self.row_stop - 1) / 2, (self.col_start + self.col_stop - 1) / 2


@dataclass(frozen=True)
class RoiSet:
    rois: tuple[Roi, ...]

    def __len__(self):
        return len(self.rois)

    def __iter__(self):
        return iter(self.rois)

    def __getitem__(self, k):
        return self.rois[k]


def _shape_of(grid_spec) -> tuple[int, int]:
    if isinstance(grid_spec, GridSpec):
        return grid_spec.shape
    return tuple(grid_spec)


def _pitch_of(grid_spec) -> float:
    return grid_spec.pitch_um if isinstance(grid_spec, GridSpec) else GridSpec().pitch_um


def slit_rectangles(geom: SlitGeometry, grid_spec) -> list[Roi]:
    """Slit footprints as absolute pixel rectangles; raises if any falls off the grid."""
    shape = _shape_of(grid_spec)
    cy, cx = geom.center_index(shape)
    c0, c1 = geom.slit_cols()
    rects = []
    for k in range(geom.d):
        r0, r1 = geom.slit_rows(k)
        rect = Roi(cy + r0, cy + r1, cx + c0, cx + c1)
        if rect.row_start < 0 or rect.col_start < 0 or rect.row_stop > shape[0] or rect.col_stop > shape[1]:
            raise ApertureError(f"slit {k} does not fit on the {shape[1]}x{shape[0]} grid")
        rects.append(rect)
    return rects


def slit_labels(geom: SlitGeometry, grid_spec) -> np.ndarray:
    """Integer map: ``k`` inside slit ``k``, -1 elsewhere."""
    labels = np.full(_shape_of(grid_spec), -1, dtype=np.int64)
    for k, rect in enumerate(slit_rectangles(geom, grid_spec)):
        labels[rect.slices] = k
    return labels


def radius_map(geom: SlitGeometry, grid_spec) -> np.ndarray:
    """Distance of every pixel from the pupil center, in pixels."""
    shape = _shape_of(grid_spec)
    y, x = centered_coordinates(shape)
    dx, dy = geom.center_offset_px
    return np.hypot(y - dy, x - dx)


def pupil_mask(geom: SlitGeometry, grid_spec) -> np.ndarray:
    shape = _shape_of(grid_spec)
    cy, cx = geom.center_index(shape)
    R = geom.pupil_radius_R_px
    if cy - R < 0 or cx - R < 0 or cy + R >= shape[0] or cx + R >= shape[1]:
        raise ApertureError(f"pupil of radius {R} px does not fit on the grid")
    return radius_map(geom, grid_spec) < R


def _check_state(geom: SlitGeometry, state: QuditState) -> None:
    if state.d != geom.d:
        raise ApertureError(f"state dimension {state.d} does not match the {geom.d}-slit geometry")


def synthesize_slit_mask(geom: SlitGeometry, state: QuditState, grid_spec=GridSpec()) -> ComplexFieldGrid:
    """Bare slit aperture: ``c_k`` inside slit ``k``, 0 elsewhere."""
    _check_state(geom, state)
    mask = np.zeros(_shape_of(grid_spec), dtype=np.complex128)
    for k, rect in enumerate(slit_rectangles(geom, grid_spec)):
        mask[rect.slices] = state.coefficients[k]
    return ComplexFieldGrid(mask, _pitch_of(grid_spec))


def synthesize_background_mask(geom: SlitGeometry, state: QuditState, grid_spec=GridSpec()) -> ComplexFieldGrid:
    """Slit aperture embedded in a unit-amplitude circular background of radius R."""
    _check_state(geom, state)
    mask = pupil_mask(geom, grid_spec).astype(np.complex128)
    for k, rect in enumerate(slit_rectangles(geom, grid_spec)):
        mask[rect.slices] = state.coefficients[k]
    return ComplexFieldGrid(mask, _pitch_of(grid_spec))


def roi_rectangles(
    geom: SlitGeometry,
    grid_spec=GridSpec(),
    transverse_margin_px: int = 1,
    longitudinal_fraction: float = 0.1,
) -> RoiSet:
    """One readout rectangle per slit, inset from the slit borders."""
    long_margin = int(round(longitudinal_fraction * geom.slit_length_L_px))
    rois = []
    for k, rect in enumerate(slit_rectangles(geom, grid_spec)):
        roi = Roi(
            rect.row_start + transverse_margin_px,
            rect.row_stop - transverse_margin_px,
            rect.col_start + long_margin,
            rect.col_stop - long_margin,
        )
        if roi.height < 1 or roi.width < 1:
            raise ApertureError(f"ROI margins leave nothing of slit {k}")
        rois.append(roi)
    return RoiSet(tuple(rois))


# --- blazed-grating encoding -------------------------------------------------

AmplitudeMap = Literal["sinc", "linear"]


@dataclass(frozen=True)
class GratingEncodingSpec:
    """Sawtooth phase grating used to write a complex mask on a phase-only modulator.

    ``orientation="horizontal"`` ramps the sawtooth along x (columns), i.e.
    along the long axis of the slits. ``amplitude_map="sinc"`` inverts the
    exact first-order efficiency of the sampled sawtooth and compensates its
    depth-dependent phase; ``"linear"`` uses depth fraction = modulus.
    """

    period_p_px: int = 12
    orientation: Literal["horizontal", "vertical"] = "horizontal"
    amplitude_map: AmplitudeMap = "sinc"

    def __post_init__(self):
        if self.period_p_px < 2:
            raise ApertureError(f"grating period must be >= 2 px, got {self.period_p_px}")
        if self.orientation not in ("horizontal", "vertical"):
            raise ApertureError(f"unknown orientation {self.orientation!r}")
        if self.amplitude_map not in ("sinc", "linear"):
            raise ApertureError(f"unknown amplitude map {self.amplitude_map!r}")


def first_order_coefficient(depth, period: int):
    """First diffraction order of a sampled blazed grating of phase depth ``2*pi*depth``.

    For pixel levels ``2*pi*depth*j/p``, ``j = 0..p-1``, the order-1 coefficient
    is ``(1/p) sum_j exp(2i*pi*(depth-1)*j/p)``.
    """
    depth = np.asarray(depth, dtype=np.float64)
    j = np.arange(period)
    return np.mean(np.exp(2j * np.pi * (depth[..., None] - 1.0) * j / period), axis=-1)


@dataclass(frozen=True)
class _EfficiencyTable:
    depth: np.ndarray
    modulus: np.ndarray
    phase: np.ndarray


def _efficiency_table(period: int, samples: int = 8193) -> _EfficiencyTable:
    depth = np.linspace(0.0, 1.0, samples)
    c1 = first_order_coefficient(depth, period)
    modulus = np.abs(c1)
    if np.any(np.diff(modulus) <= 0):
        raise ApertureError(f"first-order efficiency is not monotonic for period {period}")
    return _EfficiencyTable(depth, modulus, np.angle(c1))


def blaze_depth(modulus, spec: GratingEncodingSpec) -> tuple[np.ndarray, np.ndarray]:
    """Depth fraction in [0, 1] realizing ``modulus``, and the phase the grating adds at that depth."""
    modulus = np.asarray(modulus, dtype=np.float64)
    if spec.amplitude_map == "linear":
        return modulus.copy(), np.zeros_like(modulus)
    table = _efficiency_table(spec.period_p_px)
    depth = np.interp(modulus, table.modulus, table.depth)
    return depth, np.interp(depth, table.depth, table.phase)


def phase_shift_steps(phase, period: int) -> np.ndarray:
    """Sawtooth displacement (pixels, ``0..p-1``) closest to the requested phase."""
    k = np.rint(np.mod(np.asarray(phase, dtype=np.float64), 2 * np.pi) * period / (2 * np.pi))
    return np.mod(k, period).astype(np.int64)


def _ramp_index(shape: tuple[int, int], orientation: str) -> np.ndarray:
    rows, cols = np.indices(shape)
    return cols if orientation == "horizontal" else rows


def encode_blazed_grating(mask: ComplexFieldGrid, spec: GratingEncodingSpec = GratingEncodingSpec()) -> RealGrid:
    """Phase-only pattern (radians in [0, 2*pi)) whose first order reproduces ``mask``."""
    modulus = np.abs(mask.samples)
    if np.any(modulus > 1 + 1e-12):
        raise ApertureError(f"mask modulus must be <= 1, max is {modulus.max()!r}")
    modulus = np.minimum(modulus, 1.0)
    depth, grating_phase = blaze_depth(modulus, spec)
    target = np.where(modulus > 0, np.angle(mask.samples), 0.0) - grating_phase
    k = phase_shift_steps(target, spec.period_p_px)
    j = _ramp_index(mask.shape, spec.orientation)
    sawtooth = np.mod(j + k, spec.period_p_px) / spec.period_p_px
    return RealGrid(2 * np.pi * depth * sawtooth, mask.pitch_um)


def default_filter_width(shape: tuple[int, int], spec: GratingEncodingSpec) -> int:
    """Window width of 9/8 of the diffraction-order spacing (48 bins for 512 px, p = 12).

    Picked from a sweep of background ripple and zero-order leakage against width.
    """
    n = shape[1] if spec.orientation == "horizontal" else shape[0]
    return int(round(1.125 * n / spec.period_p_px))


def first_order_window(shape: tuple[int, int], spec: GratingEncodingSpec, filter_width_px: int) -> np.ndarray:
    """Boolean Fourier-plane window: a strip of the given width centered on order +1."""
    height, width = shape
    n = width if spec.orientation == "horizontal" else height
    order_bin = n / spec.period_p_px
    half = filter_width_px / 2
    if filter_width_px < 1 or order_bin + half > n / 2:
        raise ApertureError(f"filter window of width {filter_width_px} bins falls off the Fourier plane")
    fy, fx = centered_coordinates(shape)
    u = fx if spec.orientation == "horizontal" else fy
    window = np.abs(u - order_bin) <= half
    return np.broadcast_to(window, shape)


def simulate_preparation(
    phase_pattern: RealGrid,
    spec: GratingEncodingSpec = GratingEncodingSpec(),
    filter_width_px: int | None = None,
) -> ComplexFieldGrid:
    """Field that reaches the object image after the first-order spatial filter.

    The filtered field is demodulated by the grating carrier, which is what
    centering the filter on the optical axis of the second lens amounts to.
    """
    shape = phase_pattern.shape
    if filter_width_px is None:
        filter_width_px = default_filter_width(shape, spec)
    window = first_order_window(shape, spec, filter_width_px)
    slm = ComplexFieldGrid(np.exp(1j * phase_pattern.samples), phase_pattern.pitch_um)
    spectrum = forward_fourier(slm)
    filtered = inverse_fourier(spectrum.with_samples(np.where(window, spectrum.samples, 0)))
    j = _ramp_index(shape, spec.orientation)
    carrier = np.exp(-2j * np.pi * j / spec.period_p_px)
    return filtered.with_samples(filtered.samples * carrier)


def prepare_grating_field(
    mask: ComplexFieldGrid,
    spec: GratingEncodingSpec = GratingEncodingSpec(),
    filter_width_px: int | None = None,
) -> ComplexFieldGrid:
    return simulate_preparation(encode_blazed_grating(mask, spec), spec, filter_width_px)


def quantized_phase(phase, period: int) -> np.ndarray:
    """Phase actually realized by the nearest sawtooth displacement."""
    return wrap_phase(2 * np.pi * phase_shift_steps(phase, period) / period)
