import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdiqt.aperture import (
    SlitGeometry,
    pupil_mask,
    roi_rectangles,
    slit_labels,
    slit_rectangles,
    synthesize_background_mask,
)
from pdiqt.correction import (
    AberrationMap,
    BranchAmbiguityWarning,
    CorrectionError,
    background_region,
    correct_phase,
    estimate_background_aberration,
    full_aberration_map,
    interpolate_into_rois,
)
from pdiqt.field import GridError, GridSpec, RealGrid, circular_mean, wrap_phase
from pdiqt.psi import extract_state, reconstruct, record_interferograms
from pdiqt.seeding import derive_seed
from pdiqt.states import fidelity, haar_random
from pdiqt.turbulence import PhaseScreen, ScreenGenSpec, affine_screen, apply_screen, generate_screen

GEOM, GRID = SlitGeometry(), GridSpec()
ROIS = roi_rectangles(GEOM, GRID)
FOOTPRINT = slit_labels(GEOM, GRID) >= 0
BACKGROUND = background_region(GEOM, GRID.shape)


def measure(state, screen=None):
    obj = synthesize_background_mask(GEOM, state, GRID)
    if screen is not None:
        obj = apply_screen(obj, screen)
    return reconstruct(record_interferograms(obj), GEOM, ROIS)


def phase_grid(values):
    return RealGrid(wrap_phase(np.asarray(values, dtype=float)), GRID.pitch_um, kind="phase")


def screen_relative_to_background(screen):
    """True aberration in the gauge the estimate uses: screen minus its background circular mean."""
    s = screen.phase.samples
    return wrap_phase(s - circular_mean(s[BACKGROUND]))


class TestEstimate:
    def test_clean_input_gives_zero(self):
        ab = estimate_background_aberration(measure(haar_random(6, 1)).phase_map, GEOM)
        assert np.max(np.abs(ab.phase.samples[ab.validity])) < 1e-6

    def test_constant_screen_absorbed(self):
        screen = PhaseScreen(RealGrid(np.full(GRID.shape, 1.234), 43.0), np.inf)
        ab = estimate_background_aberration(measure(haar_random(6, 2), screen).phase_map, GEOM)
        assert np.max(np.abs(ab.phase.samples[ab.validity])) < 1e-6

    def test_known_screen_recovered(self):
        screen = generate_screen(ScreenGenSpec(rng_seed=3))
        ab = estimate_background_aberration(measure(haar_random(6, 3), screen).phase_map, GEOM)
        err = wrap_phase(ab.phase.samples[ab.validity] - screen_relative_to_background(screen)[ab.validity])
        assert np.sqrt(np.mean(err**2)) < 1e-3

    def test_validity_is_background(self):
        ab = estimate_background_aberration(measure(haar_random(6, 4)).phase_map, GEOM)
        assert np.array_equal(ab.validity, BACKGROUND)
        assert np.all(np.isnan(ab.phase.samples[~ab.validity]))

    def test_small_background_rejected(self):
        ph = np.full(GRID.shape, np.nan)
        ph[BACKGROUND.nonzero()[0][:99], BACKGROUND.nonzero()[1][:99]] = 0.0
        with pytest.raises(CorrectionError, match="100"):
            estimate_background_aberration(RealGrid(ph, 43.0, kind="phase"), GEOM)


class TestInterpolate:
    @given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(-np.pi, np.pi))
    def test_affine_is_exact(self, tx, ty, c):
        truth = affine_screen(GRID, tx, ty, c).phase.samples
        ab = estimate_background_aberration(phase_grid(truth), GEOM)
        full = interpolate_into_rois(ab, GEOM)
        ref = circular_mean(wrap_phase(truth[BACKGROUND]))
        err = wrap_phase(full.phase.samples[FOOTPRINT] - (truth[FOOTPRINT] - ref))
        assert np.max(np.abs(err)) < 1e-9

    def test_zero_stays_zero(self):
        ab = estimate_background_aberration(phase_grid(np.zeros(GRID.shape)), GEOM)
        full = interpolate_into_rois(ab, GEOM)
        assert np.max(np.abs(full.phase.samples[FOOTPRINT])) == 0

    def test_validity_unchanged_and_pupil_filled(self):
        ab = estimate_background_aberration(phase_grid(np.zeros(GRID.shape)), GEOM)
        full = interpolate_into_rois(ab, GEOM)
        assert np.array_equal(full.validity, ab.validity)
        assert np.all(np.isfinite(full.phase.samples[pupil_mask(GEOM, GRID)]))
        assert np.all(np.isnan(full.phase.samples[~pupil_mask(GEOM, GRID)]))

    def test_missing_side_rejected_with_index(self):
        ph = np.zeros(GRID.shape)
        rect = slit_rectangles(GEOM, GRID)[0]
        ph[rect.row_start - 2 : rect.row_start, :] = np.nan
        ab = estimate_background_aberration(RealGrid(ph, 43.0, kind="phase"), GEOM)
        with pytest.raises(CorrectionError, match="slit 0.*below"):
            interpolate_into_rois(ab, GEOM)

    def test_one_sided_columns_fall_back(self):
        truth = affine_screen(GRID, 0.02, 0.0).phase.samples
        ph = wrap_phase(truth)
        rect = slit_rectangles(GEOM, GRID)[5]
        ph[rect.row_stop : rect.row_stop + 2, rect.col_start : rect.col_start + 10] = np.nan
        full = full_aberration_map(RealGrid(ph, 43.0, kind="phase"), GEOM)
        ref = circular_mean(ph[BACKGROUND & np.isfinite(ph)])
        err = wrap_phase(full.phase.samples[rect.slices] - (truth[rect.slices] - ref))
        # pure x tilt: one-sided columns are still exact
        assert np.max(np.abs(err)) < 1e-9

    def test_empty_columns_borrow_neighbours(self):
        truth = affine_screen(GRID, 0.02, 0.0).phase.samples
        ph = wrap_phase(truth)
        rect = slit_rectangles(GEOM, GRID)[2]
        cols = slice(rect.col_start + 50, rect.col_start + 55)
        ph[rect.row_start - 2 : rect.row_start, cols] = np.nan
        ph[rect.row_stop : rect.row_stop + 2, cols] = np.nan
        full = full_aberration_map(RealGrid(ph, 43.0, kind="phase"), GEOM)
        ref = circular_mean(ph[BACKGROUND & np.isfinite(ph)])
        err = wrap_phase(full.phase.samples[rect.row_start : rect.row_stop, cols] - (truth[rect.row_start : rect.row_stop, cols] - ref))
        assert np.max(np.abs(err)) < 1e-9

    def test_large_transverse_jump_flagged(self):
        truth = affine_screen(GRID, 0.0, 0.95 * np.pi / 6).phase.samples
        ab = estimate_background_aberration(phase_grid(truth), GEOM)
        with pytest.warns(BranchAmbiguityWarning):
            interpolate_into_rois(ab, GEOM)

    def test_band_width_validated(self):
        ab = estimate_background_aberration(phase_grid(np.zeros(GRID.shape)), GEOM)
        with pytest.raises(CorrectionError):
            interpolate_into_rois(ab, GEOM, band_px=0)

    def test_never_reads_slit_interior(self):
        screen = generate_screen(ScreenGenSpec(rng_seed=5)).phase.samples
        a = wrap_phase(screen)
        b = a.copy()
        b[FOOTPRINT] = np.random.default_rng(5).uniform(-np.pi, np.pi, FOOTPRINT.sum())
        ma = full_aberration_map(RealGrid(a, 43.0, kind="phase"), GEOM).phase.samples
        mb = full_aberration_map(RealGrid(b, 43.0, kind="phase"), GEOM).phase.samples
        assert np.array_equal(ma, mb, equal_nan=True)

    def test_kolmogorov_interpolation_error(self):
        errors = []
        roi_mask = np.zeros(GRID.shape, dtype=bool)
        for r in ROIS:
            roi_mask[r.slices] = True
        for i in range(100):
            screen = generate_screen(ScreenGenSpec(rng_seed=derive_seed(401, i)))
            truth = screen_relative_to_background(screen)
            # on the background a noiseless reconstruction equals the wrapped screen, up to piston
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BranchAmbiguityWarning)
                full = full_aberration_map(phase_grid(screen.phase.samples), GEOM)
            errors.append(wrap_phase(full.phase.samples[roi_mask] - truth[roi_mask]))
        rms = np.sqrt(np.mean(np.concatenate(errors) ** 2))
        assert rms < 0.15


class TestCorrect:
    def test_zero_aberration_identity(self):
        res = measure(haar_random(6, 6))
        full = full_aberration_map(res.phase_map, GEOM)
        out = correct_phase(res.phase_map, full).samples
        inside = np.isfinite(res.phase_map.samples)
        assert np.max(np.abs(wrap_phase(out[inside] - res.phase_map.samples[inside]))) < 1e-6

    def test_geometry_mismatch(self):
        ab = AberrationMap(RealGrid(np.zeros((8, 8)), 1.0), np.ones((8, 8), bool))
        with pytest.raises(GridError):
            correct_phase(RealGrid(np.zeros((8, 10)), 1.0, kind="phase"), ab)

    def test_outside_pupil_untouched(self):
        screen = affine_screen(GRID, 0.01, 0.02)
        res = measure(haar_random(6, 7), screen)
        out = correct_phase(res.phase_map, full_aberration_map(res.phase_map, GEOM)).samples
        outside = ~pupil_mask(GEOM, GRID)
        assert np.array_equal(out[outside], res.phase_map.samples[outside], equal_nan=True)

    def test_output_range(self):
        res = measure(haar_random(6, 8), generate_screen(ScreenGenSpec(rng_seed=8)))
        out = correct_phase(res.phase_map, full_aberration_map(res.phase_map, GEOM)).samples
        finite = out[np.isfinite(out)]
        assert np.all((finite > -np.pi) & (finite <= np.pi))

    @settings(max_examples=8)
    @given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(-np.pi, np.pi), st.integers(0, 2**63 - 1))
    def test_tilt_screens_fully_corrected(self, tx, ty, c, seed):
        s = haar_random(6, seed)
        res = measure(s, affine_screen(GRID, tx, ty, c))
        fixed = extract_state(correct_phase(res.phase_map, full_aberration_map(res.phase_map, GEOM)), res.amplitude_map, ROIS)
        assert fidelity(fixed, s) >= 1 - 1e-6

    def test_idempotent_on_clean_input(self):
        res = measure(haar_random(6, 9))
        out = correct_phase(res.phase_map, full_aberration_map(res.phase_map, GEOM)).samples
        for r in ROIS:
            before = circular_mean(res.phase_map.samples[r.slices])
            after = circular_mean(out[r.slices])
            assert abs(wrap_phase(after - before)) < 1e-6

    def test_turbulent_state_improves(self):
        s = haar_random(6, 10)
        res = measure(s, generate_screen(ScreenGenSpec(rng_seed=10)))
        fixed = extract_state(correct_phase(res.phase_map, full_aberration_map(res.phase_map, GEOM)), res.amplitude_map, ROIS)
        assert fidelity(fixed, s) > fidelity(res.estimated_state, s)
