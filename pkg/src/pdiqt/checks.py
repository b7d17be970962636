"""Invariant suite run by ``pdiqt selftest``.

Each check raises ``AssertionError`` with a message on failure and returns a
short detail string on success. Seeds are fixed so a run is reproducible.
"""

from __future__ import annotations

import time
import traceback
import warnings
from dataclasses import dataclass, replace

import numpy as np

from pdiqt import aperture, correction, experiment, field, psi, states, turbulence
from pdiqt.config import ExperimentConfig
from pdiqt.noise import NoiseModel
from pdiqt.seeding import derive_seed

CHECKS: dict[str, callable] = {}


def check(name: str):
    def register(fn):
        CHECKS[name] = fn
        return fn

    return register


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_field(rng, shape, pitch=1.0) -> field.ComplexFieldGrid:
    return field.ComplexFieldGrid(rng.standard_normal(shape) + 1j * rng.standard_normal(shape), pitch)


def dft_oracle(x: np.ndarray) -> np.ndarray:
    """Centered unitary DFT from explicit matrices."""
    out = x
    for axis, n in enumerate(x.shape):
        k = np.arange(n) - n // 2
        mat = np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
        out = np.moveaxis(np.tensordot(mat, np.moveaxis(out, axis, 0), axes=1), 0, axis)
    return out


def _clean_pipeline(state, geom=None, grid=None, screen=None, num_steps=4):
    geom = geom or aperture.SlitGeometry()
    grid = grid or field.GridSpec()
    obj = aperture.synthesize_background_mask(geom, state, grid)
    if screen is not None:
        obj = turbulence.apply_screen(obj, screen)
    frames = psi.record_interferograms(obj, psi.PdiFilterSpec(num_steps_N=num_steps))
    rois = aperture.roi_rectangles(geom, grid)
    return psi.reconstruct(frames, geom, rois), rois


def _corrected_state(result, rois, geom=None):
    geom = geom or aperture.SlitGeometry()
    ab = correction.full_aberration_map(result.phase_map, geom)
    return psi.extract_state(correction.correct_phase(result.phase_map, ab), result.amplitude_map, rois), ab


# --- field-core -------------------------------------------------------------------


@check("field.unitarity")
def _unitarity():
    rng = np.random.default_rng(1)
    worst = 0.0
    for shape in [(2, 2), (8, 16), (64, 64), (512, 512)]:
        f = _random_field(rng, shape)
        p = field.total_power(f)
        worst = max(worst, abs(field.total_power(field.forward_fourier(f)) - p) / p)
    assert worst <= 1e-10, f"relative power change {worst:.2e}"
    return f"max relative power change {worst:.1e}"


@check("field.round_trip")
def _round_trip():
    rng = np.random.default_rng(2)
    worst = 0.0
    for shape in [(4, 6), (32, 32), (512, 512)]:
        f = _random_field(rng, shape)
        back = field.inverse_fourier(field.forward_fourier(f))
        worst = max(worst, np.max(np.abs(back.samples - f.samples)) / np.max(np.abs(f.samples)))
    assert worst <= 1e-12, f"round-trip error {worst:.2e}"
    return f"max relative error {worst:.1e}"


@check("field.linearity")
def _linearity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        f, g = _random_field(rng, (32, 32)), _random_field(rng, (32, 32))
        a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        lhs = field.forward_fourier(f.with_samples(a * f.samples + b * g.samples)).samples
        rhs = a * field.forward_fourier(f).samples + b * field.forward_fourier(g).samples
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    assert worst <= 1e-10, f"linearity error {worst:.2e}"
    return f"max error {worst:.1e}"


@check("field.dft_oracle")
def _dft_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for shape in [(2, 2), (4, 8), (16, 16), (32, 32), (32, 6)]:
        f = _random_field(rng, shape)
        worst = max(worst, np.max(np.abs(field.forward_fourier(f).samples - dft_oracle(f.samples))))
    assert worst <= 1e-10, f"DFT oracle mismatch {worst:.2e}"
    return f"max mismatch {worst:.1e}"


# --- qudit-states -------------------------------------------------------------------


@check("states.global_phase_invariance")
def _global_phase():
    for i in range(50):
        a, b = states.haar_random(6, derive_seed(5, i, 0)), states.haar_random(6, derive_seed(5, i, 1))
        theta = 2 * np.pi * i / 50
        rotated = states.QuditState(a.coefficients * np.exp(1j * theta))
        delta = abs(states.fidelity(rotated, b) - states.fidelity(a, b))
        assert delta <= 1e-15, f"theta={theta}: fidelity changed by {delta:.1e}"
    return "50 pairs"


@check("states.symmetry")
def _symmetry():
    for i in range(50):
        a, b = states.haar_random(6, derive_seed(6, i, 0)), states.haar_random(6, derive_seed(6, i, 1))
        assert abs(states.fidelity(a, b) - states.fidelity(b, a)) <= 1e-15
    return "50 pairs"


@check("states.haar_moments")
def _haar_moments():
    d, n = 6, 4000
    f2 = np.array(
        [
            states.fidelity(states.haar_random(d, derive_seed(7, i, 0)), states.haar_random(d, derive_seed(7, i, 1))) ** 2
            for i in range(n)
        ]
    )
    # F^2 for Haar pairs is Beta(1, d-1): mean 1/d, variance (d-1)/(d^2 (d+1))
    se = np.sqrt((d - 1) / (d**2 * (d + 1)) / n)
    assert abs(f2.mean() - 1 / d) < 4 * se, f"E[F^2] = {f2.mean():.4f}, expected {1 / d:.4f} +- {4 * se:.4f}"
    pops = np.array([np.abs(states.haar_random(d, derive_seed(8, i)).coefficients) ** 2 for i in range(n)])
    se_pop = np.sqrt((d - 1) / (d**2 * (d + 1)) / n)
    assert np.all(np.abs(pops.mean(axis=0) - 1 / d) < 4 * se_pop), f"E|c_k|^2 = {pops.mean(axis=0)}"
    return f"E[F^2] = {f2.mean():.4f} (1/d = {1 / d:.4f})"


# --- aperture-synthesis --------------------------------------------------------------


@check("aperture.postselection_identity")
def _postselection():
    geom, grid = aperture.SlitGeometry(), field.GridSpec()
    footprint = aperture.slit_labels(geom, grid) >= 0
    for i in range(10):
        st = states.haar_random(6, derive_seed(9, i))
        a = aperture.synthesize_slit_mask(geom, st, grid).samples
        b = aperture.synthesize_background_mask(geom, st, grid).samples
        assert np.array_equal(np.where(footprint, b, 0), a), f"state {i}: B restricted to slits differs from A"
    return "10 states"


@check("aperture.roi_phase")
def _roi_phase():
    geom, grid = aperture.SlitGeometry(), field.GridSpec()
    rois = aperture.roi_rectangles(geom, grid)
    worst = 0.0
    for i in range(10):
        st = states.haar_random(6, derive_seed(10, i))
        b = aperture.synthesize_background_mask(geom, st, grid).samples
        for k, roi in enumerate(rois):
            got = field.circular_mean(np.angle(b[roi.slices]))
            worst = max(worst, abs(field.wrap_phase(got - np.angle(st.coefficients[k]))))
    assert worst <= 1e-12, f"ROI phase error {worst:.1e}"
    return f"max error {worst:.1e}"


@check("aperture.pupil_support")
def _pupil_support():
    geom, grid = aperture.SlitGeometry(), field.GridSpec()
    outside = aperture.radius_map(geom, grid) > geom.pupil_radius_R_px + 1
    st = states.haar_random(6, 11)
    b = aperture.synthesize_background_mask(geom, st, grid).samples
    assert not np.any(b[outside]), "energy outside R + 1"
    return "no energy beyond R + 1 px"


@check("aperture.grating_tomography")
def _grating():
    config = ExperimentConfig(preparation="grating", ensemble_size=30)
    result = experiment.run_ensemble(config)
    assert not result.failures, result.failures[0].error
    mean = result.stats_uncorrected.mean
    assert mean >= 0.99, f"mean fidelity {mean:.4f} < 0.99"
    return f"mean fidelity {mean:.4f} over 30 states"


# --- pdi-psi -------------------------------------------------------------------------


@check("psi.exact_identity")
def _psi_identity():
    geom, grid = aperture.SlitGeometry(), field.GridSpec()
    st = states.haar_random(6, 12)
    obj = aperture.synthesize_background_mask(geom, st, grid)
    N = 4
    frames = psi.record_interferograms(obj, psi.PdiFilterSpec(num_steps_N=N))
    C, S = psi.accumulate_cs(frames)
    K = np.mean(obj.samples)
    u, phi = np.abs(obj.samples), np.angle(obj.samples)
    mu = -np.angle(K)
    C0 = -N * abs(K) ** 2
    scale = N * abs(K) * u.max()
    err_c = np.max(np.abs(C.samples - C0 - N * abs(K) * u * np.cos(phi + mu))) / scale
    err_s = np.max(np.abs(S.samples - N * abs(K) * u * np.sin(phi + mu))) / scale
    assert max(err_c, err_s) <= 1e-9, f"C/S identity error {max(err_c, err_s):.1e}"
    return f"max relative error {max(err_c, err_s):.1e}"


@check("psi.n_robustness")
def _n_robust():
    st = states.haar_random(6, 13)
    r4, _ = _clean_pipeline(st, num_steps=4)
    r8, _ = _clean_pipeline(st, num_steps=8)
    pupil = aperture.pupil_mask(aperture.SlitGeometry(), field.GridSpec())
    diff = np.abs(field.wrap_phase(r4.phase_map.samples[pupil] - r8.phase_map.samples[pupil]))
    assert np.nanmax(diff) < 1e-6, f"N=4 vs N=8 differ by {np.nanmax(diff):.1e} rad"
    return f"max difference {np.nanmax(diff):.1e} rad"


@check("psi.gauge_covariance")
def _gauge():
    st = states.haar_random(6, 14)
    base, _ = _clean_pipeline(st)
    for theta in (0.3, 1.7, -2.9):
        rotated = states.QuditState(st.coefficients * np.exp(1j * theta))
        res, _ = _clean_pipeline(rotated)
        f = states.fidelity(res.estimated_state, base.estimated_state)
        assert f >= 1 - 1e-9, f"theta={theta}: fidelity {f}"
    return "3 global phases"


@check("psi.positivity_and_branch")
def _positivity():
    geom, grid = aperture.SlitGeometry(), field.GridSpec()
    st = states.haar_random(6, 15)
    obj = aperture.synthesize_background_mask(geom, st, grid)
    frames = psi.record_interferograms(obj)
    assert np.all(frames.frames >= 0), "negative intensity"
    res = psi.reconstruct(frames, geom, aperture.roi_rectangles(geom, grid))
    ph = res.phase_map.samples
    finite = ph[np.isfinite(ph)]
    assert np.all((finite > -np.pi) & (finite <= np.pi)), "phase outside (-pi, pi]"
    for k, rect in enumerate(aperture.slit_rectangles(geom, grid)):
        inner = ph[rect.slices]
        jumps = max(np.max(np.abs(np.diff(inner, axis=0)), initial=0), np.max(np.abs(np.diff(inner, axis=1)), initial=0))
        assert jumps < 1e-6, f"slit {k}: phase jumps by {jumps:.2e} inside the slit"
    return "frames non-negative, no branch jumps inside slits"


# --- turbulence ----------------------------------------------------------------------


def _screens(method, count, seed):
    return [
        turbulence.generate_screen(turbulence.ScreenGenSpec(method=method, rng_seed=derive_seed(seed, i)))
        for i in range(count)
    ]


@check("turbulence.structure_function")
def _structure():
    pitch_m = field.GridSpec().pitch_um * 1e-6
    r0 = turbulence.ScreenGenSpec().r0_m
    r0_px = r0 / pitch_m
    seps = np.unique(np.round(np.geomspace(1, 2 * r0_px, 16)).astype(int))
    spectral = _screens("spectral-fft", 100, 16)
    est = turbulence.structure_function(spectral, seps)
    inside = est.separations_m <= r0 * (1 + 1e-9)
    assert np.all(np.diff(est.D_values[inside]) >= 0), "D not non-decreasing up to r0"
    means = np.array([s.phase.samples.mean() for s in spectral])
    se = means.std(ddof=1) / np.sqrt(means.size)
    assert abs(means.mean()) <= 3 * se + 1e-12, f"mean phase {means.mean():.3g} vs 3 SE {3 * se:.3g}"
    modes = turbulence.structure_function(_screens("decaying-modes", 100, 17), seps)
    band = (est.separations_m >= 0.2 * r0) & (est.separations_m <= 2 * r0)
    rel = np.max(np.abs(modes.D_values[band] / est.D_values[band] - 1))
    assert rel <= 0.25, f"methods differ by {rel:.0%}"
    return f"monotone to r0; methods agree within {rel:.0%}"


@check("turbulence.power_conservation")
def _screen_power():
    rng = np.random.default_rng(18)
    f = _random_field(rng, (512, 512), field.DEFAULT_PITCH_UM)
    scr = turbulence.generate_screen(turbulence.ScreenGenSpec(rng_seed=18))
    p0 = field.total_power(f)
    rel = abs(field.total_power(turbulence.apply_screen(f, scr)) - p0) / p0
    assert rel <= 1e-12, f"power changed by {rel:.1e}"
    return f"relative change {rel:.1e}"


# --- aberration-correction -----------------------------------------------------------


@check("correction.idempotence")
def _idempotence():
    st = states.haar_random(6, 19)
    res, rois = _clean_pipeline(st)
    ab = correction.full_aberration_map(res.phase_map, aperture.SlitGeometry())
    corrected = correction.correct_phase(res.phase_map, ab)
    worst = 0.0
    for roi in rois:
        a = field.circular_mean(res.phase_map.samples[roi.slices])
        b = field.circular_mean(corrected.samples[roi.slices])
        worst = max(worst, abs(field.wrap_phase(a - b)))
    assert worst < 1e-6, f"per-slit phase changed by {worst:.1e}"
    return f"max change {worst:.1e} rad"


@check("correction.tilt_exactness")
def _tilt():
    grid = field.GridSpec()
    rng = np.random.default_rng(20)
    worst = 1.0
    for i in range(10):
        tx, ty = rng.uniform(-0.05, 0.05, 2)
        screen = turbulence.affine_screen(grid, tx, ty, rng.uniform(-np.pi, np.pi))
        st = states.haar_random(6, derive_seed(20, i))
        res, rois = _clean_pipeline(st, screen=screen)
        fixed, _ = _corrected_state(res, rois)
        worst = min(worst, states.fidelity(fixed, st))
    assert worst >= 1 - 1e-6, f"worst corrected fidelity {worst}"
    return f"worst fidelity {worst:.9f}"


@check("correction.information_barrier")
def _barrier():
    geom, grid = aperture.SlitGeometry(), field.GridSpec()
    st = states.haar_random(6, 21)
    screen = turbulence.generate_screen(turbulence.ScreenGenSpec(rng_seed=21))
    res, _ = _clean_pipeline(st, screen=screen)
    footprint = aperture.slit_labels(geom, grid) >= 0
    scrambled = np.array(res.phase_map.samples)
    scrambled[footprint] = np.random.default_rng(21).uniform(-np.pi, np.pi, footprint.sum())
    a = correction.full_aberration_map(res.phase_map, geom).phase.samples
    b = correction.full_aberration_map(field.RealGrid(scrambled, res.phase_map.pitch_um, kind="phase"), geom).phase.samples
    assert np.array_equal(a, b, equal_nan=True), "aberration map depends on slit-interior phases"
    return "map unchanged when slit interiors are scrambled"


@check("correction.monotone_benefit")
def _benefit():
    config = ExperimentConfig(turbulence=turbulence.ScreenGenSpec(), correction=True, ensemble_size=100)
    result = experiment.run_ensemble(config)
    assert not result.failures, result.failures[0].error
    uc, c = result.stats_uncorrected.mean, result.stats_corrected.mean
    assert c > uc, f"corrected mean {c:.4f} <= uncorrected {uc:.4f}"
    return f"uncorrected {uc:.3f}, corrected {c:.3f}"


# --- experiment-harness --------------------------------------------------------------


@check("harness.determinism")
def _determinism():
    config = ExperimentConfig(turbulence=turbulence.ScreenGenSpec(), correction=True, ensemble_size=8,
                              noise=NoiseModel(), base_seed=22)
    serial = experiment.run_ensemble(config, workers=1).records
    parallel = experiment.run_ensemble(config, workers=8).records
    assert serial == parallel, "records depend on the worker count"
    return "1 and 8 workers give identical records"


@check("harness.separation_of_concerns")
def _separation():
    config = ExperimentConfig(turbulence=turbulence.ScreenGenSpec(), correction=True, ensemble_size=6, base_seed=23)
    on = experiment.run_ensemble(config).records
    off = experiment.run_ensemble(replace(config, correction=False)).records
    a = [r.fidelity_uncorrected for r in on]
    b = [r.fidelity_uncorrected for r in off]
    assert a == b, "toggling correction changed uncorrected fidelities"
    return "uncorrected fidelities identical"


@check("harness.stats")
def _stats():
    rng = np.random.default_rng(24)
    values = rng.uniform(0.5, 1.0, 137)
    stats = experiment.EnsembleStats.from_values(values, 20)
    mean = sum(values) / len(values)
    std = np.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    assert abs(stats.mean - mean) <= 1e-12 and abs(stats.std - std) <= 1e-12, "stats mismatch"
    assert stats.count == sum(stats.bin_counts)
    return "two-pass agreement"


@check("harness.noise_monotonicity")
def _noise():
    base = ExperimentConfig(ensemble_size=50, base_seed=25)
    low = experiment.run_ensemble(replace(base, noise=NoiseModel(photon_budget=1e4))).stats_uncorrected.mean
    high = experiment.run_ensemble(replace(base, noise=NoiseModel(photon_budget=1e8))).stats_uncorrected.mean
    assert low <= high, f"budget 1e4 gives {low:.4f} > budget 1e8 {high:.4f}"
    return f"1e4: {low:.4f}, 1e8: {high:.4f}"


def run_selftest(selected: list[str] | None = None) -> list[CheckResult]:
    names = list(CHECKS) if not selected else selected
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}")
    results = []
    for name in names:
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", correction.BranchAmbiguityWarning)
                detail = CHECKS[name]()
            passed = True
        except AssertionError as err:
            detail, passed = str(err), False
        except Exception:
            detail, passed = traceback.format_exc(limit=3), False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
