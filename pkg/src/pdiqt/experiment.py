"""Trials and ensembles: prepare, perturb, record, reconstruct, correct, score."""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from pdiqt.aperture import prepare_grating_field, roi_rectangles, synthesize_background_mask
from pdiqt.config import ExperimentConfig
from pdiqt.correction import BranchAmbiguityWarning, correct_phase, full_aberration_map
from pdiqt.field import ComplexFieldGrid
from pdiqt.psi import extract_state, outside_pupil_region, reconstruct, record_interferograms
from pdiqt.seeding import NOISE, SCREEN, STATE, derive_seed, trial_seed
from pdiqt.states import QuditState, fidelity, haar_random, uniform_amplitude_random
from pdiqt.turbulence import apply_screen, generate_screen


class TrialError(RuntimeError):
    pass


def _coeff_tuple(state: QuditState | None):
    return None if state is None else tuple(complex(z) for z in state.coefficients)


@dataclass(frozen=True, eq=False)
class TrialRecord:
    trial: int
    seed: int
    true_state: QuditState
    screen_seed: int | None = None
    estimated_uncorrected: QuditState | None = None
    estimated_corrected: QuditState | None = None
    fidelity_uncorrected: float = float("nan")
    fidelity_corrected: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def key(self) -> tuple:
        """Value tuple used for equality; floats compare bit-exactly."""
        return (
            self.trial,
            self.seed,
            _coeff_tuple(self.true_state),
            self.screen_seed,
            _coeff_tuple(self.estimated_uncorrected),
            _coeff_tuple(self.estimated_corrected),
            np.float64(self.fidelity_uncorrected).tobytes(),
            None if self.fidelity_corrected is None else np.float64(self.fidelity_corrected).tobytes(),
            self.error,
        )

    def __eq__(self, other):
        if not isinstance(other, TrialRecord):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True)
class EnsembleStats:
    count: int
    mean: float
    std: float
    bin_edges: tuple[float, ...]
    bin_counts: tuple[int, ...]

    @classmethod
    def from_values(cls, values, bins: int = 20) -> EnsembleStats:
        values = np.asarray(values, dtype=np.float64)
        counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
        if values.size == 0:
            mean = std = float("nan")
        else:
            mean, std = float(np.mean(values)), float(np.std(values))
        return cls(int(values.size), mean, std, tuple(float(e) for e in edges), tuple(int(c) for c in counts))

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "bin_edges": list(self.bin_edges),
            "bin_counts": list(self.bin_counts),
        }

    @classmethod
    def from_dict(cls, data: dict) -> EnsembleStats:
        return cls(
            int(data["count"]),
            float(data["mean"]),
            float(data["std"]),
            tuple(float(e) for e in data["bin_edges"]),
            tuple(int(c) for c in data["bin_counts"]),
        )


@dataclass(frozen=True)
class EnsembleResult:
    records: tuple[TrialRecord, ...]
    stats_uncorrected: EnsembleStats
    stats_corrected: EnsembleStats | None

    @property
    def failures(self) -> tuple[TrialRecord, ...]:
        return tuple(r for r in self.records if not r.ok)


def draw_state(config: ExperimentConfig, seed: int) -> QuditState:
    state_seed = derive_seed(seed, STATE)
    if config.state_preset == "haar":
        return haar_random(config.d, state_seed)
    return uniform_amplitude_random(config.d, state_seed)


def prepare_object(config: ExperimentConfig, state: QuditState) -> ComplexFieldGrid:
    mask = synthesize_background_mask(config.geometry, state, config.grid)
    if config.preparation == "grating":
        return prepare_grating_field(mask, config.grating, config.grating_filter_width_px)
    return mask


def run_trial(config: ExperimentConfig, state: QuditState, trial_seed: int, trial_index: int = 0) -> TrialRecord:
    """One acquisition and reconstruction; component errors are re-raised with the trial index."""
    try:
        field = prepare_object(config, state)
        screen_seed = None
        if config.turbulence is not None:
            screen_seed = derive_seed(trial_seed, SCREEN)
            screen = generate_screen(replace(config.turbulence, rng_seed=screen_seed), config.grid)
            field = apply_screen(field, screen)
        frames = record_interferograms(field, config.pdi, config.noise, derive_seed(trial_seed, NOISE))
        rois = roi_rectangles(config.geometry, config.grid)
        zero = outside_pupil_region(config.geometry, config.grid.shape)
        result = reconstruct(frames, config.geometry, rois, zero)
        corrected = None
        if config.correction:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BranchAmbiguityWarning)
                aberration = full_aberration_map(result.phase_map, config.geometry)
            corrected = extract_state(correct_phase(result.phase_map, aberration), result.amplitude_map, rois)
    except Exception as err:
        raise TrialError(f"trial {trial_index}: {type(err).__name__}: {err}") from err
    return TrialRecord(
        trial=trial_index,
        seed=trial_seed,
        true_state=state,
        screen_seed=screen_seed,
        estimated_uncorrected=result.estimated_state,
        estimated_corrected=corrected,
        fidelity_uncorrected=fidelity(result.estimated_state, state),
        fidelity_corrected=None if corrected is None else fidelity(corrected, state),
    )


def run_indexed_trial(config: ExperimentConfig, index: int) -> TrialRecord:
    """Trial ``index`` of the ensemble; failures come back as records carrying the error."""
    seed = trial_seed(config.base_seed, index)
    state = draw_state(config, seed)
    try:
        return run_trial(config, state, seed, index)
    except TrialError as err:
        return TrialRecord(trial=index, seed=seed, true_state=state, error=str(err))


def summarize(records, config: ExperimentConfig) -> tuple[EnsembleStats, EnsembleStats | None]:
    good = [r for r in records if r.ok]
    uncorrected = EnsembleStats.from_values([r.fidelity_uncorrected for r in good], config.histogram_bins)
    corrected = None
    if config.correction:
        corrected = EnsembleStats.from_values([r.fidelity_corrected for r in good], config.histogram_bins)
    return uncorrected, corrected


def run_ensemble(config: ExperimentConfig, workers: int = 1) -> EnsembleResult:
    """All trials of the config, merged by trial index.

    Each trial's randomness depends only on ``(base_seed, index)``, so the
    result does not depend on ``workers`` or on completion order.
    """
    indices = range(config.ensemble_size)
    if workers <= 1:
        records = [run_indexed_trial(config, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_indexed_trial, [config] * len(indices), indices))
    records.sort(key=lambda r: r.trial)
    uncorrected, corrected = summarize(records, config)
    return EnsembleResult(tuple(records), uncorrected, corrected)
