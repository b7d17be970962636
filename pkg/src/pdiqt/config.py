"""Experiment configuration as one JSON-compatible document."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Literal

from pdiqt.aperture import ApertureError, GratingEncodingSpec, SlitGeometry, pupil_mask, slit_rectangles
from pdiqt.field import GridSpec
from pdiqt.noise import NoiseModel
from pdiqt.psi import PdiFilterSpec
from pdiqt.turbulence import ScreenGenSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict(data)
        return cls(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an ensemble.

    ``turbulence=None`` and ``noise=None`` switch those stages off. The screen
    spec's ``rng_seed`` is ignored by the harness, which derives one per trial.
    """

    grid: GridSpec = field(default_factory=GridSpec)
    geometry: SlitGeometry = field(default_factory=SlitGeometry)
    pdi: PdiFilterSpec = field(default_factory=PdiFilterSpec)
    preparation: Literal["ideal", "grating"] = "ideal"
    grating: GratingEncodingSpec = field(default_factory=GratingEncodingSpec)
    grating_filter_width_px: int | None = None
    turbulence: ScreenGenSpec | None = None
    correction: bool = False
    noise: NoiseModel | None = None
    ensemble_size: int = 100
    d: int = 6
    base_seed: int = 0
    state_preset: Literal["haar", "uniform_amplitude"] = "haar"
    histogram_bins: int = 20
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.preparation not in ("ideal", "grating"):
            raise ConfigError(f"unknown preparation {self.preparation!r}")
        if self.state_preset not in ("haar", "uniform_amplitude"):
            raise ConfigError(f"unknown state preset {self.state_preset!r}")
        if self.d != self.geometry.d:
            raise ConfigError(f"state dimension d={self.d} differs from geometry d={self.geometry.d}")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        try:
            slit_rectangles(self.geometry, self.grid)
            pupil_mask(self.geometry, self.grid)
        except ApertureError as err:
            raise ConfigError(f"geometry does not fit the grid: {err}") from err

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "grid": asdict(self.grid),
            "geometry": self.geometry.to_dict(),
            "pdi": self.pdi.to_dict(),
            "preparation": self.preparation,
            "grating": asdict(self.grating),
            "grating_filter_width_px": self.grating_filter_width_px,
            "turbulence": None if self.turbulence is None else asdict(self.turbulence),
            "correction": self.correction,
            "noise": None if self.noise is None else asdict(self.noise),
            "ensemble_size": self.ensemble_size,
            "d": self.d,
            "base_seed": self.base_seed,
            "state_preset": self.state_preset,
            "histogram_bins": self.histogram_bins,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        nested = {
            "grid": GridSpec,
            "geometry": SlitGeometry,
            "pdi": PdiFilterSpec,
            "grating": GratingEncodingSpec,
            "turbulence": ScreenGenSpec,
            "noise": NoiseModel,
        }
        kwargs = {}
        for key, value in data.items():
            if key in nested and value is not None:
                value = _build(nested[key], value, key)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(str(err)) from err

    def with_overrides(self, overrides: dict[str, object]) -> ExperimentConfig:
        """Apply dotted-key overrides such as ``{"turbulence.r0_m": 2e-3}``.

        Setting a key under a stage that is off (``turbulence`` or ``noise``)
        switches that stage on with defaults for the other keys.
        """
        tree = self.to_dict()
        defaults = {"turbulence": asdict(ScreenGenSpec()), "noise": asdict(NoiseModel())}
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            node = tree
            for i, part in enumerate(parts[:-1]):
                if node.get(part) is None and i == 0 and part in defaults:
                    node[part] = dict(defaults[part])
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"override {dotted!r}: {'.'.join(parts[: i + 1])} is not a section")
                node = node[part]
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(tree)

    def replace(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from err
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
