"""File formats.

Grid container::

    bytes 0-7    magic b"PDIQTGRD"
    bytes 8-11   header length n, uint32 little-endian
    bytes 12..   n bytes of UTF-8 JSON header
    rest         raw little-endian samples, C order

The header holds ``kind`` (intensity | phase | complex | generic), ``shape``
``[height, width]``, ``frames`` (null for a single grid, else the stack
depth), ``pitch_um``, ``dtype`` (float64 | uint16), ``endianness``
("little"), ``scale`` and free-form ``metadata``. Complex grids store
interleaved real/imaginary float64 pairs. ``uint16`` ("camera" mode) stores
``round(value / scale)`` with ``scale = max / 65535`` and is only allowed for
non-negative real data; NaN is representable only in float64 mode.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from pdiqt.experiment import EnsembleStats, TrialRecord
from pdiqt.field import ComplexFieldGrid, RealGrid
from pdiqt.psi import InterferogramSet, PdiFilterSpec
from pdiqt.states import QuditState

MAGIC = b"PDIQTGRD"
FORMAT_VERSION = 1
CAMERA_LEVELS = 65535
_PREFIX = len(MAGIC) + 4
_DTYPES = {"float64": np.dtype("<f8"), "uint16": np.dtype("<u2")}
RECORD_COLUMNS = (
    "trial",
    "seed",
    "screen_seed",
    "fidelity_uncorrected",
    "fidelity_corrected",
    "true_state",
    "estimated_uncorrected",
    "estimated_corrected",
    "error",
)


class FormatError(ValueError):
    pass


# --- grid container ------------------------------------------------------------


def _encode(values: np.ndarray, kind: str, mode: str) -> tuple[bytes, str, float | None]:
    if mode == "exact":
        if kind == "complex":
            values = np.stack([values.real, values.imag], axis=-1)
        return np.ascontiguousarray(values, dtype="<f8").tobytes(), "float64", None
    if mode != "camera":
        raise FormatError(f"unknown write mode {mode!r}")
    if kind == "complex" or not np.all(np.isfinite(values)) or np.any(values < 0):
        raise FormatError("camera mode needs finite, non-negative real data")
    peak = float(values.max()) if values.size else 0.0
    scale = peak / CAMERA_LEVELS if peak > 0 else 1.0
    levels = np.rint(values / scale).astype("<u2")
    return levels.tobytes(), "uint16", scale


def _write_container(path, values: np.ndarray, kind: str, pitch_um: float, frames, mode: str, metadata: dict) -> None:
    payload, dtype, scale = _encode(values, kind, mode)
    shape = list(values.shape[-2:])
    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "shape": shape,
        "frames": frames,
        "pitch_um": float(pitch_um),
        "dtype": dtype,
        "endianness": "little",
        "scale": scale,
        "metadata": metadata,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(payload)


def _read_container(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX:
        raise FormatError(f"{path}: offset 0: file is {len(raw)} bytes, shorter than the {_PREFIX}-byte prefix")
    if raw[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: offset 0: bad magic {raw[:len(MAGIC)]!r}")
    (n,) = struct.unpack("<I", raw[len(MAGIC) : _PREFIX])
    if _PREFIX + n > len(raw):
        raise FormatError(f"{path}: offset {len(MAGIC)}: header length {n} runs past end of file ({len(raw)} bytes)")
    try:
        header = json.loads(raw[_PREFIX : _PREFIX + n].decode("utf-8"))
    except UnicodeDecodeError as err:
        raise FormatError(f"{path}: offset {_PREFIX + err.start}: header is not UTF-8") from err
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: offset {_PREFIX + err.pos}: bad header JSON: {err.msg}") from err
    for key in ("kind", "shape", "frames", "pitch_um", "dtype", "endianness", "scale"):
        if key not in header:
            raise FormatError(f"{path}: offset {_PREFIX}: header lacks {key!r}")
    if header["endianness"] != "little":
        raise FormatError(f"{path}: offset {_PREFIX}: unsupported endianness {header['endianness']!r}")
    if header["dtype"] not in _DTYPES:
        raise FormatError(f"{path}: offset {_PREFIX}: unsupported dtype {header['dtype']!r}")
    if header["kind"] not in ("intensity", "phase", "complex", "generic"):
        raise FormatError(f"{path}: offset {_PREFIX}: unknown kind {header['kind']!r}")
    shape = tuple(int(v) for v in header["shape"])
    if header["frames"] is not None:
        shape = (int(header["frames"]),) + shape
    if header["kind"] == "complex":
        shape = shape + (2,)
    dtype = _DTYPES[header["dtype"]]
    expected = int(np.prod(shape)) * dtype.itemsize
    start = _PREFIX + n
    found = len(raw) - start
    if found != expected:
        raise FormatError(f"{path}: offset {start}: expected {expected} data bytes for shape {shape}, found {found}")
    data = np.frombuffer(raw, dtype=dtype, offset=start).reshape(shape)
    if header["dtype"] == "uint16":
        data = data.astype(np.float64) * float(header["scale"])
    else:
        data = data.astype(np.float64)
    if header["kind"] == "complex":
        data = data[..., 0] + 1j * data[..., 1]
    return header, data


def write_grid(path, grid: RealGrid | ComplexFieldGrid, mode: str = "exact", metadata: dict | None = None) -> None:
    kind = "complex" if isinstance(grid, ComplexFieldGrid) else grid.kind
    _write_container(path, grid.samples, kind, grid.pitch_um, None, mode, metadata or {})


def read_grid(path) -> RealGrid | ComplexFieldGrid:
    header, data = _read_container(path)
    if header["frames"] is not None:
        raise FormatError(f"{path}: holds a stack of {header['frames']} frames, not a single grid")
    try:
        if header["kind"] == "complex":
            return ComplexFieldGrid(data, header["pitch_um"])
        return RealGrid(data, header["pitch_um"], kind=header["kind"])
    except ValueError as err:
        raise FormatError(f"{path}: offset {_PREFIX}: {err}") from err


def read_grid_metadata(path) -> dict:
    return _read_container(path)[0]


def write_interferograms(path, frames: InterferogramSet, mode: str = "exact") -> None:
    metadata = {
        "filter_spec": frames.filter_spec.to_dict(),
        "noisy": frames.noisy,
        "seed": frames.seed,
        "extra": frames.metadata,
    }
    # camera mode uses one scale for the whole stack, so frames stay comparable
    _write_container(path, frames.frames, "intensity", frames.pitch_um, frames.N, mode, metadata)


def read_interferograms(paths, filter_spec: PdiFilterSpec | None = None) -> InterferogramSet:
    """One stacked file, or N single-frame intensity files given in phase-step order."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    paths = list(paths)
    if len(paths) == 1:
        header, data = _read_container(paths[0])
        if header["frames"] is not None:
            meta = header.get("metadata", {})
            spec = filter_spec or PdiFilterSpec.from_dict(meta.get("filter_spec", {"num_steps_N": data.shape[0]}))
            return InterferogramSet(
                data, header["pitch_um"], spec, bool(meta.get("noisy", False)), meta.get("seed"), meta.get("extra", {})
            )
    stack, pitches = [], set()
    for p in paths:
        grid = read_grid(p)
        if not isinstance(grid, RealGrid) or grid.kind != "intensity":
            raise FormatError(f"{p}: expected an intensity frame")
        stack.append(grid.samples)
        pitches.add(grid.pitch_um)
    if len(pitches) != 1:
        raise FormatError(f"frames have different pitches: {sorted(pitches)}")
    if len({s.shape for s in stack}) != 1:
        raise FormatError("frames have different shapes")
    spec = filter_spec or PdiFilterSpec(num_steps_N=len(stack))
    return InterferogramSet(np.stack(stack), pitches.pop(), spec)


# --- JSON documents ------------------------------------------------------------


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from err


def write_state(path, state: QuditState) -> None:
    Path(path).write_text(json.dumps(state.to_json()) + "\n")


def read_state(path) -> QuditState:
    data = _read_json(path)
    try:
        return QuditState.from_json(data)
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f"{path}: not a state document: {err}") from err


def write_stats(path, uncorrected: EnsembleStats, corrected: EnsembleStats | None = None, extra: dict | None = None) -> None:
    doc = {"uncorrected": uncorrected.to_dict(), "corrected": None if corrected is None else corrected.to_dict()}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_stats(path) -> tuple[EnsembleStats, EnsembleStats | None]:
    doc = _read_json(path)
    try:
        corrected = doc.get("corrected")
        return EnsembleStats.from_dict(doc["uncorrected"]), None if corrected is None else EnsembleStats.from_dict(corrected)
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f"{path}: not a stats document: {err}") from err


# --- records CSV ---------------------------------------------------------------


def _state_cell(state: QuditState | None) -> str:
    return "" if state is None else json.dumps(state.to_json()["coefficients"])


def _parse_state(cell: str) -> QuditState | None:
    return None if cell == "" else QuditState.from_json({"coefficients": json.loads(cell)})


def _opt(cell: str, cast):
    return None if cell == "" else cast(cell)


def write_records(path, records) -> None:
    """One row per trial; floats in shortest round-trip repr, states as JSON ``[[re, im], ...]`` cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.trial,
                    r.seed,
                    "" if r.screen_seed is None else r.screen_seed,
                    repr(float(r.fidelity_uncorrected)),
                    "" if r.fidelity_corrected is None else repr(float(r.fidelity_corrected)),
                    _state_cell(r.true_state),
                    _state_cell(r.estimated_uncorrected),
                    _state_cell(r.estimated_corrected),
                    r.error or "",
                ]
            )


def read_records(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: line 1: empty file") from None
        if tuple(header) != RECORD_COLUMNS:
            raise FormatError(f"{path}: line 1: expected columns {list(RECORD_COLUMNS)}, got {header}")
        records = []
        for row in reader:
            line = reader.line_num
            if len(row) != len(RECORD_COLUMNS):
                raise FormatError(f"{path}: line {line}: expected {len(RECORD_COLUMNS)} fields, got {len(row)}")
            cells = dict(zip(RECORD_COLUMNS, row))
            try:
                records.append(
                    TrialRecord(
                        trial=int(cells["trial"]),
                        seed=int(cells["seed"]),
                        true_state=_parse_state(cells["true_state"]),
                        screen_seed=_opt(cells["screen_seed"], int),
                        estimated_uncorrected=_parse_state(cells["estimated_uncorrected"]),
                        estimated_corrected=_parse_state(cells["estimated_corrected"]),
                        fidelity_uncorrected=float(cells["fidelity_uncorrected"]),
                        fidelity_corrected=_opt(cells["fidelity_corrected"], float),
                        error=cells["error"] or None,
                    )
                )
            except (TypeError, ValueError, json.JSONDecodeError) as err:
                raise FormatError(f"{path}: line {line}: {err}") from err
    return records
