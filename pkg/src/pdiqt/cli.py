"""Command-line interface: ``pdiqt {simulate,reconstruct,screens,selftest}``.

Exit status is 0 on success. On failure a JSON object
``{"error": <exception type>, "message": ...}`` goes to stderr and the status
is 1 (2 for malformed command lines, as argparse does).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from pdiqt import io
from pdiqt.aperture import SlitGeometry, roi_rectangles
from pdiqt.config import ExperimentConfig, load_config, save_config
from pdiqt.correction import correct_phase, full_aberration_map
from pdiqt.field import GridSpec
from pdiqt.psi import extract_state, reconstruct
from pdiqt.seeding import derive_seed
from pdiqt.turbulence import KOLMOGOROV_D, ScreenGenSpec, generate_screen, loglog_slope, structure_function


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"--set expects KEY=VALUE, got {pair!r}")
        out[key] = _parse_value(value)
    return out


def _config_from_args(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.ensemble_size is not None:
        overrides["ensemble_size"] = args.ensemble_size
    if args.base_seed is not None:
        overrides["base_seed"] = args.base_seed
    if args.preparation is not None:
        overrides["preparation"] = args.preparation
    if args.correction is not None:
        overrides["correction"] = args.correction
    if args.noise_budget is not None:
        overrides["noise.photon_budget"] = args.noise_budget
    if args.turbulence is not None:
        if args.turbulence == "off":
            overrides["turbulence"] = None
        else:
            overrides["turbulence.method"] = args.turbulence
    overrides.update(_overrides(args.set))
    # switching a stage off must happen before keys under it are set
    if overrides.get("turbulence", ...) is None:
        config = config.with_overrides({"turbulence": None})
        del overrides["turbulence"]
    return config.with_overrides(overrides) if overrides else config


def cmd_simulate(args) -> dict:
    from pdiqt.experiment import run_ensemble

    config = _config_from_args(args)
    start = time.perf_counter()
    result = run_ensemble(config, workers=args.workers)
    elapsed = time.perf_counter() - start
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    io.write_records(out / "records.csv", result.records)
    io.write_stats(
        out / "stats.json",
        result.stats_uncorrected,
        result.stats_corrected,
        {"failures": [{"trial": r.trial, "error": r.error} for r in result.failures]},
    )
    summary = {
        "trials": len(result.records),
        "failures": len(result.failures),
        "mean_uncorrected": result.stats_uncorrected.mean,
        "std_uncorrected": result.stats_uncorrected.std,
        "seconds": round(elapsed, 2),
        "out": str(out),
    }
    if result.stats_corrected is not None:
        summary["mean_corrected"] = result.stats_corrected.mean
        summary["std_corrected"] = result.stats_corrected.std
    return summary


def cmd_reconstruct(args) -> dict:
    frames = io.read_interferograms(args.frames)
    if args.config:
        geom = load_config(args.config).geometry
    elif args.geometry:
        geom = SlitGeometry.from_dict(json.loads(Path(args.geometry).read_text()))
    else:
        geom = SlitGeometry()
    shape = frames.frames.shape[1:]
    grid = GridSpec(width_px=shape[1], height_px=shape[0], pitch_um=frames.pitch_um)
    rois = roi_rectangles(geom, grid)
    result = reconstruct(frames, geom, rois)
    state, phase_map = result.estimated_state, result.phase_map
    if args.correct:
        phase_map = correct_phase(result.phase_map, full_aberration_map(result.phase_map, geom))
        state = extract_state(phase_map, result.amplitude_map, rois)
    io.write_state(args.state_out, state)
    summary = {"state": str(args.state_out), "d": state.d, "corrected": bool(args.correct)}
    if args.phase_out:
        io.write_grid(args.phase_out, phase_map)
        summary["phase_map"] = str(args.phase_out)
    if args.truth:
        from pdiqt.states import fidelity

        summary["fidelity"] = fidelity(state, io.read_state(args.truth))
    return summary


def cmd_screens(args) -> dict:
    grid = GridSpec(width_px=args.size, height_px=args.size, pitch_um=args.pitch_um)
    spec = ScreenGenSpec(method=args.method, r0_m=args.r0_m)
    screens = [
        generate_screen(replace(spec, rng_seed=derive_seed(args.seed, i)), grid)
        for i in range(args.count)
    ]
    if args.save_dir:
        save = Path(args.save_dir)
        save.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(screens):
            io.write_grid(save / f"screen_{i:04d}.grd", s.phase, metadata={"r0_m": s.r0_m, "method": args.method})
    pitch_m = args.pitch_um * 1e-6
    r0_px = args.r0_m / pitch_m
    max_sep = args.size // 2
    seps = np.unique(np.round(np.geomspace(1, min(max_sep, 4 * r0_px), args.num_separations)).astype(int))
    est = structure_function(screens, seps)
    kolmo = est.kolmogorov(args.r0_m)
    with open(args.csv, "w") as fh:
        fh.write("separation_px,separation_m,D,D_kolmogorov\n")
        for s, m, dv, kv in zip(seps, est.separations_m, est.D_values, kolmo):
            fh.write(f"{int(s)},{float(m)!r},{float(dv)!r},{float(kv)!r}\n")
    summary = {"screens": args.count, "csv": str(args.csv)}
    if 2 * r0_px <= max_sep:
        D_r0 = float(np.interp(np.log(args.r0_m), np.log(est.separations_m[1:]), est.D_values[1:]))
        summary["D_at_r0"] = D_r0
        summary["D_at_r0_ratio"] = D_r0 / KOLMOGOROV_D
        summary["slope"] = loglog_slope(est, 0.2 * args.r0_m, 2 * args.r0_m)
    return summary


def cmd_selftest(args) -> dict:
    from pdiqt.checks import run_selftest

    start = time.perf_counter()
    results = run_selftest(args.only or None)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.1f} s): {r.detail}", flush=True)
    failed = [r.name for r in results if not r.passed]
    summary = {"checks": len(results), "failed": failed, "seconds": round(time.perf_counter() - start, 1)}
    if failed:
        raise SelftestFailure(json.dumps(summary))
    return summary


class SelftestFailure(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdiqt", description="PDI tomography of spatial qudits: simulation and reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an ensemble; writes config.json, records.csv, stats.json")
    sim.add_argument("--config", help="JSON config file (defaults are used when omitted)")
    sim.add_argument("--out", default="run", help="output directory")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--ensemble-size", type=int)
    sim.add_argument("--base-seed", type=int)
    sim.add_argument("--preparation", choices=["ideal", "grating"])
    sim.add_argument("--turbulence", choices=["off", "spectral-fft", "decaying-modes"])
    sim.add_argument("--correction", action=argparse.BooleanOptionalAction, default=None)
    sim.add_argument("--noise-budget", type=float, help="enable Poisson noise with this many photons per frame")
    sim.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key, e.g. --set turbulence.r0_m=2e-3 (value parsed as JSON)")
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="interferograms -> state JSON (+ phase map)")
    rec.add_argument("frames", nargs="+", help="one stacked interferogram file or N frame files in phase-step order")
    rec.add_argument("--geometry", help="JSON file with SlitGeometry fields")
    rec.add_argument("--config", help="take the geometry from this experiment config")
    rec.add_argument("--correct", action="store_true", help="subtract the background-estimated aberration")
    rec.add_argument("--state-out", default="state.json")
    rec.add_argument("--phase-out", help="write the (corrected) phase map grid file here")
    rec.add_argument("--truth", help="state JSON to score the reconstruction against")
    rec.set_defaults(func=cmd_reconstruct)

    scr = sub.add_parser("screens", help="generate screens and write their structure function CSV")
    scr.add_argument("--method", choices=["spectral-fft", "decaying-modes"], default="spectral-fft")
    scr.add_argument("--r0-m", type=float, default=ScreenGenSpec().r0_m)
    scr.add_argument("--count", type=int, default=200)
    scr.add_argument("--seed", type=int, default=0)
    scr.add_argument("--size", type=int, default=GridSpec().width_px)
    scr.add_argument("--pitch-um", type=float, default=GridSpec().pitch_um)
    scr.add_argument("--num-separations", type=int, default=24)
    scr.add_argument("--csv", default="structure_function.csv")
    scr.add_argument("--save-dir", help="also write every screen as a grid file here")
    scr.set_defaults(func=cmd_screens)

    st = sub.add_parser("selftest", help="run the invariant suite")
    st.add_argument("--only", nargs="*", help="names of checks to run")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = args.func(args)
    except Exception as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
