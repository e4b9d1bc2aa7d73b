"""Command-line interface.

Subcommands:

* build-grid   build URG or GSG tables, write binary + CSV + stats + figure
* sensitivity  build the GSG sensitivity map, write CSV + PGM + summary + figure
* simulate     synthesize a multichannel WAV from a scene config
* localize     per-frame source estimates from a WAV (CSV + power map + figures)
* evaluate     Monte Carlo accuracy matrix (report CSV + summary CSV + figure)

Every subcommand exits 0 on success; failures print one machine-readable
JSON line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import gridio, plots
from .audio import read_wav, write_wav
from .errors import ConfigError
from .evaluate import (
    DEFAULT_AR_THRESHOLD_M,
    DEFAULT_CLEARANCE_M,
    EvalCondition,
    EvalConfig,
    RectZone,
    evaluate,
    write_report_csv,
    write_summary_csv,
    zone_from_sensitivity,
)
from .gcc import frame_stream, gcc_all_pairs
from .geometry import (
    MicArray,
    SearchRegion,
    array_from_config,
    load_config,
    region_from_config,
)
from .grids import build_gsg, build_urg, sensitivity_stats
from .localize import argmax_policy, restrict_to_sensitivity, srp_gsg, srp_urg
from .simulate import SimScene, noise_burst, synth_freefield, synth_ism_lite


def _geometry(args) -> tuple[dict, MicArray, SearchRegion]:
    cfg = load_config(args.config)
    array = array_from_config(cfg)
    region = region_from_config(cfg)
    if getattr(args, "delta", None) is not None:
        region = SearchRegion(
            origin=region.origin, extent=region.extent, delta=args.delta, dim=region.dim
        )
    return cfg, array, region


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build_grid(args) -> int:
    cfg, array, region = _geometry(args)
    out = _outdir(args)
    stats = {
        "backend": args.backend,
        "n_cells": region.n_cells,
        "delta_m": region.delta,
        "dim": region.dim,
        "n_pairs": array.n_pairs,
    }
    if args.backend == "urg":
        table = build_urg(region, array)
        gridio.save_urg(out / "urg_table.bin", table)
        gridio.urg_to_csv(out / "urg_table.csv", table)
        stats["max_lags"] = table.max_lags.tolist()
    else:
        lut, sens, grid = build_gsg(region, array, alpha=args.alpha)
        gridio.save_gsg(out / "gsg_tables.bin", lut, sens, grid)
        gridio.lut_to_csv(out / "gsg_lut.csv", lut)
        plots.plot_coherent_grid(out / "coherent_grid.png", grid, array)
        stats.update(
            {
                "alpha": lut.alpha,
                "q_raw": lut.q_raw,
                "removed": lut.removed,
                "q": lut.q,
                "mu": sens.mu,
                "coherent_cells": grid.n_cells,
                "coverage_pct": 100.0 * grid.n_cells / region.n_cells,
                "max_lags": lut.max_lags.tolist(),
            }
        )
    with open(out / "grid_stats.json", "w") as fh:
        json.dump(stats, fh, indent=2)
    print(json.dumps(stats))
    return 0


def cmd_sensitivity(args) -> int:
    cfg, array, region = _geometry(args)
    out = _outdir(args)
    lut, sens, grid = build_gsg(region, array, alpha=args.alpha)
    threshold = args.threshold_count if args.threshold_count is not None else sens.mu
    stats = sensitivity_stats(sens, threshold)
    gridio.sensitivity_to_csv(out / "sensitivity.csv", sens)
    gridio.sensitivity_to_pgm(out / "sensitivity.pgm", sens)
    plots.plot_sensitivity_map(out / "sensitivity_map.png", sens, array)
    summary = {
        "mu": sens.mu,
        "threshold": threshold,
        "min_nonzero": stats.min_nonzero,
        "max": stats.max_value,
        "mean_nonzero": stats.mean_nonzero,
        "covered_cells": stats.n_nonzero,
        "high_sensitivity_cells": int(stats.high_cells.size),
        "coherent_cells": grid.n_cells,
        "n_cells": region.n_cells,
    }
    with open(out / "sensitivity_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return 0


def _scene_from_config(cfg: dict, array: MicArray, seed_override=None) -> SimScene:
    try:
        sec = cfg["scene"]
        room = [float(v) for v in sec["room"]]
        source = [float(v) for v in sec["source"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config missing scene field: {exc}") from exc
    sig = sec.get("signal", {"kind": "noise-burst", "duration_s": 0.5})
    seed = int(seed_override if seed_override is not None else sec.get("seed", 0))
    if sig.get("kind", "noise-burst") != "noise-burst":
        raise ConfigError(f"unknown signal kind {sig.get('kind')!r}")
    signal = noise_burst(float(sig.get("duration_s", 0.5)), array.fs, seed)
    snr = sec.get("snr_db")
    return SimScene(
        room=np.array(room),
        source=np.array(source),
        signal=signal,
        reflection_order=int(sec.get("reflection_order", 0)),
        absorption=float(sec.get("absorption", 0.5)),
        snr_db=None if snr is None else float(snr),
        seed=seed,
    )


def cmd_simulate(args) -> int:
    cfg, array, region = _geometry(args)
    out = _outdir(args)
    scene = _scene_from_config(cfg, array, seed_override=args.seed)
    if scene.reflection_order == 0:
        channels = synth_freefield(scene, array)
    else:
        channels = synth_ism_lite(scene, array)
    peak = np.abs(channels).max()
    if peak > 0:
        channels = channels / peak * 0.9
    write_wav(out / "scene.wav", int(array.fs), channels)
    meta = {
        "source": [float(v) for v in scene.source],
        "room": [float(v) for v in scene.room],
        "fs": array.fs,
        "reflection_order": scene.reflection_order,
        "absorption": scene.absorption,
        "snr_db": scene.snr_db,
        "seed": scene.seed,
        "n_channels": array.n_mics,
        "n_samples": int(channels.shape[1]),
    }
    with open(out / "scene_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    print(json.dumps(meta))
    return 0


def cmd_localize(args) -> int:
    cfg, array, region = _geometry(args)
    out = _outdir(args)
    fs, channels = read_wav(args.wav)
    if fs != int(array.fs):
        raise ConfigError(f"WAV rate {fs} differs from configured fs {array.fs}")
    if channels.shape[0] != array.n_mics:
        raise ConfigError(
            f"WAV has {channels.shape[0]} channels, array has {array.n_mics} mics"
        )
    frames_cfg = cfg.get("frames", {})
    length = int(frames_cfg.get("length", 4096))
    hop = int(frames_cfg.get("hop", length // 4))
    window = frames_cfg.get("window", "rect")

    if args.backend == "urg":
        table = build_urg(region, array)
        sens = None
    else:
        lut, sens, grid = build_gsg(region, array, alpha=args.alpha)

    rows = []
    first_map = None
    for frames in frame_stream(channels, length, hop, window=window):
        gcc = gcc_all_pairs(frames, array, alpha=args.alpha)
        if args.backend == "urg":
            pm, est = srp_urg(gcc, table)
        else:
            pm, est = srp_gsg(gcc, lut, grid)
        if args.restrict_sensitivity is not None and est.ok:
            restricted = restrict_to_sensitivity(pm, sens, args.restrict_sensitivity)
            if restricted is not None:
                pm, est = restricted, argmax_policy(restricted)
        if first_map is None:
            first_map = (pm, est)
        rows.append((frames.index, frames.index * hop / array.fs, est))
    if not rows:
        raise ConfigError("input shorter than one analysis frame")

    from .localize import write_estimates_csv

    write_estimates_csv(out / "estimates.csv", rows)
    pm, est = first_map
    gridio.map_to_csv(out / "power_map_frame0.csv", pm.region, pm.cells, pm.values,
                      value_name="power")
    dense = np.zeros(region.n_cells)
    dense[pm.cells] = pm.values - (pm.values.min() if pm.values.size else 0.0)
    gridio.map_to_pgm(out / "power_map_frame0.pgm", region, dense)
    plots.plot_power_map(
        out / "power_map_frame0.png", pm, array,
        estimate=est.position if est.ok else None,
    )
    plots.plot_estimates(out / "estimates.png", rows, region, array)
    n_ok = sum(1 for _, _, e in rows if e.ok)
    print(json.dumps({"frames": len(rows), "localized": n_ok, "backend": args.backend}))
    return 0


def _zones_from_config(zone_specs, region, array, alpha, snap):
    zones = []
    needs_sens = any(z.get("kind", "rect") == "sensitivity" for z in zone_specs)
    sens = None
    if needs_sens:
        _, sens, _ = build_gsg(region, array, alpha=alpha)
    for spec in zone_specs:
        kind = spec.get("kind", "rect")
        label = spec.get("label", kind)
        if kind == "rect":
            zones.append(
                RectZone(
                    label=label,
                    origin=np.array([float(v) for v in spec["origin"]]),
                    extent=np.array([float(v) for v in spec["extent"]]),
                )
            )
        elif kind == "sensitivity":
            zones.append(
                zone_from_sensitivity(
                    label,
                    sens,
                    min_delta=spec.get("min_delta"),
                    max_delta=spec.get("max_delta"),
                    snap_to_lattice=snap,
                )
            )
        else:
            raise ConfigError(f"unknown zone kind {kind!r}")
    return zones


def cmd_evaluate(args) -> int:
    cfg, array, region = _geometry(args)
    out = _outdir(args)
    ev = cfg.get("evaluate")
    if not ev:
        raise ConfigError("config has no evaluate section")
    scene_sec = cfg.get("scene", {})
    room = np.array([float(v) for v in scene_sec.get("room", region.origin + region.extent)])
    backends = [args.backend] if args.backend else list(ev.get("backends", ["gsg"]))
    snap = ev.get("placement", "uniform") == "lattice"
    zones = _zones_from_config(ev.get("zones", []), region, array, args.alpha, snap)
    if not zones:
        raise ConfigError("evaluate section defines no zones")
    conditions = tuple(
        EvalCondition(backend=b, zone=z, restrict_delta=args.restrict_sensitivity)
        for b in backends
        for z in zones
    )
    sig = scene_sec.get("signal", {})
    config = EvalConfig(
        array=array,
        region=region,
        room=room,
        conditions=conditions,
        alpha=args.alpha,
        frame_length=int(cfg.get("frames", {}).get("length", 4096)),
        hop=int(cfg.get("frames", {}).get("hop", 1024)),
        signal_duration_s=float(sig.get("duration_s", 0.35)),
        reflection_order=int(scene_sec.get("reflection_order", 0)),
        absorption=float(scene_sec.get("absorption", 0.5)),
        snr_db=(None if scene_sec.get("snr_db") is None else float(scene_sec["snr_db"])),
        threshold_m=args.threshold,
        clearance_m=float(ev.get("clearance_m", DEFAULT_CLEARANCE_M)),
    )
    trials = args.trials if args.trials is not None else int(ev.get("trials", 100))
    reports = evaluate(config, trials=trials, seed=args.seed)
    write_report_csv(out / "report.csv", reports)
    write_summary_csv(out / "summary.csv", reports)
    plots.plot_eval_summary(out / "summary.png", reports)
    for r in reports:
        print(
            json.dumps(
                {
                    "condition": r.condition,
                    "trials": r.trials,
                    "frames": r.n_frames,
                    "rms_m": None if r.n_frames == 0 else round(r.rms, 6),
                    "ar_pct": None if r.n_frames == 0 else round(r.ar, 3),
                }
            )
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="srploc",
        description="SRP-PHAT localization with uniform and geometrically sampled grids",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, backend=True):
        sp.add_argument("--config", required=True, help="YAML config path")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--delta", type=float, default=None, help="override grid resolution (m)")
        sp.add_argument("--alpha", type=int, default=1, help="TDOA interpolation factor")
        sp.add_argument("--seed", type=int, default=0, help="RNG seed")
        if backend:
            sp.add_argument("--backend", choices=["urg", "gsg"], default="gsg")

    sp = sub.add_parser("build-grid", help="build URG/GSG tables and stats")
    common(sp)
    sp.set_defaults(func=cmd_build_grid)

    sp = sub.add_parser("sensitivity", help="sensitivity map CSV/PGM + summary")
    common(sp, backend=False)
    sp.add_argument("--threshold-count", type=int, default=None,
                    help="high-sensitivity cell threshold (default: mu)")
    sp.set_defaults(func=cmd_sensitivity)

    sp = sub.add_parser("simulate", help="synthesize a multichannel WAV from the scene")
    common(sp, backend=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("localize", help="per-frame estimates from a WAV")
    sp.add_argument("wav", help="multichannel WAV input")
    common(sp)
    sp.add_argument("--restrict-sensitivity", type=int, default=None,
                    help="search only cells with delta >= this count")
    sp.set_defaults(func=cmd_localize)

    sp = sub.add_parser("evaluate", help="Monte Carlo accuracy matrix")
    common(sp, backend=False)
    sp.add_argument("--backend", choices=["urg", "gsg"], default=None,
                    help="restrict to one backend (default: config list)")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=DEFAULT_AR_THRESHOLD_M,
                    help="AR error threshold in meters")
    sp.add_argument("--restrict-sensitivity", type=int, default=None)
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
