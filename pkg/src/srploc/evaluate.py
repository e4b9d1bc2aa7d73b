"""Monte Carlo evaluation of localization accuracy.

Each trial draws a source position inside a zone (0.1 m clearance from
walls and microphones), synthesizes the channels, and localizes every
analysis frame with the configured backends.  All non-silent frames
weigh equally in the aggregate metrics; trials derive their RNG streams
from (seed, trial index), so the same scenes are replayed for every
backend and results are reproducible in any execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .gcc import frame_stream, gcc_all_pairs
from .geometry import MicArray, SearchRegion
from .grids import CoherentGrid, SensitivityMap, TdoaLut, UrgTable, build_gsg, build_urg
from .localize import restrict_to_sensitivity, argmax_policy, srp_gsg, srp_urg
from .simulate import SimScene, noise_burst, synth_ism_lite

DEFAULT_CLEARANCE_M = 0.1
DEFAULT_AR_THRESHOLD_M = 0.2
_MAX_PLACEMENT_TRIES = 10000


def metrics(errors, threshold: float) -> tuple[float, float]:
    """(rms, ar): root-mean-square error and the percentage of errors
    strictly below the threshold."""
    err = np.asarray(errors, dtype=float)
    if err.size == 0:
        raise ConfigError("metrics need at least one error value")
    rms = float(np.sqrt(np.mean(err**2)))
    ar = float(100.0 * np.mean(err < threshold))
    return rms, ar


@dataclass(frozen=True)
class RectZone:
    """Uniform placement inside an axis-aligned box."""

    label: str
    origin: np.ndarray
    extent: np.ndarray

    def sample(self, rng, region, array, clearance):
        room_lo = np.asarray(self.origin, dtype=float)
        room_hi = room_lo + np.asarray(self.extent, dtype=float)
        for _ in range(_MAX_PLACEMENT_TRIES):
            p = rng.uniform(room_lo, room_hi)
            if region.dim == 2:
                p[2] = region.plane_z
            if _admissible(p, array, clearance):
                return p
        raise ConfigError(f"zone {self.label!r} has no admissible placement")


@dataclass(frozen=True)
class CellZone:
    """Placement over a set of lattice cells (e.g. a sensitivity band).

    snap_to_lattice puts the source exactly on the cell's lattice point;
    otherwise it is uniform within the cell footprint.
    """

    label: str
    cells: np.ndarray
    snap_to_lattice: bool = False

    def sample(self, rng, region, array, clearance):
        if self.cells.size == 0:
            raise ConfigError(f"zone {self.label!r} is empty")
        for _ in range(_MAX_PLACEMENT_TRIES):
            cell = int(self.cells[rng.integers(self.cells.size)])
            p = region.point_of_cell(cell).copy()
            if not self.snap_to_lattice:
                jitter = rng.uniform(0.0, region.delta, size=3)
                if region.dim == 2:
                    jitter[2] = 0.0
                p = p + jitter
            if _admissible(p, array, clearance):
                return p
        raise ConfigError(f"zone {self.label!r} has no admissible placement")


def _admissible(p, array, clearance) -> bool:
    return bool(np.min(np.linalg.norm(array.mics - p, axis=1)) >= clearance)


def zone_from_sensitivity(
    label: str,
    sens: SensitivityMap,
    min_delta: int | None = None,
    max_delta: int | None = None,
    snap_to_lattice: bool = False,
) -> CellZone:
    """Zone of all lattice cells whose delta falls in the given band."""
    d = sens.delta
    mask = np.ones(d.shape[0], dtype=bool)
    if min_delta is not None:
        mask &= d >= min_delta
    if max_delta is not None:
        mask &= d <= max_delta
    return CellZone(
        label=label,
        cells=np.where(mask)[0].astype(np.int64),
        snap_to_lattice=snap_to_lattice,
    )


@dataclass(frozen=True)
class EvalCondition:
    backend: str                 # "urg" | "gsg"
    zone: RectZone | CellZone
    restrict_delta: int | None = None   # high-sensitivity search restriction

    @property
    def label(self) -> str:
        return f"{self.backend}/{self.zone.label}"


@dataclass(frozen=True)
class EvalConfig:
    array: MicArray
    region: SearchRegion
    room: np.ndarray
    conditions: tuple[EvalCondition, ...]
    alpha: int = 1
    frame_length: int = 4096
    hop: int = 1024
    signal_duration_s: float = 0.35
    reflection_order: int = 0
    absorption: float = 0.5
    snr_db: float | None = None
    threshold_m: float = DEFAULT_AR_THRESHOLD_M
    clearance_m: float = DEFAULT_CLEARANCE_M


@dataclass
class EvalReport:
    """Aggregated localization outcome of one condition."""

    condition: str
    backend: str
    zone: str
    trials: int
    records: list = field(default_factory=list)  # (trial, frame, true, est, err2)
    rms: float = math.nan
    ar: float = math.nan
    threshold_m: float = DEFAULT_AR_THRESHOLD_M
    n_frames: int = 0
    n_silent: int = 0

    def finalize(self):
        errs = np.sqrt([r[4] for r in self.records]) if self.records else np.array([])
        if errs.size:
            self.rms, self.ar = metrics(errs, self.threshold_m)
        self.n_frames = len(self.records)
        return self


def _trial_rng(seed: int, trial: int):
    return np.random.default_rng([int(seed) & 0x7FFFFFFF, trial])


def _build_tables(cfg: EvalConfig):
    urg = None
    gsg = None
    backends = {c.backend for c in cfg.conditions}
    if "urg" in backends:
        urg = build_urg(cfg.region, cfg.array)
    if "gsg" in backends or any(c.restrict_delta is not None for c in cfg.conditions):
        gsg = build_gsg(cfg.region, cfg.array, alpha=cfg.alpha)
    return urg, gsg


def evaluate(cfg: EvalConfig, trials: int, seed: int) -> list[EvalReport]:
    """Run the Monte Carlo matrix and return one report per condition."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    urg_table, gsg_tables = _build_tables(cfg)
    reports = [
        EvalReport(
            condition=c.label,
            backend=c.backend,
            zone=c.zone.label,
            trials=trials,
            threshold_m=cfg.threshold_m,
        )
        for c in cfg.conditions
    ]

    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        burst = noise_burst(cfg.signal_duration_s, cfg.array.fs, int(rng.integers(2**31)))
        # one placement per zone per trial; backends share it
        zone_positions: dict[str, np.ndarray] = {}
        zone_channels: dict[str, np.ndarray] = {}
        for cond in cfg.conditions:
            zl = cond.zone.label
            if zl in zone_positions:
                continue
            pos = cond.zone.sample(rng, cfg.region, cfg.array, cfg.clearance_m)
            scene = SimScene(
                room=cfg.room,
                source=pos,
                signal=burst,
                reflection_order=cfg.reflection_order,
                absorption=cfg.absorption,
                snr_db=cfg.snr_db,
                seed=int(rng.integers(2**31)),
            )
            zone_positions[zl] = pos
            zone_channels[zl] = synth_ism_lite(scene, cfg.array)

        for ci, cond in enumerate(cfg.conditions):
            pos = zone_positions[cond.zone.label]
            channels = zone_channels[cond.zone.label]
            for frames in frame_stream(channels, cfg.frame_length, cfg.hop):
                gcc = gcc_all_pairs(frames, cfg.array, alpha=cfg.alpha)
                if gcc.silent:
                    reports[ci].n_silent += 1
                    continue
                if cond.backend == "urg":
                    pm, est = srp_urg(gcc, urg_table)
                else:
                    lut, sens, grid = gsg_tables
                    pm, est = srp_gsg(gcc, lut, grid)
                if cond.restrict_delta is not None and est.ok:
                    restricted = restrict_to_sensitivity(
                        pm, gsg_tables[1], cond.restrict_delta
                    )
                    if restricted is not None:
                        est = argmax_policy(restricted)
                if not est.ok:
                    reports[ci].n_silent += 1
                    continue
                err2 = float(np.sum((est.position - pos) ** 2))
                reports[ci].records.append(
                    (trial, frames.index, pos.copy(), est.position.copy(), err2)
                )
    return [r.finalize() for r in reports]


def write_report_csv(path, reports: list[EvalReport]) -> None:
    with open(path, "w") as fh:
        fh.write("condition,backend,zone,trial,frame,true_x,true_y,true_z,"
                 "est_x,est_y,est_z,error_m\n")
        for rep in reports:
            for trial, frame, true, est, err2 in rep.records:
                fh.write(
                    f"{rep.condition},{rep.backend},{rep.zone},{trial},{frame},"
                    f"{true[0]:.9g},{true[1]:.9g},{true[2]:.9g},"
                    f"{est[0]:.9g},{est[1]:.9g},{est[2]:.9g},{math.sqrt(err2):.9g}\n"
                )


def write_summary_csv(path, reports: list[EvalReport]) -> None:
    with open(path, "w") as fh:
        fh.write("condition,backend,zone,trials,frames,silent,rms_m,ar_pct,threshold_m\n")
        for r in reports:
            fh.write(
                f"{r.condition},{r.backend},{r.zone},{r.trials},{r.n_frames},"
                f"{r.n_silent},{r.rms:.6g},{r.ar:.4g},{r.threshold_m}\n"
            )
