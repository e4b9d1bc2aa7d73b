"""Steered-response-power accumulation and argmax position estimation.

Both backends sum GCC-PHAT samples onto grid cells: the URG map reads one
lag per (cell, pair) from the dense chi table; the GSG map adds one GCC
sample per look-up-table entry, so a cell receives exactly delta(cell)
addends.  Estimation picks the maximal cell, ties broken toward the
smallest cell index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gcc import GccSet
from .geometry import SearchRegion
from .grids import CoherentGrid, SensitivityMap, TdoaLut, UrgTable

STATUS_OK = "ok"
STATUS_SILENT = "silent"
STATUS_EMPTY_GRID = "empty-grid"


@dataclass(frozen=True)
class PowerMap:
    """Accumulated steered power over a cell support."""

    region: SearchRegion
    cells: np.ndarray      # (n,) int64, sorted
    values: np.ndarray     # (n,) float
    backend: str           # "urg" | "gsg"
    frame_index: int

    @property
    def is_empty(self) -> bool:
        return self.cells.size == 0


@dataclass(frozen=True)
class LocationEstimate:
    position: np.ndarray | None   # lattice point, meters
    peak_power: float
    status: str
    tie_count: int
    cell: int = -1

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def argmax_policy(power: PowerMap) -> LocationEstimate:
    """Deterministic argmax: maximal value, smallest cell index on ties."""
    if power.is_empty:
        return LocationEstimate(
            position=None, peak_power=0.0, status=STATUS_EMPTY_GRID, tie_count=0
        )
    k = int(np.argmax(power.values))
    peak = float(power.values[k])
    ties = int(np.count_nonzero(power.values == peak))
    cell = int(power.cells[k])
    return LocationEstimate(
        position=power.region.point_of_cell(cell),
        peak_power=peak,
        status=STATUS_OK,
        tie_count=ties,
        cell=cell,
    )


def srp_urg(gcc: GccSet, table: UrgTable) -> tuple[PowerMap, LocationEstimate]:
    """Power map over the full lattice: P(cell) = sum_n R_n[chi(cell, n)]."""
    if gcc.n_pairs != table.n_pairs:
        raise ConfigError(
            f"GCC has {gcc.n_pairs} pairs but the table has {table.n_pairs}"
        )
    cells = np.arange(table.n_cells, dtype=np.int64)
    pm = PowerMap(
        region=table.region,
        cells=cells,
        values=np.zeros(table.n_cells),
        backend="urg",
        frame_index=gcc.frame_index,
    )
    if gcc.silent:
        return pm, LocationEstimate(
            position=None, peak_power=0.0, status=STATUS_SILENT, tie_count=0
        )
    values = np.zeros(table.n_cells)
    for n in range(table.n_pairs):
        f = gcc[n]
        # chi is in whole samples; the GCC lag axis is 1/alpha samples
        values += f.value_at(table.chi[:, n].astype(np.int64) * f.alpha)
    pm = PowerMap(
        region=table.region,
        cells=cells,
        values=values,
        backend="urg",
        frame_index=gcc.frame_index,
    )
    return pm, argmax_policy(pm)


def _gsg_accumulate_entries(gcc: GccSet, lut: TdoaLut, slots: np.ndarray, n_out: int):
    """Entry-order accumulation of Algorithm-style P[gamma_r] += R[...]."""
    values = np.zeros(n_out)
    addends = np.empty(lut.q)
    for n in range(len(gcc.functions)):
        mask = lut.gamma_n == n
        if mask.any():
            addends[mask] = gcc[n].value_at(lut.gamma_tau[mask].astype(np.int64))
    np.add.at(values, slots, addends)
    return values


def _gsg_accumulate_grouped(gcc: GccSet, lut: TdoaLut, slots: np.ndarray, n_out: int):
    """Pair-grouped accumulation: P = sum_n sum_{z in Z_rn} R_n[tau(z)]."""
    values = np.zeros(n_out)
    for n in range(len(gcc.functions)):
        mask = lut.gamma_n == n
        if mask.any():
            np.add.at(
                values,
                slots[mask],
                gcc[n].value_at(lut.gamma_tau[mask].astype(np.int64)),
            )
    return values


def srp_gsg(
    gcc: GccSet, lut: TdoaLut, grid: CoherentGrid, grouped: bool = False
) -> tuple[PowerMap, LocationEstimate]:
    """Accumulate GCC samples over the coherent grid and take the argmax.

    `grouped` switches to the pair-grouped accumulation form; both forms
    produce the same map up to floating-point association and exist to
    assert that equivalence.
    """
    if gcc.n_pairs != int(lut.max_lags.shape[0]):
        raise ConfigError("GCC pair count does not match the look-up table")
    pm_empty = PowerMap(
        region=lut.region,
        cells=grid.cells,
        values=np.zeros(grid.n_cells),
        backend="gsg",
        frame_index=gcc.frame_index,
    )
    if grid.n_cells == 0:
        return pm_empty, LocationEstimate(
            position=None, peak_power=0.0, status=STATUS_EMPTY_GRID, tie_count=0
        )
    if gcc.silent:
        return pm_empty, LocationEstimate(
            position=None, peak_power=0.0, status=STATUS_SILENT, tie_count=0
        )
    slots = np.searchsorted(grid.cells, lut.gamma_r)
    accumulate = _gsg_accumulate_grouped if grouped else _gsg_accumulate_entries
    values = accumulate(gcc, lut, slots, grid.n_cells)
    pm = PowerMap(
        region=lut.region,
        cells=grid.cells,
        values=values,
        backend="gsg",
        frame_index=gcc.frame_index,
    )
    return pm, argmax_policy(pm)


def normalized_gsg_map(pm: PowerMap, sens: SensitivityMap) -> PowerMap:
    """Experimental delta-normalized variant (mean instead of sum).

    Non-default: the raw sum is the documented accumulation; the mean is
    exposed only for experimentation.
    """
    counts = sens.delta[pm.cells]
    values = np.where(counts > 0, pm.values / np.maximum(counts, 1), 0.0)
    return PowerMap(
        region=pm.region,
        cells=pm.cells,
        values=values,
        backend=pm.backend,
        frame_index=pm.frame_index,
    )


def restrict_to_sensitivity(
    pm: PowerMap, sens: SensitivityMap, threshold: int
) -> PowerMap | None:
    """Keep only cells with delta >= threshold.

    Returns None when no cell survives; the caller is expected to fall
    back to the unrestricted map.
    """
    keep = sens.delta[pm.cells] >= threshold
    if not keep.any():
        return None
    return PowerMap(
        region=pm.region,
        cells=pm.cells[keep],
        values=pm.values[keep],
        backend=pm.backend,
        frame_index=pm.frame_index,
    )


def write_estimates_csv(path, rows) -> None:
    """Stream per-frame estimates as CSV.

    Each row: (frame, time_s, estimate: LocationEstimate).
    """
    with open(path, "w") as fh:
        fh.write("frame,time_s,x,y,z,peak,status,ties\n")
        for frame, time_s, est in rows:
            if est.ok:
                x, y, z = est.position
                fh.write(
                    f"{frame},{time_s:.6f},{x:.9g},{y:.9g},{z:.9g},"
                    f"{est.peak_power:.9g},{est.status},{est.tie_count}\n"
                )
            else:
                fh.write(f"{frame},{time_s:.6f},,,,,{est.status},0\n")
