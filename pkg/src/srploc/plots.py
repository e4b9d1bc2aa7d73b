"""Figure rendering for the CLI report paths.

All functions write PNG files next to the delimited outputs.  The Agg
backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import MicArray, SearchRegion
from .grids import CoherentGrid, SensitivityMap
from .localize import PowerMap


def _dense_slice(region: SearchRegion, cells, values, iz=0):
    nx, ny, nz = region.shape
    dense = np.zeros(region.n_cells)
    dense[np.asarray(cells)] = values
    return dense.reshape(nx, ny, nz)[:, :, iz]


def _extent(region: SearchRegion):
    nx, ny, _ = region.shape
    x0, y0 = region.origin[0], region.origin[1]
    return [x0, x0 + nx * region.delta, y0, y0 + ny * region.delta]


def _draw_array(ax, array: MicArray | None):
    if array is not None:
        ax.plot(array.mics[:, 0], array.mics[:, 1], "wv", mec="k", ms=7, label="mics")


def plot_sensitivity_map(path, sens: SensitivityMap, array: MicArray | None = None, iz=0):
    grid = _dense_slice(sens.region, np.arange(sens.region.n_cells), sens.delta, iz)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(
        grid.T, origin="lower", extent=_extent(sens.region), aspect="equal", cmap="jet"
    )
    fig.colorbar(im, ax=ax, label="intersecting hyperboloids")
    _draw_array(ax, array)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title("sensitivity map")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_coherent_grid(path, grid: CoherentGrid, array: MicArray | None = None, iz=0):
    mask = _dense_slice(grid.region, grid.cells, np.ones(grid.n_cells), iz)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ax.imshow(
        mask.T,
        origin="lower",
        extent=_extent(grid.region),
        aspect="equal",
        cmap="Blues",
        vmin=0,
        vmax=1,
    )
    _draw_array(ax, array)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"coherent grid ({grid.n_cells} of {grid.region.n_cells} cells)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_power_map(path, pm: PowerMap, array: MicArray | None = None,
                   truth=None, estimate=None, iz=0):
    grid = _dense_slice(pm.region, pm.cells, pm.values, iz)
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(
        grid.T, origin="lower", extent=_extent(pm.region), aspect="equal", cmap="jet"
    )
    fig.colorbar(im, ax=ax, label="steered response power")
    _draw_array(ax, array)
    if truth is not None:
        ax.plot(truth[0], truth[1], "w*", mec="k", ms=12, label="true")
    if estimate is not None:
        ax.plot(estimate[0], estimate[1], "wo", mec="r", ms=8, label="estimate")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"{pm.backend.upper()} power map, frame {pm.frame_index}")
    if truth is not None or estimate is not None:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_estimates(path, rows, region: SearchRegion, array: MicArray | None = None):
    """Scatter of per-frame estimates; rows as written to estimates CSV."""
    xs = [est.position[0] for _, _, est in rows if est.ok]
    ys = [est.position[1] for _, _, est in rows if est.ok]
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ext = _extent(region)
    ax.set_xlim(ext[0], ext[1])
    ax.set_ylim(ext[2], ext[3])
    ax.set_aspect("equal")
    if xs:
        ax.scatter(xs, ys, c=range(len(xs)), cmap="viridis", s=25, label="estimates")
    _draw_array(ax, array)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"per-frame estimates ({len(xs)} frames)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_eval_summary(path, reports):
    labels = [r.condition for r in reports]
    ars = [r.ar for r in reports]
    rmss = [r.rms for r in reports]
    x = np.arange(len(labels))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax1.bar(x, ars, color="tab:blue")
    ax1.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel("accuracy rate (%)")
    ax1.set_ylim(0, 100)
    ax2.bar(x, rmss, color="tab:orange")
    ax2.set_xticks(x, labels, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("RMS error (m)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
