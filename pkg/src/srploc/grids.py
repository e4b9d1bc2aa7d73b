"""Spatial grid construction for SRP localization.

Two backends are built from the same array/region description:

* the uniform regular grid (URG): every lattice cell is assigned one
  rounded TDOA per sensor pair, giving a dense chi(cell, pair) table;
* the geometrically sampled grid (GSG): for every pair and every
  admissible TDOA the corresponding hyperboloid sheet is traced through
  the lattice, producing look-up tables gamma_r / gamma_n / gamma_tau, a
  per-cell intersection count delta (the sensitivity map), and the
  coherent grid of cells crossed by at least mu distinct hyperboloids
  (mu = 3 in 3D, 2 in 2D).

Tracing works in the local frame of each pair, where the constant-TDOA
locus is x^2/a1^2 - (y^2 + z^2)/a2^2 = 1 with a1 = c*tau/(2*alpha*fs) and
a2 = sqrt((d/2)^2 - a1^2).  The sheet is selected by the sign of tau.  A
first pass sweeps the y axis (revolving each circle over z in 3D), a
second pass sweeps the x axis to keep resolution on steep sections, and
every local point is transformed back and snapped to the global lattice.
Each traced cell is kept only if its lattice point's analytic delay lies
within half a sample plus the lattice-snap slack of the traced TDOA.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import (
    MicArray,
    PairFrame,
    SearchRegion,
    analytic_delay_m,
    max_tdoa_samples,
    pair_frames,
    round_half_away,
    tdoa_at,
)

_IN_PLANE_TOL = 1e-9


@dataclass(frozen=True)
class UrgTable:
    """Dense (cell, pair) -> TDOA table built by the uniform-grid procedure."""

    region: SearchRegion
    array: MicArray
    chi: np.ndarray        # (n_cells, n_pairs) int32, samples
    max_lags: np.ndarray   # (n_pairs,) int32, T_n per pair

    @property
    def n_cells(self) -> int:
        return self.chi.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.chi.shape[1]


@dataclass(frozen=True)
class TdoaLut:
    """GSG look-up tables, one entry per traced (cell, pair, TDOA) triple.

    gamma_tau is stored in units of 1/alpha samples so the table stays
    integral under TDOA interpolation.
    """

    region: SearchRegion
    array: MicArray
    alpha: int
    gamma_r: np.ndarray    # (q,) int64 cell indices
    gamma_n: np.ndarray    # (q,) int32 pair indices
    gamma_tau: np.ndarray  # (q,) int32, 1/alpha samples
    q_raw: int             # entries before the consistency constraint
    removed: int           # entries dropped by the constraint
    max_lags: np.ndarray   # (n_pairs,) int32, T_n per pair in samples

    @property
    def q(self) -> int:
        return int(self.gamma_r.shape[0])


@dataclass(frozen=True)
class SensitivityMap:
    """Per-cell count of distinct hyperboloids, zeroed below mu."""

    region: SearchRegion
    delta: np.ndarray      # (n_cells,) int32
    mu: int


@dataclass(frozen=True)
class CoherentGrid:
    """Sorted unique cells surviving the consistency constraint."""

    region: SearchRegion
    cells: np.ndarray      # (n,) int64

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])


@dataclass(frozen=True)
class SensitivityStats:
    threshold: int
    min_nonzero: int
    max_value: int
    mean_nonzero: float
    n_nonzero: int
    high_cells: np.ndarray


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def build_urg(region: SearchRegion, array: MicArray) -> UrgTable:
    """Assign one rounded TDOA per (cell, pair) over the whole lattice."""
    frames = pair_frames(array)
    pts = region.all_points()
    chi = np.empty((region.n_cells, array.n_pairs), dtype=np.int32)
    lags = np.empty(array.n_pairs, dtype=np.int32)
    for n, frame in enumerate(frames):
        chi[:, n] = tdoa_at(pts, frame, array.fs, array.c)
        lags[n] = max_tdoa_samples(frame, array.fs, array.c)
    return UrgTable(region=region, array=array, chi=_freeze(chi), max_lags=_freeze(lags))


def snap_slack_samples(region: SearchRegion, fs: float, c: float, alpha: int) -> float:
    """Delay slack (in 1/alpha samples) allowed by lattice snapping."""
    return np.sqrt(3.0) * region.delta * alpha * fs / c


def _local_ranges(frame: PairFrame, region: SearchRegion):
    """Conservative per-axis bounds of the region in the pair's local frame."""
    loc = frame.to_local(region.corners())
    pad = region.delta
    return loc.min(axis=0) - pad, loc.max(axis=0) + pad


def _axis_steps(lo: float, hi: float, delta: float) -> np.ndarray:
    i0 = int(np.floor(lo / delta))
    i1 = int(np.ceil(hi / delta))
    return np.arange(i0, i1 + 1, dtype=float) * delta


def _require_in_plane(array: MicArray, region: SearchRegion) -> None:
    if np.any(np.abs(array.mics[:, 2] - region.plane_z) > _IN_PLANE_TOL):
        raise ConfigError(
            "2D grid construction requires all microphones in the search plane"
        )


def _finish_trace(local_pts, rows, frame, region, fs, c, alpha, taus):
    """Transform local trace points, snap to the lattice, apply the delay
    tolerance, and deduplicate per hyperboloid.

    Returns (rows, cells) sorted by (tau row, cell index).
    """
    if local_pts.shape[0] == 0:
        return rows.astype(np.int64), np.empty(0, dtype=np.int64)
    cells = region.snap_to_cell(frame.to_global(local_pts))
    ok = cells >= 0
    rows, cells = rows[ok], cells[ok]
    if rows.size:
        pts = region.point_of_cell(cells)
        lag = analytic_delay_m(pts, frame) * alpha * fs / c
        tol = 0.5 + snap_slack_samples(region, fs, c, alpha)
        ok = np.abs(lag - taus[rows]) <= tol
        rows, cells = rows[ok], cells[ok]
    key = rows.astype(np.int64) * region.n_cells + cells
    key = np.unique(key)
    return (key // region.n_cells), (key % region.n_cells)


def _trace_pair_2d(frame, taus, region, fs, c, alpha):
    """Trace all requested TDOA hyperbolas of one pair in the search plane.

    taus are in 1/alpha samples.  Returns (rows, cells) with rows indexing
    into taus, deduplicated per hyperbola.

    Non-degenerate traces skip points landing exactly on the baseline
    axis: every admissible surface meets that line at its vertex, so the
    surfaces pile up there without locally separating space, and counting
    the pile-up would make the axis line spuriously coherent.
    """
    delta = region.delta
    d2 = frame.half_baseline
    lo, hi = _local_ranges(frame, region)
    ys = _axis_steps(lo[1], hi[1], delta)
    xs = _axis_steps(lo[0], hi[0], delta)
    axis_tol = 1e-9 * delta

    a1 = c * taus / (2.0 * alpha * fs)
    a2sq = d2 * d2 - a1 * a1

    rows_acc: list[np.ndarray] = []
    x_acc: list[np.ndarray] = []
    y_acc: list[np.ndarray] = []

    def _emit(rows, xv, yv):
        off_axis = np.abs(yv) > axis_tol
        rows_acc.append(rows[off_axis])
        x_acc.append(xv[off_axis])
        y_acc.append(yv[off_axis])

    # tau = 0: the locus is the perpendicular bisector line x = 0, traced
    # explicitly to avoid the 0 * sqrt form.
    zrows = np.where(taus == 0)[0]
    for r in zrows:
        _emit(np.full(ys.size, r), np.zeros(ys.size), ys)

    # |a1| = d/2: the sheet degenerates to the on-axis ray beyond the
    # nearer microphone; emitted directly, no division performed.
    degen = np.where((taus != 0) & (a2sq <= 0.0))[0]
    for r in degen:
        sgn = np.sign(taus[r])
        keep = (np.sign(xs) == sgn) & (np.abs(xs) >= d2 - 0.5 * delta)
        rows_acc.append(np.full(keep.sum(), r))
        x_acc.append(xs[keep])
        y_acc.append(np.zeros(keep.sum()))

    gen = np.where((taus != 0) & (a2sq > 0.0))[0]
    if gen.size:
        a1g = a1[gen][:, None]
        a2g = np.sqrt(a2sq[gen])[:, None]
        sg = np.sign(taus[gen]).astype(float)[:, None]

        # pass 1: sweep y, solve for x on the tau sheet
        yy = ys[None, :]
        xq = round_half_away(
            sg * np.sqrt((yy * yy / (a2g * a2g) + 1.0) * a1g * a1g) / delta
        ) * delta
        m = (xq >= lo[0]) & (xq <= hi[0])
        rws = np.broadcast_to(gen[:, None], xq.shape)
        yyb = np.broadcast_to(yy, xq.shape)
        _emit(rws[m], xq[m], yyb[m])

        # pass 2: sweep x to keep resolution where the branch runs steep
        xx = xs[None, :]
        inside = (np.sign(xx) == sg) & (np.abs(xx) >= np.abs(a1g))
        rad = np.clip(xx * xx / (a1g * a1g) - 1.0, 0.0, None) * a2g * a2g
        yq = round_half_away(np.sqrt(rad) / delta) * delta
        xxb = np.broadcast_to(xx, yq.shape)
        rws = np.broadcast_to(gen[:, None], yq.shape)
        for sgn in (1.0, -1.0):
            yv = sgn * yq
            m = inside & (yv >= lo[1]) & (yv <= hi[1])
            _emit(rws[m], xxb[m], yv[m])

    rows = np.concatenate(rows_acc) if rows_acc else np.empty(0, dtype=int)
    npts = rows.size
    local = np.zeros((npts, 3))
    if npts:
        local[:, 0] = np.concatenate(x_acc)
        local[:, 1] = np.concatenate(y_acc)
    return _finish_trace(local, rows, frame, region, fs, c, alpha, taus)


def _revolve(x_vals, radii, zs, lo, hi, delta):
    """Rotate (x, radius) hyperbola samples about the local x axis.

    Steps z at the grid resolution and solves y = +-sqrt(r^2 - z^2),
    snapped to the lattice.  Returns stacked (n, 3) local points and the
    indices of the originating (x, radius) samples.
    """
    if x_vals.size == 0:
        return np.empty((0, 3)), np.empty(0, dtype=int)
    axis_tol = 1e-9 * delta
    zz = zs[None, :]
    rr = radii[:, None]
    valid = np.abs(zz) <= rr
    yq = round_half_away(np.sqrt(np.clip(rr * rr - zz * zz, 0.0, None)) / delta) * delta
    xxb = np.broadcast_to(x_vals[:, None], yq.shape)
    src = np.broadcast_to(np.arange(x_vals.size)[:, None], yq.shape)
    pts = []
    idx = []
    for sgn in (1.0, -1.0):
        yv = sgn * yq
        m = valid & (yv >= lo[1]) & (yv <= hi[1])
        # skip points on the baseline axis (see _trace_pair_2d)
        m &= (np.abs(yv) > axis_tol) | (np.abs(zz) > axis_tol)
        pts.append(np.stack([xxb[m], yv[m], np.broadcast_to(zz, yq.shape)[m]], axis=-1))
        idx.append(src[m])
    return np.concatenate(pts), np.concatenate(idx)


def _trace_one_3d(frame, tau, region, fs, c, alpha):
    """Local-frame point cloud of one 3D hyperboloid sheet (unsnapped)."""
    delta = region.delta
    d2 = frame.half_baseline
    lo, hi = _local_ranges(frame, region)
    zs = _axis_steps(lo[2], hi[2], delta)
    xs = _axis_steps(lo[0], hi[0], delta)

    if tau == 0:
        ys = _axis_steps(lo[1], hi[1], delta)
        yy, zz = np.meshgrid(ys, zs, indexing="ij")
        axis_tol = 1e-9 * delta
        keep = (np.abs(yy.ravel()) > axis_tol) | (np.abs(zz.ravel()) > axis_tol)
        pts = np.stack([np.zeros(yy.size), yy.ravel(), zz.ravel()], axis=-1)
        return pts[keep]

    a1 = c * tau / (2.0 * alpha * fs)
    a2sq = d2 * d2 - a1 * a1
    sgn = float(np.sign(tau))
    if a2sq <= 0.0:
        keep = (np.sign(xs) == sgn) & (np.abs(xs) >= d2 - 0.5 * delta)
        xk = xs[keep]
        return np.stack([xk, np.zeros(xk.size), np.zeros(xk.size)], axis=-1)

    a2 = np.sqrt(a2sq)
    # radius sweep out to the region's corner distance in the (y, z) plane
    rho_max = float(np.hypot(max(abs(lo[1]), abs(hi[1])), max(abs(lo[2]), abs(hi[2]))))
    radii = _axis_steps(0.0, rho_max, delta)
    radii = radii[radii >= 0.0]

    xq = round_half_away(sgn * np.sqrt((radii * radii / a2sq + 1.0) * a1 * a1) / delta) * delta
    keep = (xq >= lo[0]) & (xq <= hi[0])
    pts1, _ = _revolve(xq[keep], radii[keep], zs, lo, hi, delta)

    inside = (np.sign(xs) == sgn) & (np.abs(xs) >= abs(a1))
    rad = np.sqrt(np.clip(xs * xs / (a1 * a1) - 1.0, 0.0, None) * a2sq)
    radq = round_half_away(rad / delta) * delta
    pts2, _ = _revolve(xs[inside], radq[inside], zs, lo, hi, delta)
    return np.concatenate([pts1, pts2])


def trace_hyperboloid(
    frame: PairFrame,
    tau: int,
    region: SearchRegion,
    fs: float,
    c: float,
    alpha: int = 1,
) -> np.ndarray:
    """Cells crossed by the discrete hyperboloid of one pair and one TDOA.

    tau is in units of 1/alpha samples and must satisfy
    |tau| <= alpha * T_n.  Returns sorted unique cell indices.
    """
    tn = max_tdoa_samples(frame, fs, c)
    if abs(int(tau)) > alpha * tn:
        raise ValueError(f"tau {tau} outside admissible range +-{alpha * tn}")
    taus = np.array([int(tau)])
    if region.dim == 2:
        _, cells = _trace_pair_2d(frame, taus, region, fs, c, alpha)
    else:
        local = _trace_one_3d(frame, int(tau), region, fs, c, alpha)
        rows = np.zeros(local.shape[0], dtype=int)
        _, cells = _finish_trace(local, rows, frame, region, fs, c, alpha, taus)
    return cells


def build_gsg(
    region: SearchRegion, array: MicArray, alpha: int = 1
) -> tuple[TdoaLut, SensitivityMap, CoherentGrid]:
    """Trace every admissible hyperboloid of every pair and assemble the
    look-up tables, the sensitivity map, and the coherent grid.

    Each (pair, tau) surface contributes at most one count per cell, so
    delta counts distinct hyperboloids.  Cells with fewer than mu
    intersections are discarded together with their table entries.
    """
    if int(alpha) != alpha or alpha < 1:
        raise ConfigError(f"alpha must be an integer >= 1, got {alpha}")
    alpha = int(alpha)
    if region.dim == 2:
        _require_in_plane(array, region)
    mu = 2 if region.dim == 2 else 3

    frames = pair_frames(array)
    fs, c = array.fs, array.c
    lags = np.array(
        [max_tdoa_samples(f, fs, c) for f in frames], dtype=np.int32
    )

    r_parts: list[np.ndarray] = []
    n_parts: list[np.ndarray] = []
    t_parts: list[np.ndarray] = []
    for n, frame in enumerate(frames):
        taus = np.arange(-alpha * lags[n], alpha * lags[n] + 1, dtype=np.int64)
        if region.dim == 2:
            rows, cells = _trace_pair_2d(frame, taus, region, fs, c, alpha)
        else:
            rows_l = []
            cells_l = []
            for r, tau in enumerate(taus):
                local = _trace_one_3d(frame, int(tau), region, fs, c, alpha)
                rr, cc = _finish_trace(
                    local,
                    np.zeros(local.shape[0], dtype=int),
                    frame,
                    region,
                    fs,
                    c,
                    alpha,
                    np.array([tau]),
                )
                rows_l.append(np.full(cc.size, r))
                cells_l.append(cc)
            rows = np.concatenate(rows_l) if rows_l else np.empty(0, dtype=int)
            cells = np.concatenate(cells_l) if cells_l else np.empty(0, dtype=np.int64)
        r_parts.append(cells.astype(np.int64))
        n_parts.append(np.full(cells.size, n, dtype=np.int32))
        t_parts.append(taus[rows].astype(np.int32))

    gamma_r = np.concatenate(r_parts) if r_parts else np.empty(0, dtype=np.int64)
    gamma_n = np.concatenate(n_parts) if n_parts else np.empty(0, dtype=np.int32)
    gamma_tau = np.concatenate(t_parts) if t_parts else np.empty(0, dtype=np.int32)
    q_raw = int(gamma_r.size)

    counts = np.bincount(gamma_r, minlength=region.n_cells).astype(np.int32)
    keep = counts[gamma_r] >= mu
    removed = q_raw - int(keep.sum())
    delta = np.where(counts >= mu, counts, 0).astype(np.int32)

    lut = TdoaLut(
        region=region,
        array=array,
        alpha=alpha,
        gamma_r=_freeze(gamma_r[keep]),
        gamma_n=_freeze(gamma_n[keep]),
        gamma_tau=_freeze(gamma_tau[keep]),
        q_raw=q_raw,
        removed=removed,
        max_lags=_freeze(lags),
    )
    sens = SensitivityMap(region=region, delta=_freeze(delta), mu=mu)
    grid = CoherentGrid(region=region, cells=_freeze(np.unique(lut.gamma_r)))
    return lut, sens, grid


def apply_consistency_constraint(
    lut: TdoaLut, sens: SensitivityMap
) -> tuple[TdoaLut, SensitivityMap, CoherentGrid]:
    """Re-apply the delta >= mu constraint to already-built tables.

    Used to assert idempotence; on tables produced by build_gsg this is a
    no-op apart from object identity.
    """
    counts = np.bincount(lut.gamma_r, minlength=sens.region.n_cells).astype(np.int32)
    keep = counts[lut.gamma_r] >= sens.mu
    removed = int((~keep).sum())
    delta = np.where(counts >= sens.mu, counts, 0).astype(np.int32)
    new_lut = TdoaLut(
        region=lut.region,
        array=lut.array,
        alpha=lut.alpha,
        gamma_r=_freeze(lut.gamma_r[keep]),
        gamma_n=_freeze(lut.gamma_n[keep]),
        gamma_tau=_freeze(lut.gamma_tau[keep]),
        q_raw=lut.q_raw,
        removed=lut.removed + removed,
        max_lags=lut.max_lags,
    )
    new_sens = SensitivityMap(region=sens.region, delta=_freeze(delta), mu=sens.mu)
    grid = CoherentGrid(region=lut.region, cells=_freeze(np.unique(new_lut.gamma_r)))
    return new_lut, new_sens, grid


def sensitivity_stats(sens: SensitivityMap, threshold: int) -> SensitivityStats:
    """Summary of the sensitivity map plus the high-sensitivity cell set.

    The high set is {cells: delta >= max(threshold, 1)}; threshold 0
    therefore returns every covered cell (the coherent grid).
    """
    nz = sens.delta[sens.delta > 0]
    high = np.where((sens.delta >= threshold) & (sens.delta > 0))[0].astype(np.int64)
    if nz.size == 0:
        return SensitivityStats(
            threshold=threshold,
            min_nonzero=0,
            max_value=0,
            mean_nonzero=0.0,
            n_nonzero=0,
            high_cells=_freeze(high),
        )
    return SensitivityStats(
        threshold=threshold,
        min_nonzero=int(nz.min()),
        max_value=int(nz.max()),
        mean_nonzero=float(nz.mean()),
        n_nonzero=int(nz.size),
        high_cells=_freeze(high),
    )
