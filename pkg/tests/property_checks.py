"""Property checks shared by the property suite and the acceptance suite.

Each check raises AssertionError on violation and returns a short
human-readable summary on success.
"""

import numpy as np

from srploc import (
    MicArray,
    SearchRegion,
    analytic_delay_m,
    apply_consistency_constraint,
    argmax_policy,
    build_gsg,
    frame_stream,
    gcc_all_pairs,
    make_pair_frame,
    max_tdoa_samples,
    srp_gsg,
    tdoa_at,
    trace_hyperboloid,
)
from srploc.gcc import GccFunction, GccSet
from srploc.grids import CoherentGrid, TdoaLut, snap_slack_samples
from srploc.localize import PowerMap, _gsg_accumulate_entries, _gsg_accumulate_grouped


def check_form_equivalence(seed=123, rounds=25, tol=1e-12):
    """Per-entry and pair-grouped GSG accumulation agree to `tol`."""
    rng = np.random.default_rng(seed)
    region = SearchRegion(
        origin=np.zeros(3), extent=np.array([1.0, 1.0, 0.0]), delta=0.1, dim=2
    )
    array = MicArray(mics=[[0.2, 0.0], [0.7, 0.0], [0.45, 0.35]], fs=16000)
    worst = 0.0
    for _ in range(rounds):
        q = int(rng.integers(1, 300))
        max_lags = [5, 8, 11]
        cells = rng.integers(0, region.n_cells, q)
        pairs = rng.integers(0, 3, q)
        taus = np.array([rng.integers(-max_lags[p], max_lags[p] + 1) for p in pairs])
        lut = TdoaLut(
            region=region, array=array, alpha=1,
            gamma_r=cells.astype(np.int64), gamma_n=pairs.astype(np.int32),
            gamma_tau=taus.astype(np.int32), q_raw=q, removed=0,
            max_lags=np.array(max_lags, np.int32),
        )
        grid_cells = np.unique(cells)
        gcc = GccSet(
            functions=tuple(
                GccFunction(values=rng.standard_normal(2 * m + 1), max_lag=m,
                            alpha=1, silent=False)
                for m in max_lags
            ),
            frame_index=0,
        )
        slots = np.searchsorted(grid_cells, lut.gamma_r)
        a = _gsg_accumulate_entries(gcc, lut, slots, grid_cells.size)
        b = _gsg_accumulate_grouped(gcc, lut, slots, grid_cells.size)
        worst = max(worst, float(np.abs(a - b).max()))
        assert worst <= tol, f"form mismatch {worst} > {tol}"
    return f"form equivalence: worst |diff| {worst:.2e} <= {tol}"


def check_argmax_scale_equivariance(seed=7, rounds=50):
    rng = np.random.default_rng(seed)
    region = SearchRegion(
        origin=np.zeros(3), extent=np.array([1.0, 1.0, 0.0]), delta=0.1, dim=2
    )
    for _ in range(rounds):
        n = int(rng.integers(2, 60))
        cells = np.sort(rng.choice(region.n_cells, size=n, replace=False)).astype(np.int64)
        vals = rng.standard_normal(n)
        scale = float(10.0 ** rng.uniform(-6, 6))
        pm1 = PowerMap(region=region, cells=cells, values=vals, backend="gsg", frame_index=0)
        pm2 = PowerMap(region=region, cells=cells, values=vals * scale, backend="gsg", frame_index=0)
        assert argmax_policy(pm1).cell == argmax_policy(pm2).cell
    return f"argmax scale equivariance: {rounds} random maps"


def _small_build():
    region = SearchRegion(
        origin=np.zeros(3), extent=np.array([1.0, 1.0, 0.0]), delta=0.05, dim=2
    )
    array = MicArray(mics=[[0.2, 0.0], [0.7, 0.0], [0.45, 0.35]], fs=16000)
    return region, array, build_gsg(region, array)


def check_constraint_idempotence():
    region, array, (lut, sens, grid) = _small_build()
    lut2, sens2, grid2 = apply_consistency_constraint(lut, sens)
    assert np.array_equal(lut2.gamma_r, lut.gamma_r)
    assert np.array_equal(lut2.gamma_n, lut.gamma_n)
    assert np.array_equal(lut2.gamma_tau, lut.gamma_tau)
    assert np.array_equal(sens2.delta, sens.delta)
    assert np.array_equal(grid2.cells, grid.cells)
    return "constraint idempotence: re-pruning is a no-op"


def check_delta_lut_consistency():
    region, array, (lut, sens, grid) = _small_build()
    counts = np.bincount(lut.gamma_r, minlength=region.n_cells)
    assert np.array_equal(counts, sens.delta)
    assert int(sens.delta.sum()) == lut.q
    nz = sens.delta[sens.delta > 0]
    assert np.all(nz >= sens.mu)
    assert np.array_equal(grid.cells, np.unique(lut.gamma_r))
    return f"delta/LUT consistency: q={lut.q}, mu={sens.mu}"


def check_seeded_determinism():
    region, array, (lut_a, sens_a, _) = _small_build()
    _, _, (lut_b, sens_b, _) = _small_build()
    assert lut_a.gamma_r.tobytes() == lut_b.gamma_r.tobytes()
    assert lut_a.gamma_tau.tobytes() == lut_b.gamma_tau.tobytes()
    assert sens_a.delta.tobytes() == sens_b.delta.tobytes()

    # end-to-end: identical GCC input produces identical maps
    sig = np.random.default_rng(9).standard_normal((3, 4096))
    (frames,) = frame_stream(sig, 4096, 4096)
    gcc = gcc_all_pairs(frames, array)
    grid = CoherentGrid(region=region, cells=np.unique(lut_a.gamma_r))
    pm1, est1 = srp_gsg(gcc, lut_a, grid)
    pm2, est2 = srp_gsg(gcc, lut_b, grid)
    assert pm1.values.tobytes() == pm2.values.tobytes()
    assert est1.cell == est2.cell
    return "seeded determinism: byte-identical tables and maps"


def check_trace_oracle():
    """Small-instance trace vs. exhaustive-lattice oracle.

    Soundness: every traced cell's analytic delay lies within half a
    sample plus the lattice-snap slack of the traced TDOA (exhaustive
    check over all pairs and TDOAs).  Coverage: at least 99% of the
    exhaustive cells (chi == tau) lying within half a cell of the
    continuous surface have a traced cell within one cell of them.
    (Covering the full chi == tau set is impossible by construction: the
    rounded-TDOA bands are areas while traces are curves; full coverage
    would force 100% grid coverage, contradicting the coverage table.)
    """
    configs = [
        ([[0.2, 0.0], [0.7, 0.0], [0.45, 0.35]], 16000, [0, 0, 0], [0.5, 0.5, 0], 0.01),
        ([[0.1, 0.1], [0.52, 0.41]], 24000, [0, 0, 0], [0.5, 0.5, 0], 0.01),
        ([[0.2, 0.0], [0.8, 0.2]], 8000, [0, 0, 0], [2.0, 2.0, 0], 0.05),
    ]
    total_near = 0
    total_missed = 0
    for mics, fs, origin, extent, delta in configs:
        arr = MicArray(mics=mics, fs=fs)
        region = SearchRegion(
            origin=np.array(origin, float), extent=np.array(extent, float),
            delta=delta, dim=2,
        )
        assert max(region.shape[:2]) <= 50
        pts = region.all_points()
        tol = 0.5 + snap_slack_samples(region, fs, arr.c, 1)
        for n in range(arr.n_pairs):
            fr = make_pair_frame(arr, n)
            tn = max_tdoa_samples(fr, fs, arr.c)
            chi = tdoa_at(pts, fr, fs, arr.c)
            a2_d = fr.half_baseline
            for tau in range(-tn, tn + 1):
                traced = trace_hyperboloid(fr, tau, region, fs, arr.c, 1)
                if traced.size:
                    lag = analytic_delay_m(region.point_of_cell(traced), fr) * fs / arr.c
                    assert np.all(np.abs(lag - tau) <= tol + 1e-9), (
                        f"trace outside delay band: pair {n} tau {tau}"
                    )
                exh = np.where(chi == tau)[0]
                if exh.size == 0:
                    continue
                near = _near_surface_cells(region, fr, exh, tau, fs, arr.c, delta)
                if near.size == 0:
                    continue
                total_near += near.size
                if traced.size == 0:
                    total_missed += near.size
                    continue
                ixn, iyn, _ = region.indices_of_cell(near)
                ixt, iyt, _ = region.indices_of_cell(traced)
                for k in range(near.size):
                    cheb = np.min(
                        np.maximum(np.abs(ixt - ixn[k]), np.abs(iyt - iyn[k]))
                    )
                    if cheb > 1:
                        total_missed += 1
    frac = 1.0 - total_missed / max(total_near, 1)
    assert frac >= 0.99, f"trace coverage {100 * frac:.2f}% < 99%"
    return (
        f"trace oracle: soundness exhaustive, coverage {100 * frac:.2f}% "
        f"of {total_near} near-surface cells"
    )


def _near_surface_cells(region, frame, cells, tau, fs, c, delta):
    """Exhaustive cells within half a cell of the continuous surface,
    excluding points on the baseline axis (skipped by design)."""
    loc = frame.to_local(region.point_of_cell(cells))
    off_axis = np.abs(loc[:, 1]) > 1e-9
    a1 = c * tau / (2.0 * fs)
    d2 = frame.half_baseline
    a2sq = d2 * d2 - a1 * a1
    if tau == 0:
        dist = np.abs(loc[:, 0])
    elif a2sq <= 0:
        return np.empty(0, dtype=np.int64)
    else:
        fx = np.sign(tau) * np.sqrt((loc[:, 1] ** 2 / a2sq + 1.0) * a1 * a1)
        dx = np.abs(loc[:, 0] - fx)
        rad = loc[:, 0] ** 2 / (a1 * a1) - 1.0
        fy = np.sqrt(np.clip(rad, 0.0, None) * a2sq)
        dy = np.where(rad >= 0, np.abs(np.abs(loc[:, 1]) - fy), np.inf)
        on_sheet = np.sign(loc[:, 0]) == np.sign(tau)
        dist = np.where(on_sheet, np.minimum(dx, dy), np.inf)
    return cells[off_axis & (dist <= delta / 2.0)]


ALL_CHECKS = (
    check_form_equivalence,
    check_argmax_scale_equivariance,
    check_constraint_idempotence,
    check_delta_lut_consistency,
    check_seeded_determinism,
    check_trace_oracle,
)
