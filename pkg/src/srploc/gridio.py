"""Serialization of grid tables.

Binary container: magic "SRPG", format version, table kind, a SHA-256
digest of the canonical geometry description (verified on load), the
geometry itself, and little-endian arrays.  CSV exports exist for
inspection; sensitivity and power maps also export to 16-bit PGM
(row-major, y increasing northward, most significant byte first as the
format requires).
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import ConfigError
from .geometry import MicArray, SearchRegion
from .grids import CoherentGrid, SensitivityMap, TdoaLut, UrgTable

MAGIC = b"SRPG"
VERSION = 1
KIND_URG = 0
KIND_GSG = 1


def geometry_digest(region: SearchRegion, array: MicArray, alpha: int) -> bytes:
    parts = [f"{v:.17g}" for v in np.concatenate([region.origin, region.extent])]
    parts += [f"{region.delta:.17g}", str(region.dim)]
    parts += [f"{v:.17g}" for v in array.mics.ravel()]
    parts += [f"{array.fs:.17g}", f"{array.c:.17g}", str(alpha)]
    return hashlib.sha256("|".join(parts).encode()).digest()


def _write_geometry(fh, region: SearchRegion, array: MicArray, alpha: int):
    fh.write(struct.pack("<3d", *region.origin))
    fh.write(struct.pack("<3d", *region.extent))
    fh.write(struct.pack("<dB", region.delta, region.dim))
    fh.write(struct.pack("<I", array.n_mics))
    fh.write(array.mics.astype("<f8").tobytes())
    fh.write(struct.pack("<ddI", array.fs, array.c, alpha))


def _read_geometry(fh):
    origin = struct.unpack("<3d", fh.read(24))
    extent = struct.unpack("<3d", fh.read(24))
    delta, dim = struct.unpack("<dB", fh.read(9))
    (n_mics,) = struct.unpack("<I", fh.read(4))
    mics = np.frombuffer(fh.read(24 * n_mics), dtype="<f8").reshape(n_mics, 3)
    fs, c, alpha = struct.unpack("<ddI", fh.read(20))
    region = SearchRegion(
        origin=np.array(origin), extent=np.array(extent), delta=delta, dim=int(dim)
    )
    array = MicArray(mics=mics.copy(), fs=fs, c=c)
    return region, array, int(alpha)


def _write_array(fh, arr: np.ndarray, dtype: str):
    data = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(struct.pack("<Q", data.size))
    fh.write(data.tobytes())


def _read_array(fh, dtype: str) -> np.ndarray:
    (n,) = struct.unpack("<Q", fh.read(8))
    item = np.dtype(dtype).itemsize
    return np.frombuffer(fh.read(n * item), dtype=dtype).copy()


def save_urg(path, table: UrgTable) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HB", VERSION, KIND_URG))
        fh.write(geometry_digest(table.region, table.array, 1))
        _write_geometry(fh, table.region, table.array, 1)
        _write_array(fh, table.max_lags, "<i4")
        _write_array(fh, table.chi.ravel(), "<i4")


def save_gsg(path, lut: TdoaLut, sens: SensitivityMap, grid: CoherentGrid) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HB", VERSION, KIND_GSG))
        fh.write(geometry_digest(lut.region, lut.array, lut.alpha))
        _write_geometry(fh, lut.region, lut.array, lut.alpha)
        fh.write(struct.pack("<QQB", lut.q_raw, lut.removed, sens.mu))
        _write_array(fh, lut.max_lags, "<i4")
        _write_array(fh, lut.gamma_r, "<i8")
        _write_array(fh, lut.gamma_n, "<i4")
        _write_array(fh, lut.gamma_tau, "<i4")
        _write_array(fh, sens.delta, "<i4")
        _write_array(fh, grid.cells, "<i8")


def _open_and_check(path, expected_kind):
    fh = open(path, "rb")
    magic = fh.read(4)
    if magic != MAGIC:
        fh.close()
        raise ConfigError(f"{path}: not a grid table file")
    version, kind = struct.unpack("<HB", fh.read(3))
    if version != VERSION:
        fh.close()
        raise ConfigError(f"{path}: unsupported table version {version}")
    if kind != expected_kind:
        fh.close()
        raise ConfigError(f"{path}: wrong table kind {kind}")
    digest = fh.read(32)
    return fh, digest


def load_urg(path) -> UrgTable:
    fh, digest = _open_and_check(path, KIND_URG)
    with fh:
        region, array, alpha = _read_geometry(fh)
        if digest != geometry_digest(region, array, alpha):
            raise ConfigError(f"{path}: geometry digest mismatch")
        lags = _read_array(fh, "<i4")
        chi = _read_array(fh, "<i4").reshape(region.n_cells, array.n_pairs)
    return UrgTable(region=region, array=array, chi=chi, max_lags=lags)


def load_gsg(path) -> tuple[TdoaLut, SensitivityMap, CoherentGrid]:
    fh, digest = _open_and_check(path, KIND_GSG)
    with fh:
        region, array, alpha = _read_geometry(fh)
        if digest != geometry_digest(region, array, alpha):
            raise ConfigError(f"{path}: geometry digest mismatch")
        q_raw, removed, mu = struct.unpack("<QQB", fh.read(17))
        lags = _read_array(fh, "<i4")
        gamma_r = _read_array(fh, "<i8")
        gamma_n = _read_array(fh, "<i4")
        gamma_tau = _read_array(fh, "<i4")
        delta = _read_array(fh, "<i4")
        cells = _read_array(fh, "<i8")
    lut = TdoaLut(
        region=region,
        array=array,
        alpha=alpha,
        gamma_r=gamma_r,
        gamma_n=gamma_n,
        gamma_tau=gamma_tau,
        q_raw=int(q_raw),
        removed=int(removed),
        max_lags=lags,
    )
    sens = SensitivityMap(region=region, delta=delta, mu=int(mu))
    grid = CoherentGrid(region=region, cells=cells)
    return lut, sens, grid


def urg_to_csv(path, table: UrgTable) -> None:
    with open(path, "w") as fh:
        fh.write("cell,pair,tau\n")
        for n in range(table.n_pairs):
            col = table.chi[:, n]
            for cell, tau in enumerate(col):
                fh.write(f"{cell},{n},{tau}\n")


def lut_to_csv(path, lut: TdoaLut) -> None:
    with open(path, "w") as fh:
        fh.write("q,cell,pair,tau_units,alpha\n")
        for q in range(lut.q):
            fh.write(
                f"{q},{lut.gamma_r[q]},{lut.gamma_n[q]},{lut.gamma_tau[q]},{lut.alpha}\n"
            )


def map_to_csv(path, region: SearchRegion, cells, values, value_name="value") -> None:
    """Generic cell-map CSV with lattice indices and positions."""
    ix, iy, iz = region.indices_of_cell(np.asarray(cells))
    pts = region.point_of_cell(np.asarray(cells))
    with open(path, "w") as fh:
        fh.write(f"cell,ix,iy,iz,x,y,z,{value_name}\n")
        for k, cell in enumerate(np.asarray(cells)):
            fh.write(
                f"{cell},{ix[k]},{iy[k]},{iz[k]},"
                f"{pts[k, 0]:.9g},{pts[k, 1]:.9g},{pts[k, 2]:.9g},{values[k]:.9g}\n"
            )


def sensitivity_to_csv(path, sens: SensitivityMap) -> None:
    cells = np.arange(sens.region.n_cells)
    map_to_csv(path, sens.region, cells, sens.delta, value_name="delta")


def map_to_pgm(path, region: SearchRegion, values, iz: int = 0, maxval: int | None = None):
    """Write one z-slice of a dense cell map as 16-bit PGM.

    Rows run from the largest y down (north up); columns follow x.
    Values are scaled to the full 16-bit range unless maxval pins the
    scale.
    """
    nx, ny, nz = region.shape
    if not 0 <= iz < nz:
        raise ConfigError(f"slice {iz} outside [0, {nz})")
    dense = np.asarray(values, dtype=float).reshape(nx, ny, nz)[:, :, iz]
    top = float(dense.max()) if maxval is None else float(maxval)
    if top <= 0:
        top = 1.0
    img = np.clip(dense / top * 65535.0, 0, 65535).astype(">u2")
    # dense[ix, iy] -> rows of decreasing iy, columns of increasing ix
    rows = img.T[::-1, :]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode())
        fh.write(rows.tobytes())


def sensitivity_to_pgm(path, sens: SensitivityMap, iz: int = 0) -> None:
    map_to_pgm(path, sens.region, sens.delta, iz=iz, maxval=max(int(sens.delta.max()), 1))
