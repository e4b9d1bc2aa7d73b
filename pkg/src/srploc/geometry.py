"""Microphone-array geometry, search-region lattice, and TDOA evaluation.

Conventions used throughout the package:

* positions are 3-vectors in meters (planar setups put everything at a
  common z plane, typically z = 0),
* the TDOA of pair (i, j) at a point p is
  round[(||p - r_i|| - ||p - r_j||) * fs / c] in samples, so a positive
  value means the wavefront reaches microphone j first,
* "round" is round-half-away-from-zero and "fix" truncates toward zero;
  half-sample ties change grid membership, so both are pinned explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError

DEFAULT_SPEED_OF_SOUND = 343.0

# Lattice counts use floor(extent / delta); an epsilon guards against the
# float quotient of an exact multiple landing just below the integer.
_COUNT_EPS = 1e-9


def round_half_away(x):
    """Round to nearest integer with halves away from zero (vectorized)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def enumerate_pairs(n_mics: int) -> list[tuple[int, int]]:
    """All unordered sensor pairs (i, j), i < j, in lexicographic order."""
    if n_mics < 2:
        raise ConfigError(f"need at least 2 microphones, got {n_mics}")
    return [(i, j) for i in range(n_mics - 1) for j in range(i + 1, n_mics)]


def _as_positions(mics) -> np.ndarray:
    pos = np.asarray(mics, dtype=float)
    if pos.ndim != 2 or pos.shape[0] < 1:
        raise ConfigError("microphone positions must be a (M, 2) or (M, 3) array")
    if pos.shape[1] == 2:
        pos = np.hstack([pos, np.zeros((pos.shape[0], 1))])
    if pos.shape[1] != 3:
        raise ConfigError(f"positions must have 2 or 3 coordinates, got {pos.shape[1]}")
    return pos


@dataclass(frozen=True)
class MicArray:
    """Microphone positions plus the sampling and propagation constants.

    `pairs` is derived deterministically from the microphone count; the
    instance is immutable after construction.
    """

    mics: np.ndarray
    fs: float
    c: float = DEFAULT_SPEED_OF_SOUND
    pairs: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        pos = _as_positions(self.mics)
        if not np.all(np.isfinite(pos)):
            raise ConfigError("microphone positions must be finite")
        if self.fs <= 0:
            raise ConfigError(f"fs must be positive, got {self.fs}")
        if self.c <= 0:
            raise ConfigError(f"speed of sound must be positive, got {self.c}")
        pairs = enumerate_pairs(pos.shape[0])
        for i, j in pairs:
            if np.linalg.norm(pos[i] - pos[j]) <= 0.0:
                raise ConfigError(f"microphones {i} and {j} are coincident")
        pos.setflags(write=False)
        object.__setattr__(self, "mics", pos)
        object.__setattr__(self, "pairs", tuple(pairs))

    @property
    def n_mics(self) -> int:
        return self.mics.shape[0]

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def pair_positions(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.pairs[n]
        return self.mics[i], self.mics[j]

    def pair_distance(self, n: int) -> float:
        ri, rj = self.pair_positions(n)
        return float(np.linalg.norm(rj - ri))


@dataclass(frozen=True)
class SearchRegion:
    """Axis-aligned search volume discretized on a half-open lattice.

    Lattice points sit at origin + i * delta with i in [0, floor(extent /
    delta)); the origin is included and origin + extent excluded, so a
    2 m x 2 m region at delta = 0.1 yields a 20 x 20 grid.  dim = 2 forces
    a single z plane at origin_z regardless of extent_z.
    """

    origin: np.ndarray
    extent: np.ndarray
    delta: float
    dim: int = 3

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(3).copy()
        extent = np.asarray(self.extent, dtype=float).reshape(3).copy()
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not (np.all(np.isfinite(origin)) and np.all(np.isfinite(extent))):
            raise ConfigError("region origin/extent must be finite")
        if np.any(extent[: self.dim] <= 0):
            raise ConfigError("region extent must be positive on active axes")
        origin.setflags(write=False)
        extent.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", extent)

    @property
    def shape(self) -> tuple[int, int, int]:
        counts = np.floor(self.extent / self.delta + _COUNT_EPS).astype(int)
        counts = np.maximum(counts, 1)
        if self.dim == 2:
            counts[2] = 1
        return int(counts[0]), int(counts[1]), int(counts[2])

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    def cell_of_indices(self, ix, iy, iz):
        nx, ny, nz = self.shape
        return (np.asarray(ix) * ny + np.asarray(iy)) * nz + np.asarray(iz)

    def indices_of_cell(self, cell):
        nx, ny, nz = self.shape
        cell = np.asarray(cell)
        iz = cell % nz
        iy = (cell // nz) % ny
        ix = cell // (nz * ny)
        return ix, iy, iz

    def point_of_cell(self, cell) -> np.ndarray:
        """Lattice point(s) of integer cell index/indices, shape (..., 3)."""
        ix, iy, iz = self.indices_of_cell(cell)
        idx = np.stack([ix, iy, iz], axis=-1).astype(float)
        return self.origin + idx * self.delta

    def all_points(self) -> np.ndarray:
        """All lattice points in cell-index order, shape (n_cells, 3)."""
        return self.point_of_cell(np.arange(self.n_cells))

    def snap_to_cell(self, points) -> np.ndarray:
        """Nearest lattice cell for each point, -1 when outside the region.

        Ties at half-cell distance resolve toward the lower (more negative)
        index, which keeps rotated-lattice snapping deterministic.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        t = (pts - self.origin) / self.delta
        idx = np.ceil(t - 0.5).astype(np.int64)
        nx, ny, nz = self.shape
        ok = (
            (idx[:, 0] >= 0) & (idx[:, 0] < nx)
            & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
            & (idx[:, 2] >= 0) & (idx[:, 2] < nz)
        )
        cells = np.where(ok, self.cell_of_indices(idx[:, 0], idx[:, 1], idx[:, 2]), -1)
        return cells[0] if single else cells

    def cell_of_point(self, point) -> int:
        """Cell index of a single point, -1 when outside."""
        return int(self.snap_to_cell(np.asarray(point, dtype=float).reshape(1, 3))[0])

    def corners(self) -> np.ndarray:
        """The 8 corners of the region box (4 distinct ones when flat)."""
        ext = self.extent.copy()
        if self.dim == 2:
            ext[2] = 0.0
        offs = np.array(
            [[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
        )
        return self.origin + offs * ext

    @property
    def plane_z(self) -> float:
        """The single z plane searched in 2D mode."""
        return float(self.origin[2])


@dataclass(frozen=True)
class PairFrame:
    """Local coordinate frame of a sensor pair.

    The frame translates to the baseline midpoint and rotates so the
    baseline lies on the local x axis: mic i maps to (-d/2, 0, 0) and mic j
    to (+d/2, 0, 0).  Rows of `rotation` are the local axes expressed in
    global coordinates.
    """

    pair: tuple[int, int]
    translation: np.ndarray
    rotation: np.ndarray
    half_baseline: float

    def to_local(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts - self.translation) @ self.rotation.T

    def to_global(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation + self.translation

    @property
    def mic_i(self) -> np.ndarray:
        return self.to_global(np.array([-self.half_baseline, 0.0, 0.0]))

    @property
    def mic_j(self) -> np.ndarray:
        return self.to_global(np.array([self.half_baseline, 0.0, 0.0]))


def make_pair_frame(array: MicArray, pair_index: int) -> PairFrame:
    """Build the local frame of a pair.

    The rotation about the baseline is a free choice (hyperboloids are
    rotationally symmetric about it); the completion picks the canonical
    basis vector of smallest index that is not nearly parallel to the
    baseline, which makes the frame deterministic.
    """
    ri, rj = array.pair_positions(pair_index)
    d = np.linalg.norm(rj - ri)
    u = (rj - ri) / d
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        if abs(float(np.dot(u, e))) < 0.9:
            break
    v = e - float(np.dot(u, e)) * u
    v = v / np.linalg.norm(v)
    w = np.cross(u, v)
    rot = np.vstack([u, v, w])
    rot.setflags(write=False)
    t = 0.5 * (ri + rj)
    t.setflags(write=False)
    return PairFrame(
        pair=array.pairs[pair_index],
        translation=t,
        rotation=rot,
        half_baseline=float(d / 2.0),
    )


def pair_frames(array: MicArray) -> list[PairFrame]:
    return [make_pair_frame(array, n) for n in range(array.n_pairs)]


def max_tdoa_samples(frame: PairFrame, fs: float, c: float) -> int:
    """Largest admissible integer TDOA: fix(d * fs / c)."""
    if fs <= 0 or c <= 0:
        raise ConfigError("fs and c must be positive")
    return int(np.trunc(2.0 * frame.half_baseline * fs / c))


def analytic_delay_m(points, frame: PairFrame) -> np.ndarray:
    """Unrounded path-length difference ||p - r_i|| - ||p - r_j|| in meters."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    di = np.linalg.norm(pts - frame.mic_i, axis=-1)
    dj = np.linalg.norm(pts - frame.mic_j, axis=-1)
    return di - dj


def tdoa_at(points, frame: PairFrame, fs: float, c: float) -> np.ndarray:
    """Integer-sample TDOA of point(s) for a pair, clamped to [-T_n, T_n].

    Rounding can exceed fix(d * fs / c) by one on the baseline extension
    (e.g. 6.997 rounds to 7 while T_n = 6), so the result is clamped to
    keep every value admissible.
    """
    tn = max_tdoa_samples(frame, fs, c)
    val = round_half_away(analytic_delay_m(points, frame) * fs / c)
    out = np.clip(val, -tn, tn).astype(np.int64)
    if np.asarray(points).ndim == 1:
        return out[0]
    return out


# ---------------------------------------------------------------------------
# config I/O


def load_config(path) -> dict:
    with open(path, "r") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} did not parse to a mapping")
    return cfg


def array_from_config(cfg: dict) -> MicArray:
    try:
        sec = cfg["array"]
        mics = sec["mics"]
        fs = float(sec["fs"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config missing array section field: {exc}") from exc
    c = float(sec.get("c", DEFAULT_SPEED_OF_SOUND))
    return MicArray(mics=mics, fs=fs, c=c)


def region_from_config(cfg: dict) -> SearchRegion:
    try:
        sec = cfg["region"]
        origin = [float(v) for v in sec["origin"]]
        extent = [float(v) for v in sec["extent"]]
        delta = float(sec["delta"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config missing region section field: {exc}") from exc
    dim = int(sec.get("dim", 3))
    while len(origin) < 3:
        origin.append(0.0)
    while len(extent) < 3:
        extent.append(0.0)
    return SearchRegion(origin=np.array(origin), extent=np.array(extent), delta=delta, dim=dim)


def _fmt(x: float) -> float:
    # round-trip through 12 significant digits keeps >= 9 significant
    # digits in the serialized decimal form
    return float(f"{x:.12g}")


def save_geometry_config(path, array: MicArray, region: SearchRegion) -> None:
    """Write array + region back to YAML with full-precision positions."""
    doc = {
        "array": {
            "fs": _fmt(array.fs),
            "c": _fmt(array.c),
            "mics": [[_fmt(v) for v in row] for row in array.mics],
        },
        "region": {
            "origin": [_fmt(v) for v in region.origin],
            "extent": [_fmt(v) for v in region.extent],
            "delta": _fmt(region.delta),
            "dim": region.dim,
        },
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
