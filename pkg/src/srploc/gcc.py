"""Frame-based GCC-PHAT analysis.

Each analysis frame yields one whitened cross-correlation function per
sensor pair, lag-indexed in units of 1/alpha samples over that pair's
admissible range [-alpha*T_n, +alpha*T_n].  The sign convention matches
the geometry module: a source whose pair TDOA is tau produces the GCC
peak at lag tau (validated by the free-field oracle in the test suite).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import MicArray, max_tdoa_samples, pair_frames

# PHAT floor relative to the peak cross-power magnitude
_PHAT_EPS_REL = 1e-12


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FrameSet:
    """One analysis window of all channels, shape (M, L)."""

    samples: np.ndarray
    index: int
    length: int
    hop: int

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]


def frame_stream(signal, length: int, hop: int, window: str = "rect"):
    """Split an (M, n) multichannel stream into FrameSet objects.

    Yields floor((n - length) / hop) + 1 frames; a stream shorter than one
    window yields nothing and emits a warning.  The window ("rect" or
    "hann") is applied identically to all channels.
    """
    sig = np.atleast_2d(np.asarray(signal, dtype=float))
    if sig.shape[0] < 2:
        raise ConfigError("frame_stream needs at least 2 channels")
    if not _is_power_of_two(length):
        raise ConfigError(f"frame length must be a power of two, got {length}")
    if hop < 1:
        raise ConfigError(f"hop must be >= 1, got {hop}")
    n = sig.shape[1]
    if n < length:
        warnings.warn(
            f"stream of {n} samples is shorter than one {length}-sample frame",
            stacklevel=2,
        )
        return
    if window == "rect":
        win = None
    elif window == "hann":
        win = np.hanning(length)
    else:
        raise ConfigError(f"unknown window {window!r}")
    n_frames = (n - length) // hop + 1
    for k in range(n_frames):
        chunk = sig[:, k * hop : k * hop + length]
        if win is not None:
            chunk = chunk * win
        yield FrameSet(samples=chunk, index=k, length=length, hop=hop)


@dataclass(frozen=True)
class GccFunction:
    """Lag-domain GCC-PHAT of one pair, lags in 1/alpha samples."""

    values: np.ndarray     # (2 * max_lag + 1,)
    max_lag: int           # alpha * T_n
    alpha: int
    silent: bool

    def value_at(self, tau):
        """GCC value(s) at lag(s) tau, tau in 1/alpha samples."""
        return self.values[np.asarray(tau) + self.max_lag]

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.max_lag, self.max_lag + 1)

    @property
    def peak_lag(self) -> int:
        return int(np.argmax(self.values)) - self.max_lag


@dataclass(frozen=True)
class GccSet:
    """Per-pair GCC functions of one frame."""

    functions: tuple[GccFunction, ...]
    frame_index: int

    @property
    def n_pairs(self) -> int:
        return len(self.functions)

    @property
    def silent(self) -> bool:
        return all(f.silent for f in self.functions)

    def __getitem__(self, n: int) -> GccFunction:
        return self.functions[n]


def gcc_phat(frame_i, frame_j, max_lag: int, alpha: int = 1) -> GccFunction:
    """PHAT-whitened cross-correlation of two equal-length frames.

    The cross-spectrum is whitened with a floor of 1e-12 times its peak
    magnitude (the unguarded reciprocal blows up on empty bins), inverse
    transformed at alpha times the frame length (frequency zero-padding,
    Nyquist bin split), and truncated to [-max_lag, +max_lag].
    """
    xi = np.asarray(frame_i, dtype=float)
    xj = np.asarray(frame_j, dtype=float)
    if xi.shape != xj.shape or xi.ndim != 1:
        raise ConfigError("gcc_phat expects two equal-length 1-D frames")
    if max_lag < 1:
        raise ConfigError(f"max_lag must be >= 1, got {max_lag}")
    if int(alpha) != alpha or alpha < 1:
        raise ConfigError(f"alpha must be an integer >= 1, got {alpha}")
    alpha = int(alpha)
    L = xi.shape[0]
    n_out = alpha * L
    if 2 * max_lag + 1 > n_out:
        raise ConfigError(f"max_lag {max_lag} exceeds the transform span {n_out}")

    cross = np.fft.rfft(xi) * np.conj(np.fft.rfft(xj))
    peak = np.abs(cross).max()
    if peak == 0.0:
        return GccFunction(
            values=np.zeros(2 * max_lag + 1),
            max_lag=max_lag,
            alpha=alpha,
            silent=True,
        )
    white = cross / np.maximum(np.abs(cross), _PHAT_EPS_REL * peak)
    if alpha > 1 and L % 2 == 0:
        # the old Nyquist bin becomes an interior bin of the longer
        # spectrum; halving it keeps the original samples unchanged
        white = white.copy()
        white[-1] *= 0.5
    cc = np.fft.irfft(white, n=n_out) * alpha
    lags = np.arange(-max_lag, max_lag + 1) % n_out
    return GccFunction(values=cc[lags], max_lag=max_lag, alpha=alpha, silent=False)


def gcc_all_pairs(frames: FrameSet, array: MicArray, alpha: int = 1) -> GccSet:
    """One GCC-PHAT per sensor pair, lag range matched to the pair."""
    if frames.n_channels != array.n_mics:
        raise ConfigError(
            f"frame has {frames.n_channels} channels, array has {array.n_mics} mics"
        )
    funcs = []
    for n, frame in enumerate(pair_frames(array)):
        i, j = array.pairs[n]
        tn = max_tdoa_samples(frame, array.fs, array.c)
        funcs.append(
            gcc_phat(frames.samples[i], frames.samples[j], max_lag=alpha * max(tn, 1), alpha=alpha)
        )
    return GccSet(functions=tuple(funcs), frame_index=frames.index)


class GccSmoother:
    """Optional exponential averaging of GCC functions across frames.

    Off by default everywhere; the localizer consumes single-frame
    instantaneous estimates.
    """

    def __init__(self, forgetting: float = 0.8):
        if not 0.0 < forgetting <= 1.0:
            raise ConfigError("forgetting factor must be in (0, 1]")
        self.forgetting = forgetting
        self._state: list[np.ndarray] | None = None

    def update(self, gcc: GccSet) -> GccSet:
        vals = [f.values for f in gcc.functions]
        if self._state is None:
            self._state = [v.copy() for v in vals]
        else:
            lam = self.forgetting
            self._state = [lam * s + (1 - lam) * v for s, v in zip(self._state, vals)]
        funcs = tuple(
            GccFunction(values=s.copy(), max_lag=f.max_lag, alpha=f.alpha, silent=f.silent)
            for s, f in zip(self._state, gcc.functions)
        )
        return GccSet(functions=funcs, frame_index=gcc.frame_index)


def gcc_to_csv(gcc: GccSet, array: MicArray, path) -> None:
    """Dump all pairs' lag functions to one CSV for debugging."""
    with open(path, "w") as fh:
        fh.write("pair,i,j,lag_units,lag_samples,value\n")
        for n, f in enumerate(gcc.functions):
            i, j = array.pairs[n]
            for lag, v in zip(f.lags, f.values):
                fh.write(f"{n},{i},{j},{lag},{lag / f.alpha:.6g},{v:.9g}\n")
