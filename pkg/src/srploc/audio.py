"""Multichannel WAV input/output.

Channel order in files equals microphone order in the configuration.
Integer formats are normalized to [-1, 1); floats pass through.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError


def read_wav(path) -> tuple[int, np.ndarray]:
    """Read a PCM WAV (16/24/32-bit int or float) as (fs, (M, n) float64).

    scipy delivers 24-bit data left-justified in int32, so the int32
    scaling below covers both widths.
    """
    fs, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        out = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        out = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        out = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        out = data.astype(np.float64)
    else:
        raise ConfigError(f"unsupported WAV sample format {data.dtype}")
    return int(fs), out.T.copy()


def write_wav(path, fs: int, channels) -> None:
    """Write (M, n) float channels as a 32-bit float WAV."""
    ch = np.atleast_2d(np.asarray(channels, dtype=np.float32))
    wavfile.write(path, int(fs), ch.T.copy())
