"""Signal synthesis: free field and a simplified image-source room model.

Channels are rendered by convolving the source with per-microphone
impulse responses made of fractional-delay taps (65-tap windowed sinc),
so simulated TDOAs are not quantized before the localizer quantizes
them.  The image-source model is order/absorption-controlled: each
reflection multiplies the image amplitude by (1 - absorption), and every
image is attenuated by 1/distance.  Order 0 is exactly the free-field
model (same code path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError
from .geometry import MicArray

SINC_HALF_WIDTH = 32  # 65 taps = interpolation order 64
_MIN_SOURCE_MIC_DIST = 1e-6


@dataclass(frozen=True)
class SimScene:
    """A rectangular room with one static source.

    The room occupies [0, extent] on each axis.  snr_db = None (or inf)
    means noiseless.  Reflection order 0 reproduces the free-field model
    bit for bit.
    """

    room: np.ndarray            # (3,) meters
    source: np.ndarray          # (3,) meters
    signal: np.ndarray          # source samples
    reflection_order: int = 0
    absorption: float = 0.5
    snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        room = np.asarray(self.room, dtype=float).reshape(3)
        source = np.asarray(self.source, dtype=float).reshape(3)
        signal = np.asarray(self.signal, dtype=float).reshape(-1)
        if np.any(room <= 0):
            raise ConfigError("room extent must be positive on all axes")
        if self.reflection_order < 0:
            raise ConfigError("reflection order must be >= 0")
        if not 0.0 <= self.absorption <= 1.0:
            raise ConfigError(f"absorption must be in [0, 1], got {self.absorption}")
        if np.any(source <= 0) or np.any(source >= room):
            raise ConfigError("source must be strictly inside the room")
        if signal.size == 0:
            raise ConfigError("source signal is empty")
        for arr, name in ((room, "room"), (source, "source"), (signal, "signal")):
            arr.setflags(write=False)
        object.__setattr__(self, "room", room)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "signal", signal)


def _check_mics_inside(scene: SimScene, array: MicArray) -> None:
    if np.any(array.mics <= 0) or np.any(array.mics >= scene.room):
        raise ConfigError("all microphones must be strictly inside the room")


def _axis_images(coord: float, length: float, order: int):
    """Image coordinates along one axis with their reflection counts."""
    out = []
    n_max = order // 2 + 1
    for n in range(-n_max, n_max + 1):
        for mirrored in (False, True):
            pos = 2.0 * n * length + (-coord if mirrored else coord)
            count = abs(2 * n - 1) if mirrored else 2 * abs(n)
            if count <= order:
                out.append((pos, count))
    return out


def image_sources(scene: SimScene) -> list[tuple[np.ndarray, int]]:
    """All image positions with total reflection counts up to the order."""
    per_axis = [
        _axis_images(scene.source[ax], scene.room[ax], scene.reflection_order)
        for ax in range(3)
    ]
    images = []
    for px, cx in per_axis[0]:
        for py, cy in per_axis[1]:
            if cx + cy > scene.reflection_order:
                continue
            for pz, cz in per_axis[2]:
                count = cx + cy + cz
                if count <= scene.reflection_order:
                    images.append((np.array([px, py, pz]), count))
    return images


def _sinc_taps(delay_samples: float):
    """Tap positions and windowed-sinc weights for one fractional delay."""
    center = int(round(delay_samples))
    k = np.arange(center - SINC_HALF_WIDTH, center + SINC_HALF_WIDTH + 1)
    arg = k - delay_samples
    window = 0.5 * (1.0 + np.cos(math.pi * arg / (SINC_HALF_WIDTH + 1)))
    taps = np.sinc(arg) * window
    valid = k >= 0
    return k[valid], taps[valid]


def room_impulse_responses(scene: SimScene, array: MicArray) -> np.ndarray:
    """(M, rir_len) fractional-delay RIRs for the configured image set."""
    _check_mics_inside(scene, array)
    fs, c = array.fs, array.c
    beta = 1.0 - scene.absorption
    # zero-amplitude images are dropped entirely so a fully absorbing
    # room reproduces the free-field render bit for bit
    images = [(pos, count) for pos, count in image_sources(scene) if beta**count > 0.0]

    max_delay = 0.0
    dists = []
    for mic in array.mics:
        row = []
        for pos, count in images:
            d = float(np.linalg.norm(pos - mic))
            if count == 0 and d < _MIN_SOURCE_MIC_DIST:
                raise ConfigError("source coincides with a microphone")
            row.append(d)
            max_delay = max(max_delay, d * fs / c)
        dists.append(row)

    rir_len = int(round(max_delay)) + SINC_HALF_WIDTH + 1
    rirs = np.zeros((array.n_mics, rir_len))
    for m in range(array.n_mics):
        for (pos, count), d in zip(images, dists[m]):
            amp = beta**count / max(d, _MIN_SOURCE_MIC_DIST)
            k, taps = _sinc_taps(d * fs / c)
            rirs[m, k] += amp * taps
    return rirs


def _render(scene: SimScene, array: MicArray) -> np.ndarray:
    rirs = room_impulse_responses(scene, array)
    out_len = scene.signal.size + rirs.shape[1] - 1
    channels = np.empty((array.n_mics, out_len))
    for m in range(array.n_mics):
        channels[m] = fftconvolve(scene.signal, rirs[m])
    return channels


def _direct_only(scene: SimScene) -> SimScene:
    return SimScene(
        room=scene.room,
        source=scene.source,
        signal=scene.signal,
        reflection_order=0,
        absorption=scene.absorption,
        snr_db=None,
        seed=scene.seed,
    )


def _add_noise(channels: np.ndarray, direct: np.ndarray, scene: SimScene) -> np.ndarray:
    """Per-channel white noise at the configured direct-path SNR."""
    if scene.snr_db is None or math.isinf(scene.snr_db):
        return channels
    rng = np.random.default_rng([int(scene.seed) & 0x7FFFFFFF, 0x5EED])
    out = channels.copy()
    n = channels.shape[1]
    for m in range(channels.shape[0]):
        p_direct = float(np.mean(direct[m] ** 2))
        sigma = math.sqrt(p_direct / (10.0 ** (scene.snr_db / 10.0)))
        out[m] += sigma * rng.standard_normal(n)
    return out


def synth_freefield(scene: SimScene, array: MicArray) -> np.ndarray:
    """Direct-path-only channels: exact fractional delay, 1/distance gain,
    plus independent white noise at the configured SNR."""
    if scene.reflection_order != 0:
        raise ConfigError("synth_freefield requires reflection_order == 0")
    direct = _render(scene, array)
    return _add_noise(direct, direct, scene)


def synth_ism_lite(scene: SimScene, array: MicArray) -> np.ndarray:
    """Image-source rendering up to the configured reflection order.

    Order 0 equals synth_freefield bit for bit; noise power is always
    referenced to the direct path alone.
    """
    channels = _render(scene, array)
    if scene.reflection_order == 0:
        direct = channels
    else:
        direct = _render(_direct_only(scene), array)
    return _add_noise(channels, direct, scene)


def noise_burst(duration_s: float, fs: float, seed: int) -> np.ndarray:
    """Seeded white-noise source signal of the given duration."""
    n = int(round(duration_s * fs))
    if n < 1:
        raise ConfigError("noise burst duration too short")
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, 0xB125])
    return rng.standard_normal(n)
