import numpy as np
import pytest

from srploc import (
    ConfigError,
    MicArray,
    SimScene,
    frame_stream,
    gcc_all_pairs,
    make_pair_frame,
    noise_burst,
    pair_frames,
    synth_freefield,
    synth_ism_lite,
    tdoa_at,
)
from srploc.simulate import image_sources, room_impulse_responses


def _scene(source, room=(3.0, 3.0, 3.0), order=0, absorption=0.5, snr=None, seed=0,
           duration=0.1, fs=16000):
    return SimScene(
        room=np.array(room),
        source=np.array(source),
        signal=noise_burst(duration, fs, seed),
        reflection_order=order,
        absorption=absorption,
        snr_db=snr,
        seed=seed,
    )


class TestSceneValidation:
    def test_source_outside_room(self):
        with pytest.raises(ConfigError):
            _scene([3.5, 1.0, 1.0])

    def test_source_on_wall(self):
        with pytest.raises(ConfigError):
            _scene([0.0, 1.0, 1.0])

    def test_bad_absorption(self):
        with pytest.raises(ConfigError):
            _scene([1, 1, 1], absorption=1.5)

    def test_mics_outside_room(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [4.5, 0.5, 0.5]], fs=16000)
        with pytest.raises(ConfigError):
            synth_freefield(_scene([1, 1, 1]), arr)

    def test_source_coincident_with_mic(self):
        arr = MicArray(mics=[[1.0, 1.0, 1.0], [2.0, 1.0, 1.0]], fs=16000)
        with pytest.raises(ConfigError):
            synth_freefield(_scene([1.0, 1.0, 1.0]), arr)


class TestFreeField:
    def test_equidistant_mics_identical_channels(self):
        arr = MicArray(mics=[[1.0, 0.5, 1.0], [1.0, 1.5, 1.0]], fs=16000)
        ch = synth_freefield(_scene([1.0, 1.0, 1.0], snr=None), arr)
        assert np.array_equal(ch[0], ch[1])

    def test_hand_computed_delay(self):
        # source 1 m from mic A, 2 m from mic B, fs = 34300: 100 samples
        fs = 34300
        arr = MicArray(mics=[[1.0, 1.0, 1.0], [1.0, 4.0, 1.0]], fs=fs)
        scene = _scene([1.0, 2.0, 1.0], room=(6.0, 6.0, 3.0), fs=fs, duration=0.05)
        ch = synth_freefield(scene, arr)
        lag = np.argmax(np.correlate(ch[1], ch[0], mode="full")) - (ch.shape[1] - 1)
        assert lag == 100

    def test_noiseless_flag(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [2.0, 0.5, 0.5]], fs=16000)
        a = synth_freefield(_scene([1, 1, 1], snr=None), arr)
        b = synth_freefield(_scene([1, 1, 1], snr=np.inf), arr)
        assert np.array_equal(a, b)

    def test_noise_seeded_and_independent(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [2.0, 0.5, 0.5]], fs=16000)
        a = synth_freefield(_scene([1, 1, 1], snr=10.0, seed=3), arr)
        b = synth_freefield(_scene([1, 1, 1], snr=10.0, seed=3), arr)
        c = synth_freefield(_scene([1, 1, 1], snr=10.0, seed=4), arr)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_snr_level(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [2.0, 0.5, 0.5]], fs=16000)
        clean = synth_freefield(_scene([1, 1, 1], snr=None, duration=2.0), arr)
        noisy = synth_freefield(_scene([1, 1, 1], snr=10.0, duration=2.0), arr)
        noise = noisy - clean
        snr = 10 * np.log10(np.mean(clean[0] ** 2) / np.mean(noise[0] ** 2))
        assert snr == pytest.approx(10.0, abs=0.5)

    def test_requires_order_zero(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [2.0, 0.5, 0.5]], fs=16000)
        with pytest.raises(ConfigError):
            synth_freefield(_scene([1, 1, 1], order=1), arr)


class TestImageSourceModel:
    def test_order_zero_equals_freefield(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [2.0, 0.7, 0.5]], fs=16000)
        scene = _scene([1, 1, 1], order=0, snr=5.0, seed=11)
        assert np.array_equal(synth_freefield(scene, arr), synth_ism_lite(scene, arr))

    def test_fully_absorbing_walls_equal_freefield(self):
        arr = MicArray(mics=[[0.5, 0.5, 0.5], [2.0, 0.7, 0.5]], fs=16000)
        free = synth_freefield(_scene([1, 1, 1], order=0, absorption=1.0, seed=2), arr)
        absorbed = synth_ism_lite(_scene([1, 1, 1], order=1, absorption=1.0, seed=2), arr)
        assert np.array_equal(absorbed, free)

    def test_hand_enumerated_first_order_images(self):
        scene = _scene([1.0, 1.0, 1.0], room=(4.0, 3.0, 3.0), order=1)
        images = {(round(p[0], 9), round(p[1], 9), round(p[2], 9)): c
                  for p, c in image_sources(scene)}
        expected = {
            (1.0, 1.0, 1.0): 0,
            (-1.0, 1.0, 1.0): 1, (7.0, 1.0, 1.0): 1,
            (1.0, -1.0, 1.0): 1, (1.0, 5.0, 1.0): 1,
            (1.0, 1.0, -1.0): 1, (1.0, 1.0, 5.0): 1,
        }
        assert images == expected

    def test_first_order_image_amplitudes(self):
        # the residual RIR (order 1 minus order 0) must equal the sum of
        # one fractional-delay pulse per hand-enumerated image, each with
        # amplitude 0.5 / image-distance
        fs = 16000
        arr = MicArray(mics=[[2.0, 1.3, 1.7], [2.5, 1.4, 1.6]], fs=fs)
        src = [1.0, 0.9, 1.2]
        s1 = _scene(src, room=(4.0, 3.0, 3.0), order=1, absorption=0.5, fs=fs)
        s0 = _scene(src, room=(4.0, 3.0, 3.0), order=0, absorption=0.5, fs=fs)
        r1 = room_impulse_responses(s1, arr)
        r0 = room_impulse_responses(s0, arr)
        resid = r1[0].copy()
        resid[: r0.shape[1]] -= r0[0]

        hand_images = [  # mirrored across each of the six walls
            [-src[0], src[1], src[2]], [8.0 - src[0], src[1], src[2]],
            [src[0], -src[1], src[2]], [src[0], 6.0 - src[1], src[2]],
            [src[0], src[1], -src[2]], [src[0], src[1], 6.0 - src[2]],
        ]
        mic = arr.mics[0]
        expected = np.zeros_like(resid)
        half = 32
        for pos in hand_images:
            d = float(np.linalg.norm(np.asarray(pos) - mic))
            t = d * fs / 343.0
            k = np.arange(int(round(t)) - half, int(round(t)) + half + 1)
            arg = k - t
            win = 0.5 * (1.0 + np.cos(np.pi * arg / (half + 1)))
            expected[k] += 0.5 / d * np.sinc(arg) * win
        assert np.abs(resid - expected).max() < 1e-12

    def test_tail_energy_monotone_in_absorption(self):
        arr = MicArray(mics=[[0.7, 0.8, 1.2], [2.2, 1.9, 1.6]], fs=16000)
        energies = []
        for a in (0.1, 0.4, 0.7, 0.95):
            scene = _scene([1.3, 1.1, 1.4], room=(3.5, 3.0, 3.0), order=2,
                           absorption=a, seed=7)
            full = synth_ism_lite(scene, arr)
            direct = synth_ism_lite(_scene([1.3, 1.1, 1.4], room=(3.5, 3.0, 3.0),
                                           order=0, absorption=a, seed=7), arr)
            n = direct.shape[1]
            tail = full.copy()
            tail[:, :n] -= direct
            energies.append(float(np.sum(tail**2)))
        assert all(e1 >= e2 for e1, e2 in zip(energies, energies[1:]))

    def test_freefield_delay_fidelity_over_random_scenes(self):
        # measured inter-channel delay matches geometry within one sample
        rng = np.random.default_rng(31)
        fs = 16000
        room = np.array([3.0, 3.0, 3.0])
        for _ in range(100):
            mics = np.column_stack(
                [rng.uniform(0.3, 2.7, 3), rng.uniform(0.3, 2.7, 3), rng.uniform(0.5, 2.5, 3)]
            )
            if min(np.linalg.norm(mics[i] - mics[j], axis=0)
                   for i in range(3) for j in range(i + 1, 3)) < 0.05:
                continue
            arr = MicArray(mics=mics, fs=fs)
            src = rng.uniform(0.3, 2.7, 3)
            if np.min(np.linalg.norm(mics - src, axis=1)) < 0.2:
                continue
            scene = SimScene(room=room, source=src,
                             signal=noise_burst(0.15, fs, int(rng.integers(2**31))),
                             snr_db=None, seed=0)
            ch = synth_freefield(scene, arr)
            (frames,) = frame_stream(ch[:, :2048], 2048, 2048)
            gcc = gcc_all_pairs(frames, arr)
            for n, fr in enumerate(pair_frames(arr)):
                expected = int(tdoa_at(src, fr, arr.fs, arr.c))
                assert abs(gcc[n].peak_lag - expected) <= 1
