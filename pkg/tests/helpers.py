"""Shared fixtures-in-spirit for the test suite."""

import numpy as np

from srploc import MicArray, SearchRegion


def ula(m, spacing=0.15, center=(1.0, 0.0), z=0.0):
    offs = (np.arange(m) - (m - 1) / 2.0) * spacing
    return [[center[0] + o, center[1], z] for o in offs]


def square_region(side=2.0, delta=0.1, origin=(0.0, 0.0, 0.0)):
    return SearchRegion(
        origin=np.array(origin), extent=np.array([side, side, 0.0]), delta=delta, dim=2
    )


def small_planar_array(fs=16000):
    return MicArray(mics=[[0.2, 0.0], [0.7, 0.0], [0.45, 0.35]], fs=fs)


def random_planar_array(rng, m=5, fs=44100, lo=0.3, hi=2.7, z=1.5):
    mics = np.column_stack(
        [rng.uniform(lo, hi, m), rng.uniform(lo, hi, m), np.full(m, z)]
    )
    return MicArray(mics=mics, fs=fs)
