"""Shared fixtures and brute-force oracles used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from mmdrive.activities import ActivityLabel
from mmdrive.radar import RadarConfig
from mmdrive.simulate import RawCube, Reflector, Scene


@pytest.fixture(scope="session")
def config() -> RadarConfig:
    return RadarConfig()


class ConstantVelocity:
    """Trajectory component moving at a fixed radial speed."""

    def __init__(self, velocity: float):
        self.velocity = velocity

    def eval(self, t: float):
        return self.velocity * t, self.velocity

    @property
    def peak_velocity(self) -> float:
        return abs(self.velocity)


def point_scene(distance: float, velocity: float = 0.0,
                reflectivity: float = 1.0, duration: float = 2.0,
                seed: int = 1) -> Scene:
    """Single point reflector at a given distance and constant speed."""
    motions = (ConstantVelocity(velocity),) if velocity else ()
    reflector = Reflector(rest_distance=distance, motions=motions,
                          reflectivity=reflectivity)
    return Scene(activity=ActivityLabel.NORMAL, reflectors=(reflector,),
                 duration=duration, seed=seed)


def dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def naive_range_fft(cube: RawCube, cfg: RadarConfig,
                    window: bool = True) -> np.ndarray:
    """O(n^2) DFT per chirp, truncated to the range bins."""
    x = cube.samples
    if window:
        x = x * np.hanning(cfg.samples_per_chirp)[None, :]
    return (x @ dft_matrix(cfg.samples_per_chirp))[:, : cfg.range_bins]


def naive_doppler_fft(range_spectra: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """O(n^2) slow-time DFT over decimated chirps, manually centre-shifted."""
    y = range_spectra[:: cfg.chirp_decimation, :]
    d = cfg.doppler_bins
    spectrum = dft_matrix(d) @ y
    return np.concatenate([spectrum[d // 2:], spectrum[: d // 2]], axis=0)
