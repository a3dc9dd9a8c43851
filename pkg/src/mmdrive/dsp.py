"""Range/doppler processing: raw IF cubes to the three radar features.

A frame is reduced to
  * range profile   - dB power per range bin of the coherent sum of all chirps
                      (zero doppler, full integration gain),
  * noise profile   - dB power per range bin at the maximum-doppler row, which
                      for a quiet cabin is the receiver noise floor,
  * range-doppler   - dB power over (doppler_bins x range_bins).

The fast-time FFT is Hann-windowed and truncated to the configured range
bins; the slow-time FFT runs over every ``chirp_decimation``-th chirp and is
fft-shifted so the centre row is zero doppler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radar import RadarConfig
from .simulate import RawCube

#: Power floor: 10*log10(|X|^2 + EPS) clamped here, avoiding -inf on silence.
DB_FLOOR = -120.0
_POWER_EPS = 1e-12


def power_db(x: np.ndarray) -> np.ndarray:
    """Linear complex amplitude to clamped dB power."""
    return np.maximum(10.0 * np.log10(np.abs(x) ** 2 + _POWER_EPS), DB_FLOOR)


@dataclass(frozen=True)
class RadarFrame:
    """One processed 5 fps measurement (all values finite, dB-floored)."""

    range_profile: np.ndarray   # (range_bins,)
    noise_profile: np.ndarray   # (range_bins,)
    range_doppler: np.ndarray   # (doppler_bins, range_bins)
    timestamp: float
    frame_index: int

    def __post_init__(self) -> None:
        rb = self.range_profile.shape[0]
        if self.noise_profile.shape != (rb,):
            raise ValueError("range and noise profiles must have equal length")
        if self.range_doppler.ndim != 2 or self.range_doppler.shape[1] != rb:
            raise ValueError("range-doppler width must match the profiles")

    @property
    def feature_size(self) -> int:
        """Total feature dimensionality (1152 for the default 64/16 profile)."""
        return self.range_profile.size + self.noise_profile.size + self.range_doppler.size


def range_fft(cube: RawCube, config: RadarConfig, window: bool = True) -> np.ndarray:
    """Per-chirp fast-time FFT, truncated to the configured range bins.

    Returns a complex (chirps_per_frame, range_bins) matrix. A Hann window
    tames range sidelobes; disable it for energy-conservation checks.
    """
    x = cube.samples
    expected = (config.chirps_per_frame, config.samples_per_chirp)
    if x.shape != expected:
        raise ValueError(f"cube shape {x.shape} does not match config {expected}")
    if window:
        x = x * np.hanning(config.samples_per_chirp)[None, :]
    spectrum = np.fft.fft(x, axis=1)
    return spectrum[:, : config.range_bins]


def doppler_fft(range_spectra: np.ndarray, config: RadarConfig) -> np.ndarray:
    """Slow-time FFT over the decimated chirps, fft-shifted.

    The input is the full (chirps_per_frame, range_bins) range spectrum;
    every ``chirp_decimation``-th chirp feeds a ``doppler_bins``-point FFT per
    range bin. Row ``doppler_bins/2`` of the result is zero doppler and a row
    maps to velocity (row - doppler_bins/2) * velocity_resolution.
    """
    if range_spectra.shape[0] != config.chirps_per_frame:
        raise ValueError(
            f"expected {config.chirps_per_frame} chirp rows, "
            f"got {range_spectra.shape[0]}"
        )
    decimated = range_spectra[:: config.chirp_decimation, :]
    spectrum = np.fft.fft(decimated, axis=0)
    return np.fft.fftshift(spectrum, axes=0)


def extract_features(cube: RawCube, config: RadarConfig,
                     timestamp: float) -> RadarFrame:
    """Full per-frame feature set from one raw cube.

    The range profile integrates all chirps coherently (maximum zero-doppler
    gain); the noise profile is the fft-shifted row 0, i.e. the maximum
    unambiguous doppler bin, where a quiet scene shows only the noise floor.
    """
    spectra = range_fft(cube, config)
    heatmap = doppler_fft(spectra, config)
    range_profile = power_db(spectra.sum(axis=0))
    noise_profile = power_db(heatmap[0, :])
    range_doppler = power_db(heatmap)
    return RadarFrame(
        range_profile=range_profile,
        noise_profile=noise_profile,
        range_doppler=range_doppler,
        timestamp=timestamp,
        frame_index=cube.frame_index,
    )


def process_drive(cubes, config: RadarConfig) -> list[RadarFrame]:
    """Convert a drive's raw cubes into frames, timestamping at frame starts."""
    return [
        extract_features(cube, config, timestamp=cube.frame_index * config.frame_period)
        for cube in cubes
    ]
