"""FMCW radar configuration and derived waveform quantities.

The default configuration mirrors a 60 GHz automotive-cabin radar profile:
3.75 cm range gates over 64 range bins (2.4 m unambiguous range), 16 doppler
bins spanning roughly +/-1 m/s at 0.13 m/s resolution, 64 chirps per frame at
5 frames per second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SPEED_OF_LIGHT = 299_792_458.0  # m/s

#: Range gate spacing of the default profile (m).
DEFAULT_RANGE_RESOLUTION = 0.0375


@dataclass(frozen=True)
class RadarConfig:
    """Physical and sampling parameters of one FMCW radar profile.

    All derived quantities (wavelength, resolutions, slope) are computed from
    the stored fields, so a config is fully described by its constructor
    arguments and is safe to share between threads.
    """

    start_frequency: float = 60e9          # Hz
    bandwidth: float = SPEED_OF_LIGHT / (2.0 * DEFAULT_RANGE_RESOLUTION)  # Hz
    chirp_time: float = 300e-6             # s, chirp-to-chirp spacing T_C
    chirps_per_frame: int = 64
    samples_per_chirp: int = 256           # ADC samples spanning one chirp
    frames_per_second: float = 5.0
    range_bins: int = 64
    doppler_bins: int = 16
    max_velocity: float = 1.0              # m/s, scene-construction speed cap

    def __post_init__(self) -> None:
        if self.bandwidth <= 0 or self.start_frequency <= 0 or self.chirp_time <= 0:
            raise ValueError("start_frequency, bandwidth and chirp_time must be positive")
        if self.range_bins < 1 or self.range_bins > self.samples_per_chirp:
            raise ValueError(
                f"range_bins must lie in [1, samples_per_chirp]; "
                f"got {self.range_bins} with {self.samples_per_chirp} samples"
            )
        if self.doppler_bins < 2 or self.chirps_per_frame % self.doppler_bins != 0:
            raise ValueError(
                f"chirps_per_frame ({self.chirps_per_frame}) must be a multiple "
                f"of doppler_bins ({self.doppler_bins})"
            )
        if self.max_velocity > self.unambiguous_velocity + 1e-12:
            raise ValueError(
                f"max_velocity {self.max_velocity} exceeds the unambiguous "
                f"velocity {self.unambiguous_velocity:.4f} of this waveform"
            )

    # -- derived waveform quantities ------------------------------------

    @property
    def wavelength(self) -> float:
        """Carrier wavelength lambda = c / f0 (m)."""
        return SPEED_OF_LIGHT / self.start_frequency

    @property
    def range_resolution(self) -> float:
        """Range gate spacing c / (2 B) (m)."""
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def max_range(self) -> float:
        """Unambiguous range covered by the kept range bins (m)."""
        return self.range_bins * self.range_resolution

    @property
    def slope(self) -> float:
        """Chirp slope S = B / T_C (Hz/s)."""
        return self.bandwidth / self.chirp_time

    @property
    def chirp_decimation(self) -> int:
        """Slow-time decimation factor: every n-th chirp feeds the doppler FFT."""
        return self.chirps_per_frame // self.doppler_bins

    @property
    def doppler_chirp_spacing(self) -> float:
        """Time between the chirps entering the doppler FFT (s)."""
        return self.chirp_time * self.chirp_decimation

    @property
    def velocity_resolution(self) -> float:
        """Doppler bin width lambda / (2 N T) over the decimated chirps (m/s)."""
        return self.wavelength / (2.0 * self.doppler_bins * self.doppler_chirp_spacing)

    @property
    def unambiguous_velocity(self) -> float:
        """Largest alias-free radial speed lambda / (4 T) (m/s)."""
        return self.wavelength / (4.0 * self.doppler_chirp_spacing)

    @property
    def frame_period(self) -> float:
        """Time between frame starts (s)."""
        return 1.0 / self.frames_per_second

    @property
    def sample_rate(self) -> float:
        """Fast-time ADC rate (Hz); one chirp spans samples_per_chirp samples."""
        return self.samples_per_chirp / self.chirp_time

    @property
    def zero_doppler_row(self) -> int:
        """Row index of zero doppler in the fft-shifted heatmap."""
        return self.doppler_bins // 2

    def velocity_of_row(self, row: int) -> float:
        """Radial velocity mapped to a fft-shifted doppler row."""
        return (row - self.zero_doppler_row) * self.velocity_resolution

    def range_of_bin(self, bin_index: int) -> float:
        """Distance at the centre of a range bin (m)."""
        return bin_index * self.range_resolution


#: Default cabin-radar profile used throughout the toolkit.
DEFAULT_CONFIG = RadarConfig()
