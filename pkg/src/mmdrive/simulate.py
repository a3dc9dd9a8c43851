"""Synthetic FMCW cabin-radar measurements of driver activities.

Scenes are built from point reflectors following parametric trajectories
(rest distance, excursion pulses, oscillations) whose parameters are drawn
from seeded generators, so every (activity, seed) pair reproduces the same
motion. Raw intermediate-frequency cubes are synthesised per frame with the
stop-and-hop approximation: the reflector distance is held constant within a
chirp and advanced chirp to chirp, which makes the chirp-to-chirp phase
increment exactly 4*pi*v*T_C/lambda.

The activity templates are documented in docs/kinematics.md.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .activities import ActivityLabel
from .radar import SPEED_OF_LIGHT, RadarConfig

#: Gravity baseline of the accelerometer z axis (m/s^2).
GRAVITY = 9.81

#: Accelerometer sample rate of simulated drives (Hz).
IMU_RATE = 100.0

#: Duration of the whole-body displacement transient after a road bump (s).
BUMP_TRANSIENT_SECONDS = 0.4

#: The IMU jolt sits in the middle of the displacement transient.
BUMP_JOLT_OFFSET = BUMP_TRANSIENT_SECONDS / 2.0

_IMU_NOISE_STD = 0.03          # m/s^2
_BUMP_JOLT_AMPLITUDE = 6.0     # m/s^2
_BUMP_JOLT_WIDTH = 0.03        # s, gaussian envelope sigma
_BUMP_JOLT_FREQ = 12.0         # Hz
_BUMP_WOBBLE_AMPLITUDE = 0.008  # m, coherent body sway during a bump
_BUMP_WOBBLE_FREQ = 6.0        # Hz
_BUMP_JITTER_STD = 1.2e-4      # m, per-chirp broadband displacement


# ---------------------------------------------------------------------------
# motion components
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SineMotion:
    """Sinusoidal displacement about the rest distance."""

    amplitude: float
    frequency: float
    phase: float = 0.0

    def eval(self, t: float) -> tuple[float, float]:
        w = 2.0 * math.pi * self.frequency
        return (
            self.amplitude * math.sin(w * t + self.phase),
            self.amplitude * w * math.cos(w * t + self.phase),
        )

    @property
    def peak_velocity(self) -> float:
        return abs(self.amplitude) * 2.0 * math.pi * self.frequency


@dataclass(frozen=True)
class PulseMotion:
    """Periodic excursion-and-return: raised-cosine ramp out, hold, ramp back.

    Positive amplitude moves away from the radar. The motion is C1 smooth, so
    velocities stay bounded by amplitude*pi/(2*move_time).
    """

    amplitude: float
    period: float
    move_time: float
    hold_time: float
    offset: float = 0.0

    def __post_init__(self) -> None:
        if 2.0 * self.move_time + self.hold_time > self.period + 1e-9:
            raise ValueError("pulse move/hold times exceed the pulse period")

    def eval(self, t: float) -> tuple[float, float]:
        s = (t - self.offset) % self.period
        a, tm, th = self.amplitude, self.move_time, self.hold_time
        if s < tm:  # ramp out
            u = s / tm
            return a * 0.5 * (1.0 - math.cos(math.pi * u)), \
                a * math.pi * math.sin(math.pi * u) / (2.0 * tm)
        if s < tm + th:  # hold at full excursion
            return a, 0.0
        if s < 2.0 * tm + th:  # ramp back
            u = (s - tm - th) / tm
            return a * 0.5 * (1.0 + math.cos(math.pi * u)), \
                -a * math.pi * math.sin(math.pi * u) / (2.0 * tm)
        return 0.0, 0.0  # idle until the next cycle

    @property
    def peak_velocity(self) -> float:
        return abs(self.amplitude) * math.pi / (2.0 * self.move_time)


@dataclass(frozen=True)
class StepMotion:
    """Piecewise-constant velocity segments (abrupt steering corrections)."""

    times: tuple[float, ...]       # segment start times, times[0] == 0
    velocities: tuple[float, ...]  # one velocity per segment
    positions: tuple[float, ...]   # displacement at each segment start

    @classmethod
    def build(cls, rng: np.random.Generator, duration: float,
              band: float, speed_range: tuple[float, float]) -> "StepMotion":
        """Random quiet/correction pattern staying within +/-band metres."""
        times, vels, poss = [0.0], [0.0], [0.0]
        t, x = 0.0, 0.0
        while t < duration:
            t += rng.uniform(0.35, 0.85)  # quiet stretch before a correction
            # jump to a target on the far side of the band, at a fixed speed
            if x >= 0:
                target = rng.uniform(-band, max(-0.1 * band, x - 0.06))
            else:
                target = rng.uniform(min(0.1 * band, x + 0.06), band)
            speed = rng.uniform(*speed_range)
            burst = abs(target - x) / speed
            times.append(t)
            vels.append((target - x) / burst)
            poss.append(x)
            t += burst
            x = target
            times.append(t)
            vels.append(0.0)
            poss.append(x)
        return cls(tuple(times), tuple(vels), tuple(poss))

    def eval(self, t: float) -> tuple[float, float]:
        i = bisect_right(self.times, t) - 1
        i = max(0, min(i, len(self.times) - 1))
        return self.positions[i] + self.velocities[i] * (t - self.times[i]), \
            self.velocities[i]

    @property
    def peak_velocity(self) -> float:
        return max(abs(v) for v in self.velocities)


# ---------------------------------------------------------------------------
# reflectors and scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reflector:
    """Point reflector: rest distance plus summed motion components.

    ``at(t)`` returns (distance m, radial velocity m/s, reflectivity >= 0).
    Reflectivity can dip with excursion (a turned torso scatters less) and
    carry a periodic wobble (head turning while talking).
    """

    rest_distance: float
    motions: tuple[object, ...] = ()
    reflectivity: float = 1.0
    excursion_dim: float = 0.0        # fractional dip at full excursion
    excursion_scale: float = 1.0      # excursion magnitude mapped to full dip
    wobble: tuple[float, float, float] | None = None  # (depth, freq, phase)

    def at(self, t: float) -> tuple[float, float, float]:
        disp = 0.0
        vel = 0.0
        for m in self.motions:
            d, v = m.eval(t)
            disp += d
            vel += v
        amp = self.reflectivity
        if self.excursion_dim > 0.0:
            frac = min(1.0, abs(disp) / self.excursion_scale)
            amp *= 1.0 - self.excursion_dim * frac
        if self.wobble is not None:
            depth, freq, phase = self.wobble
            amp *= 1.0 - depth * (0.5 + 0.5 * math.sin(2.0 * math.pi * freq * t + phase))
        return self.rest_distance + disp, vel, amp

    @property
    def peak_velocity(self) -> float:
        return sum(m.peak_velocity for m in self.motions)


@dataclass(frozen=True)
class Scene:
    """One driver-activity recording: immutable reflector set plus metadata."""

    activity: ActivityLabel
    reflectors: tuple[Reflector, ...]
    duration: float
    seed: int

    def __post_init__(self) -> None:
        if not self.reflectors:
            raise ValueError("a scene needs at least one reflector")


_ACTIVITY_ORDER = list(ActivityLabel)


def _scene_rng(activity: ActivityLabel, seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, _ACTIVITY_ORDER.index(activity)])


def _micro_jitter(rng: np.random.Generator, scale: float = 1.0) -> tuple[SineMotion, ...]:
    """Breathing/posture jitter present on every torso."""
    a = rng.uniform(0.002, 0.005) * scale
    f = rng.uniform(0.2, 0.45)
    return (
        SineMotion(a, f, rng.uniform(0.0, 2.0 * math.pi)),
        SineMotion(0.4 * a, 2.3 * f, rng.uniform(0.0, 2.0 * math.pi)),
    )


def make_scene(activity: ActivityLabel, duration: float, seed: int,
               config: RadarConfig | None = None) -> Scene:
    """Build the reflector trajectories for one activity segment.

    The primary torso reflector rests near 0.6 m from the dashboard; the
    activity template modulates it (excursion pulses for macro movements,
    small oscillations for micro movements). SteeringAnomaly adds a hand
    reflector with abrupt velocity steps. Velocities are capped below the
    waveform's unambiguous speed by construction.
    """
    if not isinstance(activity, ActivityLabel):
        raise ValueError(f"unknown activity: {activity!r}")
    if duration <= 0:
        raise ValueError("scene duration must be positive")
    config = config or RadarConfig()
    rng = _scene_rng(activity, seed)
    rest = rng.uniform(0.575, 0.615)
    base_refl = rng.uniform(0.85, 1.2)
    motions: list[object] = list(_micro_jitter(rng, 0.6))
    kwargs: dict = {}
    reflectors: list[Reflector] = []

    if activity is ActivityLabel.NORMAL:
        motions = list(_micro_jitter(rng, 1.0))
    elif activity is ActivityLabel.NODDING:
        move = rng.uniform(0.25, 0.32)
        motions.append(PulseMotion(
            amplitude=-rng.uniform(0.09, 0.13),
            period=rng.uniform(0.78, 1.02),
            move_time=move,
            hold_time=rng.uniform(0.08, 0.15),
        ))
    elif activity is ActivityLabel.YAWNING:
        motions.append(PulseMotion(
            amplitude=rng.uniform(0.03, 0.05),
            period=rng.uniform(1.8, 2.6),
            move_time=rng.uniform(0.5, 0.7),
            hold_time=rng.uniform(0.05, 0.15),
        ))
    elif activity is ActivityLabel.DRINKING:
        motions.append(PulseMotion(
            amplitude=-rng.uniform(0.05, 0.08),
            period=rng.uniform(2.6, 3.4),
            move_time=rng.uniform(0.5, 0.7),
            hold_time=rng.uniform(0.9, 1.3),
        ))
        motions.append(SineMotion(rng.uniform(0.006, 0.01),
                                  rng.uniform(0.25, 0.4),
                                  rng.uniform(0.0, 2.0 * math.pi)))
    elif activity is ActivityLabel.PICKING_DROPS:
        motions.append(PulseMotion(
            amplitude=rng.uniform(0.30, 0.38),
            period=rng.uniform(2.0, 2.5),
            move_time=rng.uniform(0.65, 0.78),
            hold_time=rng.uniform(0.25, 0.4),
        ))
    elif activity is ActivityLabel.FETCHING_FORWARD:
        motions.append(PulseMotion(
            amplitude=-rng.uniform(0.18, 0.24),
            period=rng.uniform(1.5, 1.9),
            move_time=rng.uniform(0.42, 0.52),
            hold_time=rng.uniform(0.25, 0.4),
        ))
    elif activity is ActivityLabel.TURNING_BACK:
        amp = rng.uniform(0.10, 0.15)
        motions.append(PulseMotion(
            amplitude=amp,
            period=rng.uniform(2.8, 3.5),
            move_time=rng.uniform(0.45, 0.6),
            hold_time=rng.uniform(1.2, 1.6),
        ))
        kwargs = dict(excursion_dim=0.45, excursion_scale=amp)
    elif activity is ActivityLabel.USING_PHONE:
        motions.append(PulseMotion(
            amplitude=-rng.uniform(0.05, 0.07),
            period=rng.uniform(6.0, 8.0),
            move_time=rng.uniform(0.5, 0.7),
            hold_time=rng.uniform(4.0, 5.0),
        ))
        motions.append(SineMotion(rng.uniform(0.012, 0.02),
                                  rng.uniform(0.6, 0.9),
                                  rng.uniform(0.0, 2.0 * math.pi)))
    elif activity is ActivityLabel.TALKING_LEFT:
        motions.append(SineMotion(rng.uniform(0.02, 0.03),
                                  rng.uniform(0.4, 0.6),
                                  rng.uniform(0.0, 2.0 * math.pi)))
        kwargs = dict(wobble=(0.3, rng.uniform(0.4, 0.6),
                              rng.uniform(0.0, 2.0 * math.pi)))
    elif activity is ActivityLabel.STEERING_ANOMALY:
        hand = Reflector(
            rest_distance=rng.uniform(0.38, 0.48),
            motions=(StepMotion.build(rng, duration, band=0.1,
                                      speed_range=(0.35, 0.65)),),
            reflectivity=rng.uniform(0.5, 0.75),
        )
        reflectors.append(hand)

    torso = Reflector(rest_distance=rest, motions=tuple(motions),
                      reflectivity=base_refl, **kwargs)
    reflectors.insert(0, torso)
    _check_speed_cap(reflectors, config)
    return Scene(activity=activity, reflectors=tuple(reflectors),
                 duration=duration, seed=seed)


def _check_speed_cap(reflectors: list[Reflector], config: RadarConfig) -> None:
    for r in reflectors:
        if r.peak_velocity > config.max_velocity:
            raise ValueError(
                f"reflector peak velocity {r.peak_velocity:.3f} m/s exceeds "
                f"the {config.max_velocity} m/s cap"
            )


# ---------------------------------------------------------------------------
# IF-sample synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawCube:
    """Complex IF samples of one frame, shape (chirps_per_frame, samples_per_chirp)."""

    samples: np.ndarray
    frame_index: int

    def __post_init__(self) -> None:
        if self.samples.ndim != 2:
            raise ValueError("raw cube must be a 2-D chirps x samples array")


def synthesize_frame(scene: Scene, config: RadarConfig, frame_index: int,
                     snr_db: float | None = 20.0,
                     disturbance: np.ndarray | None = None) -> RawCube:
    """Synthesize the IF cube of one frame.

    Each reflector at distance d and radial velocity v contributes, per chirp,
    a complex tone at beat frequency S*2d/c plus the carrier phase 4*pi*d/lambda;
    the stop-and-hop distance update d_n = d + v*n*T_C gives the exact
    chirp-to-chirp phase increment 4*pi*v*T_C/lambda. White complex noise is
    added at ``snr_db`` relative to unit reflectivity (None = noiseless).
    ``disturbance`` optionally adds a per-chirp displacement (metres) shared by
    all reflectors, used for road-bump transients.
    """
    t0 = frame_index * config.frame_period
    if frame_index < 0 or t0 >= scene.duration:
        raise IndexError(
            f"frame {frame_index} at t={t0:.2f}s is outside the "
            f"{scene.duration:.2f}s scene"
        )
    n_chirps, n_samples = config.chirps_per_frame, config.samples_per_chirp
    if disturbance is not None and disturbance.shape != (n_chirps,):
        raise ValueError("disturbance must have one displacement per chirp")

    chirp_idx = np.arange(n_chirps)[:, None]
    fast_time = (np.arange(n_samples) * (config.chirp_time / n_samples))[None, :]
    cube = np.zeros((n_chirps, n_samples), dtype=np.complex128)
    lam = config.wavelength
    for reflector in scene.reflectors:
        d, v, amp = reflector.at(t0)
        d_n = d + v * config.chirp_time * chirp_idx
        if disturbance is not None:
            d_n = d_n + disturbance[:, None]
        beat = config.slope * 2.0 * d_n / SPEED_OF_LIGHT
        phase = 2.0 * math.pi * beat * fast_time + 4.0 * math.pi * d_n / lam
        cube += amp * np.exp(1j * phase)
    if snr_db is not None:
        sigma = 10.0 ** (-snr_db / 20.0)
        rng = np.random.default_rng([scene.seed & 0x7FFFFFFF, 0x5EED, frame_index])
        noise = rng.standard_normal((n_chirps, n_samples)) \
            + 1j * rng.standard_normal((n_chirps, n_samples))
        cube += sigma / math.sqrt(2.0) * noise
    return RawCube(samples=cube, frame_index=frame_index)


# ---------------------------------------------------------------------------
# scripted drives with road bumps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriveSegment:
    activity: ActivityLabel
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


def bump_transient_window(bump_time: float) -> tuple[float, float]:
    """Half-open time window of the radar displacement transient for a bump."""
    return bump_time, bump_time + BUMP_TRANSIENT_SECONDS


def _validate_script(script: list[tuple[ActivityLabel, float, float]]) -> list[DriveSegment]:
    segments = [DriveSegment(a, float(s), float(d)) for a, s, d in script]
    for seg in segments:
        if seg.duration <= 0:
            raise ValueError(f"segment {seg.activity.value} has non-positive duration")
        if seg.start < 0:
            raise ValueError(f"segment {seg.activity.value} starts before t=0")
    for prev, cur in zip(segments, segments[1:]):
        if cur.start < prev.start:
            raise ValueError("script segments must be sorted by start time")
        if cur.start < prev.end - 1e-9:
            raise ValueError(
                f"segments overlap: {prev.activity.value} ends at {prev.end:.2f}s "
                f"but {cur.activity.value} starts at {cur.start:.2f}s"
            )
    return segments


def simulate_drive(script: list[tuple[ActivityLabel, float, float]],
                   config: RadarConfig | None = None,
                   seed: int = 0,
                   bump_times: list[float] | None = None,
                   snr_db: float | None = 20.0,
                   ) -> tuple[list[RawCube], list["ImuSample"], list[ActivityLabel]]:
    """Run a scripted drive: per-frame raw cubes, IMU stream, per-frame labels.

    Gaps between scripted segments are filled with normal driving. Each bump
    time injects (a) a sharp z-axis jolt into the IMU stream and (b) a 0.4 s
    broadband whole-body displacement transient into the radar cubes.
    """
    from .frameio import ImuSample  # local import to keep module deps one-way

    config = config or RadarConfig()
    segments = _validate_script(script)
    bump_times = sorted(bump_times or [])
    if not segments:
        return [], [], []
    duration = max(seg.end for seg in segments)

    # fill gaps (and any unscripted lead-in) with normal driving
    timeline: list[DriveSegment] = []
    cursor = 0.0
    for seg in segments:
        if seg.start > cursor + 1e-9:
            timeline.append(DriveSegment(ActivityLabel.NORMAL, cursor, seg.start - cursor))
        timeline.append(seg)
        cursor = seg.end
    scenes = [
        make_scene(seg.activity, seg.duration, seed=_segment_seed(seed, i), config=config)
        for i, seg in enumerate(timeline)
    ]
    starts = [seg.start for seg in timeline]

    n_frames = int(round(duration * config.frames_per_second))
    cubes: list[RawCube] = []
    labels: list[ActivityLabel] = []
    for i in range(n_frames):
        t = i * config.frame_period
        k = min(bisect_right(starts, t + 1e-12) - 1, len(timeline) - 1)
        seg, scene = timeline[k], scenes[k]
        local_index = int(round((t - seg.start) * config.frames_per_second))
        disturbance = _bump_disturbance(t, bump_times, config, seed, i)
        local = synthesize_frame(scene, config, local_index, snr_db=snr_db,
                                 disturbance=disturbance)
        cubes.append(RawCube(samples=local.samples, frame_index=i))
        labels.append(seg.activity)

    imu = _simulate_imu(duration, bump_times, seed)
    imu_samples = [ImuSample(timestamp=float(t), accel_z=float(a)) for t, a in imu]
    return cubes, imu_samples, labels


def _segment_seed(seed: int, segment_index: int) -> int:
    return int(np.random.default_rng([seed & 0x7FFFFFFF, 0xD21F, segment_index]).integers(2**31))


def _bump_disturbance(t_frame: float, bump_times: list[float],
                      config: RadarConfig, seed: int,
                      frame_index: int) -> np.ndarray | None:
    """Per-chirp displacement during a bump transient, else None."""
    active = [tb for tb in bump_times
              if tb <= t_frame < tb + BUMP_TRANSIENT_SECONDS]
    if not active:
        return None
    chirp_t = t_frame + np.arange(config.chirps_per_frame) * config.chirp_time
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 0xB117, frame_index])
    disp = np.zeros(config.chirps_per_frame)
    for tb in active:
        u = (chirp_t - tb) / BUMP_TRANSIENT_SECONDS
        env = np.sin(np.pi * np.clip(u, 0.0, 1.0)) ** 2
        disp += env * (_BUMP_WOBBLE_AMPLITUDE
                       * np.sin(2.0 * math.pi * _BUMP_WOBBLE_FREQ * (chirp_t - tb)))
        disp += env * _BUMP_JITTER_STD * rng.standard_normal(config.chirps_per_frame)
    return disp


def _simulate_imu(duration: float, bump_times: list[float],
                  seed: int) -> np.ndarray:
    """Gravity baseline + sensor noise + one sharp damped jolt per bump."""
    rng = np.random.default_rng([seed & 0x7FFFFFFF, 0x1340])
    t = np.arange(0.0, duration, 1.0 / IMU_RATE)
    az = GRAVITY + _IMU_NOISE_STD * rng.standard_normal(t.shape)
    for tb in bump_times:
        dt = t - (tb + BUMP_JOLT_OFFSET)
        az += (_BUMP_JOLT_AMPLITUDE
               * np.exp(-0.5 * (dt / _BUMP_JOLT_WIDTH) ** 2)
               * np.sin(2.0 * math.pi * _BUMP_JOLT_FREQ * dt))
    return np.column_stack([t, az])


# ---------------------------------------------------------------------------
# drive-script files
# ---------------------------------------------------------------------------


class ScriptError(ValueError):
    """Drive-script parse failure, carrying the offending line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def parse_drive_script(text: str) -> list[tuple[ActivityLabel, float, float]]:
    """Parse a drive script: one ``activity, start, duration`` per line.

    Blank lines and ``#`` comments are ignored. Activities use their canonical
    names (case-insensitive); start/duration are seconds.
    """
    script: list[tuple[ActivityLabel, float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 3:
            raise ScriptError(
                f"expected 'activity, start, duration', got {len(fields)} field(s)",
                lineno,
            )
        name = fields[0].strip()
        try:
            activity = ActivityLabel.from_name(name)
        except ValueError as exc:
            raise ScriptError(str(exc), lineno, column=raw.find(name) + 1) from exc
        values = []
        for fld in fields[1:]:
            try:
                values.append(float(fld.strip()))
            except ValueError as exc:
                raise ScriptError(
                    f"expected a number, got {fld.strip()!r}",
                    lineno,
                    column=raw.find(fld.strip()) + 1 if fld.strip() else 1,
                ) from exc
        script.append((activity, values[0], values[1]))
    _validate_script(script)
    return script
