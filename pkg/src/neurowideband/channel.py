"""Multipath channel synthesis.

A channel is described by a list of propagation paths (complex gain, delay,
angle of arrival). CSI at any subcarrier frequency follows from the
half-wavelength ULA model

    H_n(f) = sum_l |a_l| exp(j arg a_l) exp(-j 2 pi f tau_l) exp(-j pi n cos theta_l)

so the same environment evaluated on two grids yields consistent values
wherever the grids share a frequency. This module is both the training-data
generator and the wideband ground truth used by the metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "PropagationPath",
    "MultipathEnvironment",
    "FrequencyGrid",
    "CsiFrame",
    "MotionProfile",
    "breathing_scene",
    "EnvironmentSpec",
    "channel_response",
    "synthesize_csi",
    "synthesize_pair",
    "synthesize_series",
    "sample_environment",
    "add_awgn",
    "expand_grid",
]


@dataclass(frozen=True)
class PropagationPath:
    """One propagation path.

    Attributes:
        gain_magnitude: |alpha|, unitless.
        gain_phase: arg(alpha) in radians.
        delay: propagation delay in seconds.
        aoa: angle of arrival in radians, within [0, pi].
    """

    gain_magnitude: float
    gain_phase: float
    delay: float
    aoa: float = math.pi / 2

    def __post_init__(self):
        vals = (self.gain_magnitude, self.gain_phase, self.delay, self.aoa)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite path parameter in {self!r}")
        if self.gain_magnitude < 0:
            raise ValueError("gain_magnitude must be >= 0")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if not 0.0 <= self.aoa <= math.pi:
            raise ValueError("aoa must lie in [0, pi]")

    @property
    def gain(self) -> complex:
        return self.gain_magnitude * complex(math.cos(self.gain_phase), math.sin(self.gain_phase))


@dataclass(frozen=True)
class MultipathEnvironment:
    paths: tuple[PropagationPath, ...]
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if len(self.paths) == 0:
            raise ValueError("a multipath environment needs at least one path")

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    def arrays(self):
        """Return (gains, delays, aoas) as numpy arrays."""
        gains = np.array([p.gain for p in self.paths], dtype=np.complex128)
        delays = np.array([p.delay for p in self.paths], dtype=np.float64)
        aoas = np.array([p.aoa for p in self.paths], dtype=np.float64)
        return gains, delays, aoas


@dataclass(frozen=True)
class FrequencyGrid:
    """Contiguous subcarrier lattice symmetric about ``center_freq``.

    Subcarrier ``k`` sits at ``center_freq + (k - (num_subcarriers - 1) / 2) * subcarrier_spacing``.
    """

    center_freq: float
    subcarrier_spacing: float
    num_subcarriers: int

    def __post_init__(self):
        if not (math.isfinite(self.center_freq) and math.isfinite(self.subcarrier_spacing)):
            raise ValueError("grid parameters must be finite")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier_spacing must be > 0")
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be a positive integer")
        object.__setattr__(self, "num_subcarriers", int(self.num_subcarriers))

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing

    def offsets(self) -> np.ndarray:
        """Subcarrier offsets from the center in units of the spacing (exact half-integers)."""
        return np.arange(self.num_subcarriers, dtype=np.float64) - (self.num_subcarriers - 1) / 2

    @property
    def frequencies(self) -> np.ndarray:
        return self.center_freq + self.offsets() * self.subcarrier_spacing

    @property
    def first_freq(self) -> float:
        return self.center_freq - (self.num_subcarriers - 1) / 2 * self.subcarrier_spacing

    def subgrid(self, start: int, length: int) -> "FrequencyGrid":
        """Grid of ``length`` subcarriers starting at index ``start`` of this grid."""
        if start < 0 or length < 1 or start + length > self.num_subcarriers:
            raise ValueError(f"subgrid [{start}, {start + length}) outside grid of {self.num_subcarriers}")
        shift = start + (length - 1) / 2 - (self.num_subcarriers - 1) / 2
        return FrequencyGrid(self.center_freq + shift * self.subcarrier_spacing,
                             self.subcarrier_spacing, length)


@dataclass
class CsiFrame:
    """Complex channel samples over one grid, for one antenna at one instant."""

    grid: FrequencyGrid
    values: np.ndarray
    antenna: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 1 or self.values.shape[0] != self.grid.num_subcarriers:
            raise ValueError(
                f"expected {self.grid.num_subcarriers} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("CSI values must be finite")
        if self.antenna < 0:
            raise ValueError("antenna index must be >= 0")

    def __len__(self):
        return self.grid.num_subcarriers

    def slice(self, start: int, length: int) -> "CsiFrame":
        return CsiFrame(self.grid.subgrid(start, length), self.values[start:start + length].copy(),
                        self.antenna, self.timestamp)


@dataclass(frozen=True)
class MotionProfile:
    """Sinusoidal delay modulation of one path (breathing chest motion).

    ``holds`` lists (start, stop) intervals in seconds during which the
    modulation is switched off.
    """

    path_index: int
    delay_amplitude: float
    rate_hz: float
    phase0: float = 0.0
    holds: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.delay_amplitude < 0:
            raise ValueError("delay_amplitude must be >= 0")
        if self.rate_hz < 0:
            raise ValueError("rate_hz must be >= 0")

    def offset(self, t: float) -> float:
        for start, stop in self.holds:
            if start <= t < stop:
                return 0.0
        return self.delay_amplitude * math.sin(2 * math.pi * self.rate_hz * t + self.phase0)


def channel_response(freqs, gains, delays, aoas, antenna: int = 0) -> np.ndarray:
    """Evaluate the ULA multipath model on raw arrays.

    No physical validation is done here beyond finiteness, so callers may
    probe sign conventions (negative delays etc.). Paths are accumulated one
    at a time; each output element depends only on its own frequency.
    """
    freqs = np.asarray(freqs, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.complex128)
    delays = np.asarray(delays, dtype=np.float64)
    aoas = np.asarray(aoas, dtype=np.float64)
    if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(gains))
            and np.all(np.isfinite(delays)) and np.all(np.isfinite(aoas))):
        raise ValueError("non-finite channel parameters")
    out = np.zeros(freqs.shape, dtype=np.complex128)
    for g, tau, theta in zip(gains, delays, aoas):
        steer = np.exp(-1j * np.pi * antenna * np.cos(theta))
        out += (g * steer) * np.exp(-2j * np.pi * freqs * tau)
    return out


def synthesize_csi(env: MultipathEnvironment, grid: FrequencyGrid, antenna: int = 0,
                   timestamp: float = 0.0) -> CsiFrame:
    if antenna < 0:
        raise ValueError("antenna index must be >= 0")
    gains, delays, aoas = env.arrays()
    values = channel_response(grid.frequencies, gains, delays, aoas, antenna)
    return CsiFrame(grid, values, antenna, timestamp)


def expand_grid(grid: FrequencyGrid, k: int) -> FrequencyGrid:
    """The k-times wider grid with the same center and spacing.

    The narrow lattice must land on the wide one, which requires
    ``(k - 1) * num_subcarriers`` to be even.
    """
    if int(k) != k or k < 2:
        raise ValueError(f"expansion factor must be an integer >= 2, got {k}")
    k = int(k)
    if ((k - 1) * grid.num_subcarriers) % 2:
        raise ValueError(
            f"k={k} with {grid.num_subcarriers} subcarriers puts the narrow band off the wide lattice")
    return FrequencyGrid(grid.center_freq, grid.subcarrier_spacing, k * grid.num_subcarriers)


def synthesize_pair(env: MultipathEnvironment, narrow_grid: FrequencyGrid, k: int,
                    antenna: int = 0) -> tuple[CsiFrame, CsiFrame]:
    """Narrowband frame and its k-times expanded ground truth from one environment."""
    wide_grid = expand_grid(narrow_grid, k)
    return synthesize_csi(env, narrow_grid, antenna), synthesize_csi(env, wide_grid, antenna)


def narrow_offset(narrow_grid: FrequencyGrid, k: int) -> int:
    """Index of the first narrow subcarrier inside the expanded grid."""
    return (int(k) - 1) * narrow_grid.num_subcarriers // 2


def synthesize_series(env: MultipathEnvironment, motion, grid: FrequencyGrid, antenna: int = 0,
                      rate_hz: float = 100.0, duration: float = 60.0) -> list[CsiFrame]:
    """Frames sampled at ``rate_hz`` while one or more paths move.

    ``motion`` is a MotionProfile or a sequence of them (one per moving path).
    """
    motions: Sequence[MotionProfile] = [motion] if isinstance(motion, MotionProfile) else list(motion)
    if duration <= 0:
        raise ValueError("duration must be > 0")
    for m in motions:
        if not 0 <= m.path_index < env.num_paths:
            raise ValueError(f"motion path_index {m.path_index} out of range")
        if rate_hz <= 2 * m.rate_hz:
            raise ValueError(
                f"sampling rate {rate_hz} Hz violates Nyquist for {m.rate_hz} Hz motion")
    n = int(math.floor(duration * rate_hz + 1e-9))
    gains, delays, aoas = env.arrays()
    freqs = grid.frequencies
    frames = []
    for i in range(n):
        t = i / rate_hz
        d = delays.copy()
        for m in motions:
            d[m.path_index] = delays[m.path_index] + m.offset(t)
        values = channel_response(freqs, gains, d, aoas, antenna)
        frames.append(CsiFrame(grid, values, antenna, t))
    return frames


@dataclass(frozen=True)
class EnvironmentSpec:
    """Randomized environment family.

    Gains are log-uniform in ``gain_range``; phases uniform; delays uniform in
    ``delay_range`` (seconds); angles uniform in ``aoa_range``.
    """

    num_paths: tuple[int, int] = (1, 5)
    delay_range: tuple[float, float] = (0.0, 200e-9)
    gain_range: tuple[float, float] = (0.1, 1.0)
    aoa_range: tuple[float, float] = (0.0, math.pi)
    sort_gains: bool = False

    def __post_init__(self):
        lo, hi = self.num_paths
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid path-count range {self.num_paths}")
        for name in ("delay_range", "gain_range", "aoa_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
                raise ValueError(f"empty or invalid {name}: {(lo, hi)}")
        if self.gain_range[0] <= 0:
            raise ValueError("gain_range must be strictly positive for log-uniform draws")
        if self.delay_range[0] < 0:
            raise ValueError("delays must be nonnegative")
        if self.aoa_range[0] < 0 or self.aoa_range[1] > math.pi:
            raise ValueError("aoa_range must lie within [0, pi]")


def sample_environment(spec: EnvironmentSpec, seed=None, label: str = "") -> MultipathEnvironment:
    """Draw one environment; ``seed`` may be an int or a numpy Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(rng.integers(spec.num_paths[0], spec.num_paths[1] + 1))
    log_lo, log_hi = math.log(spec.gain_range[0]), math.log(spec.gain_range[1])
    mags = np.exp(rng.uniform(log_lo, log_hi, n))
    if spec.sort_gains:
        mags = np.sort(mags)[::-1]
    phases = rng.uniform(-math.pi, math.pi, n)
    delays = rng.uniform(spec.delay_range[0], spec.delay_range[1], n)
    aoas = rng.uniform(spec.aoa_range[0], spec.aoa_range[1], n)
    paths = tuple(PropagationPath(float(m), float(p), float(d), float(a))
                  for m, p, d, a in zip(mags, phases, delays, aoas))
    return MultipathEnvironment(paths, label)


def add_awgn(frame: CsiFrame, snr_db: float, seed=None) -> CsiFrame:
    """Complex white Gaussian noise at the given SNR relative to mean frame power."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    power = float(np.mean(np.abs(frame.values) ** 2))
    sigma = math.sqrt(power / 10 ** (snr_db / 10) / 2)
    noise = sigma * (rng.standard_normal(len(frame)) + 1j * rng.standard_normal(len(frame)))
    return replace(frame, values=frame.values + noise)


def breathing_scene(n_subjects: int = 3, rate_hz: float = 0.25, delay_amplitude: float = 25e-12,
                    first_delay: float = 40e-9, separation: float = 25e-9,
                    direct_delay: float = 10e-9) -> tuple[MultipathEnvironment, list[MotionProfile]]:
    """A static direct path plus ``n_subjects`` reflections that each breathe.

    Subject ``i`` sits at ``first_delay + i * separation`` with its own chest
    phase, so the reflections are distinct but share the breathing rate.
    """
    if n_subjects < 1:
        raise ValueError("need at least one subject")
    if separation <= 0:
        raise ValueError("separation must be > 0")
    gains = [0.5, 0.4, 0.35]
    phases = [1.0, -2.0, 2.5]
    paths = [PropagationPath(1.0, 0.3, direct_delay, math.pi / 2)]
    for i in range(n_subjects):
        paths.append(PropagationPath(gains[i % 3] * 0.9 ** (i // 3), phases[i % 3],
                                     first_delay + i * separation, math.pi / 2))
    motions = [MotionProfile(i + 1, delay_amplitude, rate_hz, phase0=float(i + 1))
               for i in range(n_subjects)]
    return MultipathEnvironment(tuple(paths), f"breathing-{n_subjects}"), motions
