"""Sensing on CSI or eCSI: first-path ToF and per-path breathing rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CsiFrame
from .metrics import cfr_to_cir

__all__ = ["TofEstimate", "BreathEstimate", "PathBreathing", "NoSecondaryPeaksError",
           "find_peaks", "estimate_tof", "resolve_paths", "estimate_breathing"]


class NoSecondaryPeaksError(ValueError):
    """Only the direct path was found, so no subject can be tracked."""


@dataclass
class TofEstimate:
    tof: float
    peak_tap: int
    peak_magnitude: float


def find_peaks(mag: np.ndarray, ratio: float = 0.5, circular: bool = True) -> np.ndarray:
    """Indices of local maxima whose height is at least ``ratio`` times the global maximum."""
    mag = np.asarray(mag, dtype=np.float64)
    if circular:
        left, right = np.roll(mag, 1), np.roll(mag, -1)
    else:
        left = np.concatenate([[-np.inf], mag[:-1]])
        right = np.concatenate([mag[1:], [-np.inf]])
    peak = (mag >= left) & (mag >= right) & (mag >= ratio * mag.max()) & (mag > 0)
    return np.flatnonzero(peak)


def estimate_tof(frame: CsiFrame, dominance_ratio: float = 0.5, zero_pad_factor: int = 4) -> TofEstimate:
    """Delay of the earliest CIR peak reaching ``dominance_ratio`` of the strongest one.

    No hardware-offset correction is applied.
    """
    if not 0 < dominance_ratio <= 1:
        raise ValueError("dominance_ratio must lie in (0, 1]")
    cir = cfr_to_cir(frame, zero_pad_factor)
    mag = cir.magnitude
    if not np.any(mag > 0):
        raise ValueError("impulse response is identically zero")
    tap = int(find_peaks(mag, dominance_ratio)[0])
    return TofEstimate(tap * cir.tap_spacing / zero_pad_factor, tap, float(mag[tap]))


def resolve_paths(frame: CsiFrame, ratio: float = 0.5, zero_pad_factor: int = 4, window=None) -> int:
    """Number of CIR peaks above ``ratio`` of the maximum."""
    return int(len(find_peaks(cfr_to_cir(frame, zero_pad_factor, window).magnitude, ratio)))


@dataclass
class PathBreathing:
    tap: int
    delay: float
    bpm: np.ndarray
    detected: np.ndarray
    band_level: np.ndarray
    spectrogram: np.ndarray     # (windows, band bins) power

    def to_dict(self) -> dict:
        return {"tap": self.tap, "delay_s": self.delay, "bpm": self.bpm.tolist(),
                "detected": self.detected.tolist(), "band_level": self.band_level.tolist()}


@dataclass
class BreathEstimate:
    times: np.ndarray
    freqs: np.ndarray
    paths: list[PathBreathing] = field(default_factory=list)
    direct_tap: int = 0

    def to_dict(self) -> dict:
        return {"times_s": self.times.tolist(), "direct_tap": self.direct_tap,
                "paths": [p.to_dict() for p in self.paths]}


def _quadratic_peak(p: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(p) - 1:
        return 0.0
    a, b, c = p[i - 1], p[i], p[i + 1]
    denom = a - 2 * b + c
    return 0.0 if denom == 0 else 0.5 * (a - c) / denom


def _tracked_taps(mags: np.ndarray, peak_ratio: float, persistence: float) -> np.ndarray:
    presence = np.zeros(mags.shape, dtype=bool)
    for i, m in enumerate(mags):
        presence[i, find_peaks(m, peak_ratio)] = True
    # tolerate one tap of jitter
    presence = presence | np.roll(presence, 1, axis=1) | np.roll(presence, -1, axis=1)
    frac = presence.mean(axis=0)
    cand = np.flatnonzero(frac >= persistence)
    if cand.size == 0:
        return cand
    mean_mag = mags.mean(axis=0)
    # one tap per run of neighbouring candidates
    runs = np.split(cand, np.flatnonzero(np.diff(cand) > 1) + 1)
    return np.array(sorted(int(r[np.argmax(mean_mag[r])]) for r in runs), dtype=np.int64)


def estimate_breathing(frames, window_s: float = 8.0, sample_rate_hz: float = 100.0,
                       hop_s: float = 1.0, band=(0.1, 0.5), peak_ratio: float = 0.2,
                       persistence: float = 0.8, zero_pad_factor: int = 4, cir_window="hann",
                       n_subjects: int | None = None, fft_oversample: int = 8,
                       detect_threshold: float = 0.05) -> BreathEstimate:
    """Per-path breathing rate from a CSI time series.

    Each frame becomes a tapered CIR. Taps that are peaks in at least
    ``persistence`` of the frames are tracked; the earliest is the direct path
    and is dropped. Every remaining tap's complex time series is analysed by a
    short-time Fourier transform (Hann window of ``window_s``, hop ``hop_s``);
    positive and negative frequencies are pooled, the strongest bin in
    ``band`` is refined by quadratic interpolation and reported as bpm. A
    window counts as detected when the in-band RMS relative to the tap's mean
    magnitude reaches ``detect_threshold``.
    """
    frames = list(frames)
    win = int(round(window_s * sample_rate_hz))
    hop = int(round(hop_s * sample_rate_hz))
    if win < 2 or hop < 1:
        raise ValueError("window and hop must cover at least one sample")
    if len(frames) < win:
        raise ValueError(f"series of {len(frames)} frames is shorter than the {win}-sample window")
    ts = np.array([f.timestamp for f in frames])
    if len(ts) > 1 and not np.allclose(np.diff(ts), 1.0 / sample_rate_hz, rtol=1e-6, atol=1e-9):
        raise ValueError("frames are not uniformly sampled at the stated rate")

    cirs = np.stack([cfr_to_cir(f, zero_pad_factor, cir_window).taps for f in frames])
    mags = np.abs(cirs)
    taps = _tracked_taps(mags, peak_ratio, persistence)
    if taps.size < 2:
        raise NoSecondaryPeaksError(f"found {taps.size} persistent CIR peak(s); need a direct path plus one more")
    direct, others = int(taps[0]), taps[1:]
    if n_subjects is not None and len(others) > n_subjects:
        strongest = np.argsort(mags.mean(axis=0)[others])[::-1][:n_subjects]
        others = np.sort(others[strongest])

    tap_spacing = 1.0 / frames[0].grid.bandwidth / zero_pad_factor
    nfft = win * fft_oversample
    freqs = np.fft.fftfreq(nfft, 1.0 / sample_rate_hz)
    pos = np.flatnonzero((freqs >= 0) & (freqs <= sample_rate_hz / 2))
    pos = pos[np.argsort(freqs[pos])]
    fpos = freqs[pos]
    neg = (-pos) % nfft
    in_band = (fpos >= band[0]) & (fpos <= band[1])
    w = np.hanning(win)
    starts = range(0, len(frames) - win + 1, hop)
    times = np.array([(s + win / 2) / sample_rate_hz for s in starts])

    paths = []
    for tap in others:
        series = cirs[:, tap]
        bpm, det, level, spec_rows = [], [], [], []
        for s in starts:
            seg = series[s:s + win]
            mean = seg.mean()
            spec = np.fft.fft((seg - mean) * w, nfft)
            power = np.abs(spec[pos]) ** 2 + np.abs(spec[neg]) ** 2
            power[0] /= 2
            band_power = power[in_band]
            i = int(np.argmax(band_power))
            j = int(np.flatnonzero(in_band)[i])
            f_peak = fpos[j] + _quadratic_peak(power, j) * (fpos[1] - fpos[0])
            rms = math.sqrt(float(band_power.sum()) / (nfft * float(w @ w)))
            rel = rms / max(abs(mean), 1e-300)
            bpm.append(60.0 * f_peak)
            level.append(rel)
            det.append(rel >= detect_threshold)
            spec_rows.append(band_power)
        paths.append(PathBreathing(int(tap), tap * tap_spacing, np.array(bpm), np.array(det),
                                   np.array(level), np.array(spec_rows)))
    return BreathEstimate(times, fpos[in_band], paths, direct)
