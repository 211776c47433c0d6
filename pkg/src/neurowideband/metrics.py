"""Fidelity metrics for extrapolated CSI and the CFR -> CIR transform."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import CsiFrame
from .data import normalize

__all__ = ["CirProfile", "cfr_to_cir", "cir_to_cfr", "mse", "acc_cir", "ZeroVarianceError",
           "central_band", "evaluate", "MetricTable", "NoiseModel", "OracleModel"]

ACC_CIR_ZERO_PAD = 4


class ZeroVarianceError(ValueError):
    """A CIR magnitude profile is constant, so its correlation is undefined."""


@dataclass
class CirProfile:
    taps: np.ndarray
    tap_spacing: float      # 1 / bandwidth
    zero_pad_factor: int = 1

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.taps)) * self.tap_spacing / self.zero_pad_factor

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.taps)


def cfr_to_cir(frame: CsiFrame, zero_pad_factor: int = 1, window=None) -> CirProfile:
    """Unitary inverse DFT of the subcarrier sequence, zero-padded in frequency.

    ``window`` optionally tapers the spectrum first (e.g. ``"hann"``) to trade
    resolution for sidelobe suppression.
    """
    if len(frame) == 0:
        raise ValueError("empty frame")
    if zero_pad_factor < 1 or int(zero_pad_factor) != zero_pad_factor:
        raise ValueError("zero_pad_factor must be a positive integer")
    values = frame.values
    if window is not None:
        w = np.hanning(len(values) + 2)[1:-1] if window == "hann" else np.asarray(window, dtype=float)
        values = values * w
    n = len(values) * int(zero_pad_factor)
    taps = np.fft.ifft(values, n=n, norm="ortho")
    return CirProfile(taps, 1.0 / frame.grid.bandwidth, int(zero_pad_factor))


def cir_to_cfr(cir: CirProfile, grid) -> CsiFrame:
    """Forward DFT back onto ``grid``; exact inverse of ``cfr_to_cir`` without padding."""
    spec = np.fft.fft(cir.taps, norm="ortho")
    if cir.zero_pad_factor != 1:
        spec = spec[:grid.num_subcarriers] * math.sqrt(cir.zero_pad_factor)
    return CsiFrame(grid, spec)


def _check_same_grid(a: CsiFrame, b: CsiFrame):
    ga, gb = a.grid, b.grid
    if (ga.num_subcarriers != gb.num_subcarriers
            or not math.isclose(ga.center_freq, gb.center_freq, rel_tol=0, abs_tol=1e-3 * ga.subcarrier_spacing)
            or not math.isclose(ga.subcarrier_spacing, gb.subcarrier_spacing, rel_tol=1e-9)):
        raise ValueError(f"frames are on different grids: {ga} vs {gb}")


def mse(a: CsiFrame, b: CsiFrame) -> float:
    """Mean of squared real and imaginary errors, i.e. mean |a - b|^2 / 2."""
    _check_same_grid(a, b)
    d = a.values - b.values
    return float(np.mean(d.real ** 2 + d.imag ** 2) / 2)


def acc_cir(ecsi: CsiFrame, truth: CsiFrame, zero_pad_factor: int = ACC_CIR_ZERO_PAD) -> float:
    """Pearson correlation of the two |CIR| profiles."""
    _check_same_grid(ecsi, truth)
    x = cfr_to_cir(ecsi, zero_pad_factor).magnitude
    y = cfr_to_cir(truth, zero_pad_factor).magnitude
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = math.sqrt(float(x @ x)), math.sqrt(float(y @ y))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("CIR magnitude profile has zero variance")
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))


def central_band(frame: CsiFrame, length: int) -> CsiFrame:
    """The ``length`` subcarriers centered in ``frame``."""
    extra = len(frame) - length
    if extra < 0 or extra % 2:
        raise ValueError(f"cannot center {length} subcarriers inside {len(frame)}")
    return frame.slice(extra // 2, length)


class OracleModel:
    """Returns ground truth; the perfect-extrapolation reference."""

    def __init__(self, truths):
        self._truths = list(truths)

    def predict(self, frames, k=2, seed=0):
        out = []
        for fr, truth in zip(frames, self._truths):
            out.append(central_band(truth, k * len(fr)))
        return out


class NoiseModel:
    """Complex standard-normal eCSI, scaled by each input's peak magnitude."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def predict(self, frames, k=2, seed=None):
        from .channel import expand_grid

        rng = np.random.default_rng(self.seed if seed is None else seed)
        out = []
        for fr in frames:
            grid = expand_grid(fr.grid, k)
            scale = normalize(fr)[1]
            z = rng.standard_normal(grid.num_subcarriers) + 1j * rng.standard_normal(grid.num_subcarriers)
            out.append(CsiFrame(grid, scale * z, fr.antenna, fr.timestamp))
        return out


@dataclass
class MetricTable:
    rows: list[dict]
    samples: dict

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["k", "metric", "median", "p10", "p90"])
            w.writeheader()
            for r in self.rows:
                w.writerow(r)
        return path

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps({"rows": self.rows, "cdf": self.samples}, indent=2))
        return path

    def value(self, k: int, metric: str, stat: str = "median") -> float:
        for r in self.rows:
            if r["k"] == k and r["metric"] == metric:
                return r[stat]
        raise KeyError((k, metric))


def _summary(k, name, values):
    v = np.asarray(values, dtype=np.float64)
    finite = v[np.isfinite(v)]
    if finite.size == 0:
        med = p10 = p90 = float("nan")
    else:
        med, p10, p90 = (float(x) for x in np.percentile(finite, [50, 10, 90]))
    return {"k": int(k), "metric": name, "median": med, "p10": p10, "p90": p90}


def _score(ecsi_frames, truths):
    mses, accs = [], []
    for e, t in zip(ecsi_frames, truths):
        tn, factor = normalize(t)
        en = CsiFrame(e.grid, e.values / factor, e.antenna, e.timestamp)
        mses.append(mse(en, tn))
        try:
            accs.append(acc_cir(en, tn))
        except ZeroVarianceError:
            accs.append(float("nan"))
    return mses, accs


def evaluate(model, truths, ks=(2,), seed: int = 0, noise_baseline: bool = True,
             out_dir=None) -> MetricTable:
    """Score a model on wideband ground-truth frames.

    The input band is the central ``len / max(ks)`` subcarriers of every truth
    frame; for each k the reference is the central ``k`` times that width.
    Both eCSI and truth are divided by the truth's normalization factor
    before MSE. ``model`` needs ``predict(frames, k=..., seed=...)``.
    """
    truths = [r.frame if hasattr(r, "frame") else r for r in truths]
    if not truths:
        raise ValueError("test set is empty")
    ks = sorted({int(k) for k in ks})
    if ks[0] < 2:
        raise ValueError("every k must be >= 2")
    width = len(truths[0])
    if any(len(t) != width for t in truths):
        raise ValueError("truth frames must share one subcarrier count")
    if width % ks[-1]:
        raise ValueError(f"{width} subcarriers cannot be split by k={ks[-1]}")
    n_in = width // ks[-1]
    inputs = [central_band(t, n_in) for t in truths]
    rows, samples = [], {}
    for k in ks:
        refs = [central_band(t, k * n_in) for t in truths]
        ecsi = model.predict(inputs, k=k, seed=seed)
        mses, accs = _score(ecsi, refs)
        rows += [_summary(k, "mse", mses), _summary(k, "acc_cir", accs)]
        samples[f"k{k}_mse"] = sorted(mses)
        samples[f"k{k}_acc_cir"] = sorted(a for a in accs if math.isfinite(a))
        if noise_baseline:
            nm, na = _score(NoiseModel(seed).predict(inputs, k=k), refs)
            rows += [_summary(k, "noise_mse", nm), _summary(k, "noise_acc_cir", na)]
            samples[f"k{k}_noise_mse"] = sorted(nm)
            samples[f"k{k}_noise_acc_cir"] = sorted(a for a in na if math.isfinite(a))
    table = MetricTable(rows, samples)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / "metrics.csv")
        table.to_json(out_dir / "metrics.json")
    return table
