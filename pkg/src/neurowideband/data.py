"""Frame preprocessing: normalization, tensor layout, sub-band sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import CsiFrame, FrequencyGrid

__all__ = [
    "CsiTensor",
    "SubbandSelection",
    "DatasetRecord",
    "FREQ_SCALE",
    "normalize",
    "normalized_frequency",
    "to_tensor",
    "from_tensor",
    "tensor_shape_for",
    "subband_bounds",
    "sample_subband",
    "sample_subbands",
]

# MHz -> network units; keeps WiFi carriers inside [0, 1].
FREQ_SCALE = 1e-4
DEFAULT_SHAPE = (32, 32)


def normalized_frequency(freq_hz):
    return np.asarray(freq_hz, dtype=np.float64) / 1e6 * FREQ_SCALE


def normalize(frame: CsiFrame) -> tuple[CsiFrame, float]:
    """Scale a frame so that its largest magnitude is 1.

    Returns the normalized frame and the factor it was divided by; an
    all-zero frame comes back unchanged with factor 1.0.
    """
    peak = float(np.max(np.abs(frame.values))) if len(frame) else 0.0
    if peak == 0.0:
        return CsiFrame(frame.grid, frame.values.copy(), frame.antenna, frame.timestamp), 1.0
    return CsiFrame(frame.grid, frame.values / peak, frame.antenna, frame.timestamp), peak


@dataclass
class CsiTensor:
    """Network-facing (3, R, C) layout of a frame.

    Channel 0 holds the real part, channel 1 the imaginary part and channel 2
    the normalized frequency of every cell. Cells are laid out row-major along
    ascending frequency. ``grid`` is the lattice the first
    ``grid.num_subcarriers`` cells represent; trailing cells, if any, continue
    that lattice and are never valid.
    """

    data: np.ndarray
    grid: FrequencyGrid
    valid_mask: np.ndarray
    antenna: int = 0
    timestamp: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid_mask.shape

    def cell_frequencies(self) -> np.ndarray:
        rows, cols = self.shape
        return self.grid.first_freq + np.arange(rows * cols) * self.grid.subcarrier_spacing


def tensor_shape_for(num_subcarriers: int, n_cols: int = 32, multiple: int = 1) -> tuple[int, int]:
    """Smallest (rows, n_cols) layout holding ``num_subcarriers`` cells, rows a multiple of ``multiple``."""
    rows = math.ceil(num_subcarriers / n_cols)
    rows = math.ceil(rows / multiple) * multiple
    return rows, n_cols


def _lattice_index(freq: float, first: float, spacing: float) -> int:
    pos = (freq - first) / spacing
    idx = round(pos)
    if abs(pos - idx) > 1e-6:
        raise ValueError(f"frequency {freq} Hz is not on the target lattice")
    return int(idx)


def to_tensor(frame: CsiFrame, target_grid: FrequencyGrid, shape=DEFAULT_SHAPE) -> CsiTensor:
    """Place ``frame`` at its true position inside ``target_grid`` laid out as ``shape``.

    Grids with more subcarriers than cells are decimated by an integer stride;
    cells not covered by the frame are zero and marked invalid.
    """
    rows, cols = shape
    cells = rows * cols
    n = target_grid.num_subcarriers
    if not math.isclose(frame.grid.subcarrier_spacing, target_grid.subcarrier_spacing,
                        rel_tol=1e-9):
        raise ValueError("frame and target grid have different subcarrier spacing")
    if n > cells:
        if n % cells:
            raise ValueError(f"{n} subcarriers cannot be decimated onto {cells} cells")
        stride = n // cells
    else:
        stride = 1
    spacing = target_grid.subcarrier_spacing
    offset = _lattice_index(frame.grid.first_freq, target_grid.first_freq, spacing)
    if offset < 0 or offset + len(frame) > n:
        raise ValueError("frame does not lie inside the target grid")

    kept = n // stride
    lattice = FrequencyGrid(
        target_grid.first_freq + (kept - 1) / 2 * stride * spacing if stride > 1 else target_grid.center_freq,
        spacing * stride, kept)

    data = np.zeros((3, cells), dtype=np.float64)
    mask = np.zeros(cells, dtype=bool)
    idx = offset + np.arange(len(frame))
    keep = idx % stride == 0
    cell_idx = idx[keep] // stride
    vals = frame.values[keep]
    data[0, cell_idx] = vals.real
    data[1, cell_idx] = vals.imag
    mask[cell_idx] = True
    data[2] = normalized_frequency(lattice.first_freq + np.arange(cells) * lattice.subcarrier_spacing)
    return CsiTensor(data.reshape(3, rows, cols), lattice, mask.reshape(rows, cols),
                     frame.antenna, frame.timestamp)


def from_tensor(t: CsiTensor) -> CsiFrame:
    """Recover the frame over the contiguous run of valid cells."""
    flat = np.flatnonzero(t.valid_mask.reshape(-1))
    if flat.size == 0:
        raise ValueError("tensor has no valid cells")
    start, stop = int(flat[0]), int(flat[-1]) + 1
    if flat.size != stop - start:
        raise ValueError("valid cells do not form one contiguous subcarrier run")
    if stop > t.grid.num_subcarriers:
        raise ValueError("valid cells extend past the tensor's grid")
    data = t.data.reshape(3, -1)
    values = data[0, start:stop] + 1j * data[1, start:stop]
    return CsiFrame(t.grid.subgrid(start, stop - start), values, t.antenna, t.timestamp)


@dataclass(frozen=True)
class SubbandSelection:
    start_subcarrier: int
    length: int

    def __post_init__(self):
        if self.start_subcarrier < 0 or self.length < 1:
            raise ValueError(f"invalid sub-band {self}")

    @property
    def stop(self) -> int:
        return self.start_subcarrier + self.length


def subband_bounds(length: int) -> tuple[int, int]:
    """Inclusive [ceil(0.05 f), floor(0.5 f)] in exact integer arithmetic."""
    return -(-length // 20), length // 2


def sample_subband(frame, seed=None) -> SubbandSelection:
    """Random contiguous sub-band covering 5-50 % of the frame.

    ``frame`` may be a CsiFrame or a subcarrier count.
    """
    f = frame if isinstance(frame, (int, np.integer)) else len(frame)
    if f < 20:
        raise ValueError(f"frame of {f} subcarriers is too short for sub-band sampling (need >= 20)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = subband_bounds(f)
    length = int(rng.integers(lo, hi + 1))
    start = int(rng.integers(0, f - length + 1))
    return SubbandSelection(start, length)


def sample_subbands(f: int, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draw of ``n`` sub-bands; returns (starts, lengths)."""
    if f < 20:
        raise ValueError(f"frame of {f} subcarriers is too short for sub-band sampling (need >= 20)")
    lo, hi = subband_bounds(f)
    lengths = rng.integers(lo, hi + 1, size=n)
    starts = np.floor(rng.random(n) * (f - lengths + 1)).astype(np.int64)
    return starts, lengths


@dataclass
class DatasetRecord:
    frame: CsiFrame
    env_label: str = ""

    @property
    def antenna(self) -> int:
        return self.frame.antenna
