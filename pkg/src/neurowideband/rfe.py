"""Relative frequency embedding.

An anchor segment (a measured or randomly drawn sub-band) fixes the origin;
the observed band is described in the anchor's coordinates. Every observed
subcarrier gets a sin-cos token made of two halves: its position relative to
the anchor start, and its absolute carrier frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import FrequencyGrid
from .data import normalized_frequency

__all__ = ["RfeCoordinates", "RfeEmbedding", "observed_coords", "extrapolation_coords",
           "sincos_1d", "embed"]

# normalized frequency (MHz * 1e-4) is multiplied back to MHz before encoding, so
# adjacent subcarriers differ by a visible phase at the shortest wavelength
FREQ_FEATURE_SCALE = 1e4


@dataclass(frozen=True)
class RfeCoordinates:
    """Anchor and observed boxes as (top, left, height, width).

    The observed box follows the anchor-relative convention: ``left`` is the
    (negative) offset of the band start and ``width`` is how far the band
    extends beyond the anchor's right edge.
    """

    anchor: tuple[int, int, int, int]
    observed: tuple[int, int, int, int]

    @property
    def anchor_start(self) -> int:
        return -self.observed[1]

    @property
    def anchor_len(self) -> int:
        return self.anchor[3]

    @property
    def full_len(self) -> int:
        return self.anchor_start + self.anchor_len + self.observed[3]

    def observed_positions(self, scale: float = 1.0) -> np.ndarray:
        """Anchor-relative index of every observed subcarrier (may be fractional)."""
        return (np.arange(self.full_len, dtype=np.float64) + self.observed[1]) * scale


@dataclass
class RfeEmbedding:
    values: np.ndarray

    @property
    def embed_dim(self) -> int:
        return self.values.shape[-1]


def observed_coords(anchor_start: int, anchor_len: int, full_len: int) -> RfeCoordinates:
    a, l, f = int(anchor_start), int(anchor_len), int(full_len)
    if a < 0 or l < 1 or a + l > f:
        raise ValueError(f"anchor [{a}, {a + l}) does not fit in a band of {f}")
    return RfeCoordinates((0, 0, 3, l), (0, -a, 3, f - a - l))


def extrapolation_coords(input_len: int, k: int) -> RfeCoordinates:
    """Coordinates for an input band centered inside its k-times expansion."""
    if int(k) != k or k < 2:
        raise ValueError(f"k must be an integer >= 2, got {k}")
    n, k = int(input_len), int(k)
    left = (k - 1) * n // 2
    return observed_coords(left, n, k * n)


def sincos_1d(dim: int, pos) -> np.ndarray:
    """MAE-style 1-D sin-cos table: ``dim/2`` sines followed by ``dim/2`` cosines."""
    if dim % 2:
        raise ValueError("sin-cos dimension must be even")
    omega = np.arange(dim // 2, dtype=np.float64) / (dim / 2.0)
    omega = 1.0 / 10000 ** omega
    out = np.outer(np.asarray(pos, dtype=np.float64).reshape(-1), omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def embed(coords: RfeCoordinates, grid: FrequencyGrid, embed_dim: int = 64,
          n_tokens: int | None = None, position_scale: float = 1.0) -> RfeEmbedding:
    """Tokens for the observed band described by ``coords`` over ``grid``.

    ``grid`` is the observed band. ``n_tokens`` may exceed the band length to
    cover padding cells; positions and frequencies then continue the lattice.
    """
    if embed_dim <= 0 or embed_dim % 4:
        raise ValueError(f"embed_dim must be a positive multiple of 4, got {embed_dim}")
    if coords.full_len != grid.num_subcarriers:
        raise ValueError(
            f"coordinates span {coords.full_len} subcarriers but grid has {grid.num_subcarriers}")
    n = grid.num_subcarriers if n_tokens is None else int(n_tokens)
    if n < grid.num_subcarriers:
        raise ValueError("n_tokens cannot be smaller than the observed band")
    idx = np.arange(n, dtype=np.float64)
    pos = (idx + coords.observed[1]) * position_scale
    freq = normalized_frequency(grid.first_freq + idx * grid.subcarrier_spacing) * FREQ_FEATURE_SCALE
    half = embed_dim // 2
    return RfeEmbedding(np.concatenate([sincos_1d(half, pos), sincos_1d(half, freq)], axis=1))
