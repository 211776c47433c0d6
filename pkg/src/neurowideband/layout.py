"""Frames <-> latent tokens for one band, shared by training and extrapolation."""

from __future__ import annotations

import numpy as np

from .channel import CsiFrame, FrequencyGrid
from .codec import PatchifyCodec, make_codec
from .data import tensor_shape_for, to_tensor
from .rfe import RfeCoordinates, embed

__all__ = ["BandLayout"]


class BandLayout:
    """Lays a band out as a (3, R, n_cols) tensor and tokenizes it.

    Rows grow with the band so the tensor holds every subcarrier; the row
    count is rounded up to a multiple of the patch size and surplus cells are
    padding.
    """

    def __init__(self, codec: PatchifyCodec | None = None, n_cols: int = 32, embed_dim: int = 64):
        self.codec = codec if codec is not None else PatchifyCodec(4)
        if n_cols % self.codec.patch_size:
            raise ValueError(f"n_cols={n_cols} not divisible by patch size {self.codec.patch_size}")
        self.n_cols = int(n_cols)
        self.embed_dim = int(embed_dim)

    def spec(self) -> dict:
        return {"codec": self.codec.spec(), "n_cols": self.n_cols, "embed_dim": self.embed_dim}

    @classmethod
    def from_spec(cls, spec: dict) -> "BandLayout":
        return cls(make_codec(spec["codec"]), spec["n_cols"], spec["embed_dim"])

    @property
    def latent_dim(self) -> int:
        return self.codec.latent_dim

    def shape_for(self, num_subcarriers: int) -> tuple[int, int]:
        return tensor_shape_for(num_subcarriers, self.n_cols, self.codec.patch_size)

    def num_tokens(self, num_subcarriers: int) -> int:
        return self.codec.num_tokens(self.shape_for(num_subcarriers))

    def tensor_data(self, frame: CsiFrame, grid: FrequencyGrid) -> np.ndarray:
        return to_tensor(frame, grid, self.shape_for(grid.num_subcarriers)).data

    def latent(self, frame: CsiFrame, grid: FrequencyGrid) -> np.ndarray:
        """Tokens of ``frame`` placed at its true position inside ``grid``."""
        return self.codec.encode_array(self.tensor_data(frame, grid))

    def embedding(self, coords: RfeCoordinates, grid: FrequencyGrid) -> np.ndarray:
        """RFE pooled to one vector per latent token."""
        shape = self.shape_for(grid.num_subcarriers)
        cells = embed(coords, grid, self.embed_dim, n_tokens=shape[0] * shape[1]).values
        return self.codec.pool_cells(cells, shape)

    def values_from_latent(self, z: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
        """Complex subcarrier values decoded from tokens; leading batch dims allowed."""
        shape = self.shape_for(grid.num_subcarriers)
        data = self.codec.decode_array(z, shape)
        n = grid.num_subcarriers
        flat = data.reshape(*data.shape[:-2], -1)
        return flat[..., 0, :n] + 1j * flat[..., 1, :n]
