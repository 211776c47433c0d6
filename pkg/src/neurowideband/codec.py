"""Frozen latent codecs.

Diffusion runs on tokens produced by a fixed, parameter-free compressor:
non-overlapping p x p patches of the (3, R, C) tensor, flattened across all
three channels. The frozen-linear variant additionally rotates every token by
one seeded orthonormal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CsiTensor

__all__ = ["LatentTensor", "PatchifyCodec", "FrozenLinearCodec", "make_codec"]


@dataclass
class LatentTensor:
    values: np.ndarray          # (tokens, latent_dim)
    grid_shape: tuple[int, int]  # (R, C) of the tensor it came from
    source: CsiTensor | None = None


class PatchifyCodec:
    kind = "patchify"

    def __init__(self, patch_size: int = 4):
        if patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        self.patch_size = int(patch_size)

    @property
    def latent_dim(self) -> int:
        return 3 * self.patch_size ** 2

    def spec(self) -> dict:
        return {"type": self.kind, "patch_size": self.patch_size}

    def num_tokens(self, shape) -> int:
        rows, cols = shape
        self._check(rows, cols)
        return (rows // self.patch_size) * (cols // self.patch_size)

    def _check(self, rows, cols):
        p = self.patch_size
        if rows % p or cols % p:
            raise ValueError(f"tensor plane {rows}x{cols} not divisible by patch size {p}")

    # array-level transforms; leading batch dimensions are allowed
    def patchify(self, x: np.ndarray) -> np.ndarray:
        *lead, ch, rows, cols = x.shape
        self._check(rows, cols)
        p = self.patch_size
        x = x.reshape(*lead, ch, rows // p, p, cols // p, p)
        nl = len(lead)
        order = list(range(nl)) + [nl + 1, nl + 3, nl, nl + 2, nl + 4]
        x = x.transpose(order)
        return x.reshape(*lead, (rows // p) * (cols // p), ch * p * p)

    def unpatchify(self, z: np.ndarray, shape) -> np.ndarray:
        rows, cols = shape
        self._check(rows, cols)
        p = self.patch_size
        *lead, ntok, dim = z.shape
        ch = dim // (p * p)
        if ntok != (rows // p) * (cols // p) or ch * p * p != dim:
            raise ValueError(f"latent shape {z.shape} incompatible with plane {shape}")
        z = z.reshape(*lead, rows // p, cols // p, ch, p, p)
        nl = len(lead)
        order = list(range(nl)) + [nl + 2, nl, nl + 3, nl + 1, nl + 4]
        return z.transpose(order).reshape(*lead, ch, rows, cols)

    def encode_array(self, x: np.ndarray) -> np.ndarray:
        return self.patchify(np.asarray(x))

    def decode_array(self, z: np.ndarray, shape) -> np.ndarray:
        return self.unpatchify(np.asarray(z), shape)

    def encode(self, t: CsiTensor) -> LatentTensor:
        return LatentTensor(self.encode_array(t.data), tuple(t.shape), t)

    def decode(self, z: LatentTensor) -> CsiTensor:
        data = self.decode_array(z.values, z.grid_shape)
        if z.source is None:
            raise ValueError("latent tensor carries no grid provenance")
        src = z.source
        return CsiTensor(data, src.grid, src.valid_mask.copy(), src.antenna, src.timestamp)

    def pool_cells(self, cells: np.ndarray, shape) -> np.ndarray:
        """Average per-cell features (R*C, d) over each patch -> (tokens, d)."""
        rows, cols = shape
        self._check(rows, cols)
        p = self.patch_size
        d = cells.shape[-1]
        x = cells.reshape(rows // p, p, cols // p, p, d)
        return x.mean(axis=(1, 3)).reshape(-1, d)


class FrozenLinearCodec(PatchifyCodec):
    """Patchify followed by a fixed seeded orthonormal rotation of each token."""

    kind = "frozen_linear"

    def __init__(self, patch_size: int = 4, seed: int = 0):
        super().__init__(patch_size)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        q, r = np.linalg.qr(rng.standard_normal((self.latent_dim, self.latent_dim)))
        self.matrix = q * np.sign(np.diag(r))
        self.matrix.setflags(write=False)

    def spec(self) -> dict:
        return {"type": self.kind, "patch_size": self.patch_size, "seed": self.seed}

    def encode_array(self, x):
        return self.patchify(np.asarray(x)) @ self.matrix

    def decode_array(self, z, shape):
        return self.unpatchify(np.asarray(z) @ self.matrix.T, shape)


def make_codec(spec: dict) -> PatchifyCodec:
    kind = spec.get("type", "patchify")
    if kind == "patchify":
        return PatchifyCodec(spec.get("patch_size", 4))
    if kind == "frozen_linear":
        return FrozenLinearCodec(spec.get("patch_size", 4), spec.get("seed", 0))
    raise ValueError(f"unknown codec type {kind!r}")
