"""Frequency-aware transformer noise predictor.

Pipeline for one denoising call::

    [z_bt | z_a] --linear--> tokens + timestep embedding + projected RFE
      -> self-attention blocks                       (z_g)
      -> cross-attention: queries from RFE, keys/values from z_g   (z_d)
      -> one transformer decoder block over z_d with memory z_g
      -> width-3 convolution along tokens -> noise estimate
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
import torch.nn.functional as F

__all__ = ["ModelConfig", "FrequencyAwareDenoiser", "init_parameters", "predict_noise",
           "attention", "timestep_embedding", "expected_parameter_count"]


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 48
    model_dim: int = 128
    num_blocks: int = 4
    num_heads: int = 4
    embed_dim: int = 64
    timestep_embed_dim: int = 64
    mlp_ratio: int = 4
    max_timestep: int = 1000

    def __post_init__(self):
        for name in ("latent_dim", "model_dim", "num_heads", "embed_dim", "timestep_embed_dim",
                     "mlp_ratio", "max_timestep"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.model_dim % self.num_heads:
            raise ValueError("model_dim must be divisible by num_heads")
        if self.timestep_embed_dim % 2:
            raise ValueError("timestep_embed_dim must be even")

    def to_dict(self) -> dict:
        return asdict(self)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


def attention(q, k, v, num_heads: int = 1, return_weights: bool = False):
    """Scaled dot-product attention; ``q``/``k``/``v`` are (B, N, D)."""
    b, nq, d = q.shape
    nk = k.shape[1]
    hd = d // num_heads
    q = q.view(b, nq, num_heads, hd).transpose(1, 2)
    k = k.view(b, nk, num_heads, hd).transpose(1, 2)
    v = v.view(b, nk, num_heads, hd).transpose(1, 2)
    w = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(hd), dim=-1)
    out = (w @ v).transpose(1, 2).reshape(b, nq, d)
    return (out, w) if return_weights else out


class MultiHeadAttention(nn.Module):
    def __init__(self, dim, num_heads, kv_dim=None):
        super().__init__()
        kv_dim = kv_dim or dim
        self.num_heads = num_heads
        self.wq = nn.Linear(dim, dim)
        self.wk = nn.Linear(kv_dim, dim)
        self.wv = nn.Linear(kv_dim, dim)
        self.wo = nn.Linear(dim, dim)

    def forward(self, x, mem=None):
        mem = x if mem is None else mem
        return self.wo(attention(self.wq(x), self.wk(mem), self.wv(mem), self.num_heads))


class Mlp(nn.Module):
    def __init__(self, dim, ratio):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim * ratio)
        self.fc2 = nn.Linear(dim * ratio, dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class TransformerBlock(nn.Module):
    def __init__(self, dim, heads, ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, ratio)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class DecoderBlock(nn.Module):
    def __init__(self, dim, heads, ratio):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.self_attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.cross_attn = MultiHeadAttention(dim, heads)
        self.norm3 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, ratio)

    def forward(self, x, mem):
        x = x + self.self_attn(self.norm1(x))
        x = x + self.cross_attn(self.norm2(x), mem)
        return x + self.mlp(self.norm3(x))


class FrequencyCrossAttention(nn.Module):
    """softmax(E Wq (z_g Wk)^T / sqrt(D)) z_g Wv, single head, no biases."""

    def __init__(self, embed_dim, dim):
        super().__init__()
        self.wq = nn.Linear(embed_dim, dim, bias=False)
        self.wk = nn.Linear(dim, dim, bias=False)
        self.wv = nn.Linear(dim, dim, bias=False)

    def forward(self, emb, z_g, return_weights=False):
        return attention(self.wq(emb), self.wk(z_g), self.wv(z_g), 1, return_weights)


class FrequencyAwareDenoiser(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.reduce = nn.Linear(2 * c.latent_dim, c.model_dim, bias=False)
        self.time_embed = nn.Linear(c.timestep_embed_dim, c.model_dim)
        self.pos_embed = nn.Linear(c.embed_dim, c.model_dim, bias=False)
        self.blocks = nn.ModuleList(
            TransformerBlock(c.model_dim, c.num_heads, c.mlp_ratio) for _ in range(c.num_blocks))
        self.cross = FrequencyCrossAttention(c.embed_dim, c.model_dim)
        self.decoder = DecoderBlock(c.model_dim, c.num_heads, c.mlp_ratio)
        self.out_norm = nn.LayerNorm(c.model_dim)
        self.out_conv = nn.Conv1d(c.model_dim, c.latent_dim, kernel_size=3, padding=1)

    def forward(self, z_a, z_bt, emb, t):
        """Predict the noise in ``z_bt``.

        Args:
            z_a: (B, N, latent_dim) clean condition, zero outside the measured band.
            z_bt: (B, N, latent_dim) noisy full-band latent.
            emb: (N, embed_dim) or (B, N, embed_dim) relative frequency embedding.
            t: (B,) integer timesteps in [1, max_timestep].
        """
        c = self.config
        if z_a.shape != z_bt.shape or z_bt.ndim != 3 or z_bt.shape[-1] != c.latent_dim:
            raise ValueError(f"latent shapes {tuple(z_a.shape)} / {tuple(z_bt.shape)} do not match "
                             f"(B, N, {c.latent_dim})")
        b, n, _ = z_bt.shape
        if emb.ndim == 2:
            emb = emb.unsqueeze(0).expand(b, -1, -1)
        if emb.shape[:2] != (b, n) or emb.shape[-1] != c.embed_dim:
            raise ValueError(f"embedding shape {tuple(emb.shape)} does not match {n} tokens")
        t = torch.as_tensor(t).reshape(-1)
        if t.numel() == 1 and b > 1:
            t = t.expand(b)
        if t.numel() != b:
            raise ValueError("one timestep per batch element required")
        if int(t.min()) < 1 or int(t.max()) > c.max_timestep:
            raise ValueError(f"timestep outside [1, {c.max_timestep}]")

        temb = self.time_embed(timestep_embedding(t, c.timestep_embed_dim).to(z_bt.dtype))
        pos = self.pos_embed(emb)
        x = self.reduce(torch.cat([z_bt, z_a], dim=-1)) + temb[:, None, :] + pos
        for blk in self.blocks:
            x = blk(x)
        z_g = x
        z_d = self.cross(emb, z_g) + pos
        y = self.out_norm(self.decoder(z_d, z_g))
        return self.out_conv(y.transpose(1, 2)).transpose(1, 2)


def init_parameters(config: ModelConfig, seed: int = 0, dtype=torch.float32) -> FrequencyAwareDenoiser:
    """Deterministic initialization; the output convolution starts at zero."""
    gen = torch.Generator().manual_seed(int(seed))
    model = FrequencyAwareDenoiser(config).to(dtype)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.startswith("out_conv"):
                p.zero_()
            elif "norm" in name:
                p.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name.endswith("bias"):
                p.zero_()
            else:
                fan_in = p.shape[1] if p.ndim == 2 else p[0].numel()
                p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) / math.sqrt(fan_in))
    return model


def predict_noise(model: FrequencyAwareDenoiser, z_a, z_bt, emb, t):
    return model(z_a, z_bt, emb, t)


def expected_parameter_count(c: ModelConfig) -> int:
    d, r = c.model_dim, c.mlp_ratio
    attn = 4 * (d * d + d)
    mlp = d * r * d + r * d + r * d * d + d
    norm = 2 * d
    block = 2 * norm + attn + mlp
    decoder = 3 * norm + 2 * attn + mlp
    return (2 * c.latent_dim * d                      # reduce
            + c.timestep_embed_dim * d + d              # time embed
            + c.embed_dim * d                           # pos embed
            + c.num_blocks * block
            + c.embed_dim * d + 2 * d * d               # cross attention
            + decoder
            + norm
            + d * c.latent_dim * 3 + c.latent_dim)      # output conv
