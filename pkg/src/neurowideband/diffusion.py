"""Noise schedule and the closed-form pieces of the diffusion process.

All functions accept numpy arrays or torch tensors; only elementwise
arithmetic with python floats is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSchedule", "forward_sample", "single_step", "reverse_step", "estimate_z0",
           "posterior_coefficients"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule indexed 1..T.

    ``alpha_bar[0]`` is 1 by definition so the posterior at t = 1 collapses
    onto the clean estimate.
    """

    betas: np.ndarray
    beta_start: float
    beta_end: float
    shape: str = "linear"

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("schedule needs at least one step")
        if not np.all((b > 0) & (b < 1)):
            raise ValueError("every beta must lie in (0, 1)")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)
        alphas = 1.0 - b
        alphas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        ab = np.empty(b.size + 1)
        ab[0] = 1.0
        for t in range(1, b.size + 1):
            ab[t] = ab[t - 1] * alphas[t - 1]
        ab.setflags(write=False)
        object.__setattr__(self, "_alpha_bar", ab)

    @classmethod
    def linear(cls, timesteps: int = 50, beta_start: float | None = None,
               beta_end: float | None = None) -> "NoiseSchedule":
        """Linear betas; endpoints default to 1e-4 and 0.02 rescaled by 1000 / T.

        The rescaling keeps the terminal alpha_bar near zero for short chains
        (T = 50 with unscaled endpoints would stop at alpha_bar ~ 0.6).
        """
        if int(timesteps) != timesteps or timesteps < 1:
            raise ValueError("timesteps must be a positive integer")
        scale = 1000.0 / timesteps
        if beta_start is None:
            beta_start = min(1e-4 * scale, 0.999)
        if beta_end is None:
            beta_end = min(0.02 * scale, 0.999)
        if timesteps == 1:
            betas = np.array([beta_end], dtype=np.float64)
        else:
            betas = np.linspace(beta_start, beta_end, int(timesteps), dtype=np.float64)
        return cls(betas, float(beta_start), float(beta_end))

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def beta(self, t: int) -> float:
        self._check(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        return float(self._alpha_bar[t])

    @property
    def alpha_bars(self) -> np.ndarray:
        """alpha_bar_1..alpha_bar_T."""
        return self._alpha_bar[1:]

    def _check(self, t):
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")

    def spec(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end,
                "shape": self.shape}

    @classmethod
    def from_spec(cls, spec: dict) -> "NoiseSchedule":
        if spec.get("shape", "linear") != "linear":
            raise ValueError(f"unsupported schedule shape {spec.get('shape')!r}")
        return cls.linear(spec["T"], spec["beta_start"], spec["beta_end"])


def forward_sample(z0, t: int, eps, sched: NoiseSchedule):
    """Closed-form marginal q(z_t | z_0)."""
    sched._check(t)
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def single_step(z_prev, t: int, eps, sched: NoiseSchedule):
    """One Markov transition q(z_t | z_{t-1})."""
    return math.sqrt(sched.alpha(t)) * z_prev + math.sqrt(sched.beta(t)) * eps


def estimate_z0(z_t, eps_hat, t: int, sched: NoiseSchedule):
    """Invert the forward marginal given a noise estimate."""
    sched._check(t)
    ab = sched.alpha_bar(t)
    return (z_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


def posterior_coefficients(t: int, sched: NoiseSchedule) -> tuple[float, float, float]:
    """(coef on z0_hat, coef on z_t, posterior variance) of q(z_{t-1} | z_t, z0_hat)."""
    beta = sched.beta(t)
    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t - 1)
    c0 = math.sqrt(ab_prev) * beta / (1.0 - ab_t)
    ct = math.sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t)
    var = (1.0 - ab_prev) / (1.0 - ab_t) * beta
    return c0, ct, var


def reverse_step(z_t, z0_hat, t: int, sched: NoiseSchedule):
    """Posterior mean and variance used by the ancestral sampler."""
    c0, ct, var = posterior_coefficients(t, sched)
    return c0 * z0_hat + ct * z_t, var


def extrapolate(model, layout, sched: NoiseSchedule, inputs, k: int, seed: int = 0,
                clamp: bool = False, return_residual: bool = False):
    """Extrapolate narrowband frames to their k-times wider band.

    ``inputs`` is one CsiFrame or a list of frames sharing a grid size. A
    container of standard normal noise sized for the wide band is denoised
    from t = T down to 1 while the normalized input conditions every step;
    the last step emits the posterior mean. Output values are rescaled back
    by each input's normalization factor. With ``clamp`` the measured band
    is copied verbatim into the result.

    Returns the eCSI frame(s); with ``return_residual`` also the per-frame
    mean squared deviation from the input on the measured band (before
    clamping).
    """
    import torch

    from .channel import CsiFrame, expand_grid
    from .data import normalize
    from .rfe import extrapolation_coords

    single = isinstance(inputs, CsiFrame)
    frames = [inputs] if single else list(inputs)
    if not frames:
        raise ValueError("no input frames")
    n = len(frames[0])
    if any(len(f) != n for f in frames):
        raise ValueError("all input frames must have the same number of subcarriers")
    if sched.T > model.config.max_timestep:
        raise ValueError("schedule is longer than the model was built for")
    if model.config.latent_dim != layout.latent_dim or model.config.embed_dim != layout.embed_dim:
        raise ValueError("model and layout are incompatible")
    k = int(k)
    left = (k - 1) * n // 2
    dtype = next(model.parameters()).dtype

    wide_grids, z_a, embs, factors, normed = [], [], [], [], []
    coords = extrapolation_coords(n, k)
    for fr in frames:
        wide = expand_grid(fr.grid, k)
        fn, factor = normalize(fr)
        wide_grids.append(wide)
        normed.append(fn)
        factors.append(factor)
        z_a.append(layout.latent(fn, wide))
        embs.append(layout.embedding(coords, wide))
    z_a = torch.as_tensor(np.stack(z_a), dtype=dtype)
    emb = torch.as_tensor(np.stack(embs), dtype=dtype)

    gen = torch.Generator().manual_seed(int(seed))
    z = torch.randn(z_a.shape, generator=gen, dtype=torch.float64).to(dtype)
    model.eval()
    with torch.no_grad():
        for t in range(sched.T, 0, -1):
            tt = torch.full((len(frames),), t, dtype=torch.long)
            eps_hat = model(z_a, z, emb, tt)
            z0_hat = estimate_z0(z, eps_hat, t, sched)
            mean, var = reverse_step(z, z0_hat, t, sched)
            if t > 1:
                noise = torch.randn(z.shape, generator=gen, dtype=torch.float64).to(dtype)
                z = mean + math.sqrt(var) * noise
            else:
                z = mean

    zs = z.to(torch.float64).numpy()
    out, residuals = [], []
    for i, fr in enumerate(frames):
        vals = layout.values_from_latent(zs[i], wide_grids[i])
        band = slice(left, left + n)
        residuals.append(float(np.mean(np.abs(vals[band] - normed[i].values) ** 2)))
        vals = vals * factors[i]
        if clamp:
            vals[band] = fr.values
        out.append(CsiFrame(wide_grids[i], vals, fr.antenna, fr.timestamp))
    result = out[0] if single else out
    if return_residual:
        return result, (residuals[0] if single else residuals)
    return result
