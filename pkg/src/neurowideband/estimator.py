"""scikit-learn style front end for training and extrapolation."""

from __future__ import annotations

from pathlib import Path

import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .codec import make_codec
from .diffusion import NoiseSchedule, extrapolate
from .layout import BandLayout
from .model import ModelConfig
from .trainer import TrainConfig, load_model, run_training, save_model
from .validation import check_frames, check_k

__all__ = ["NWBExtrapolator"]


class NWBExtrapolator(TransformerMixin, BaseEstimator):
    """Self-conditioned diffusion extrapolator of narrowband CSI.

    ``fit`` takes wideband frames and trains on random sub-bands of them;
    ``predict`` turns narrowband frames into frames ``k`` times wider with the
    same center and spacing. Defaults are the desk-scale preset; see
    :meth:`full_scale` for the large configuration.
    """

    def __init__(self, k=2, n_cols=4, patch_size=4, codec="patchify", codec_seed=0,
                 model_dim=64, num_blocks=4, num_heads=4, embed_dim=64, timestep_embed_dim=64, mlp_ratio=4,
                 timesteps=50, beta_start=None, beta_end=None, epochs=500, total_steps=2000,
                 batch_size=64, subband_augment=4, learning_rate=1e-3, weight_decay=0.01,
                 beta2=0.99, warmup_epochs=10, min_lr=0.0, clamp=False, dtype="float32",
                 random_state=0, checkpoint_dir=None):
        self.k = k
        self.n_cols = n_cols
        self.patch_size = patch_size
        self.codec = codec
        self.codec_seed = codec_seed
        self.model_dim = model_dim
        self.num_blocks = num_blocks
        self.num_heads = num_heads
        self.embed_dim = embed_dim
        self.timestep_embed_dim = timestep_embed_dim
        self.mlp_ratio = mlp_ratio
        self.timesteps = timesteps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.epochs = epochs
        self.total_steps = total_steps
        self.batch_size = batch_size
        self.subband_augment = subband_augment
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta2 = beta2
        self.warmup_epochs = warmup_epochs
        self.min_lr = min_lr
        self.clamp = clamp
        self.dtype = dtype
        self.random_state = random_state
        self.checkpoint_dir = checkpoint_dir

    @classmethod
    def full_scale(cls, **overrides):
        """The large preset: 32x32 tensors, 200 diffusion steps, large-batch optimizer settings."""
        params = dict(n_cols=32, model_dim=128, timesteps=200, epochs=100, total_steps=20_000,
                      batch_size=1024, learning_rate=0.02)
        params.update(overrides)
        return cls(**params)

    @classmethod
    def from_config(cls, cfg: dict, checkpoint_dir=None) -> "NWBExtrapolator":
        """Build from a validated run configuration (see :mod:`neurowideband.config`)."""
        m, s, t, e = cfg["model"], cfg["schedule"], cfg["training"], cfg["evaluation"]
        return cls(k=e["ks"][0], clamp=e["clamp"], random_state=cfg["seed"],
                   checkpoint_dir=checkpoint_dir,
                   **m, **s, **t)

    def _build(self):
        layout = BandLayout(make_codec({"type": self.codec, "patch_size": self.patch_size,
                                        "seed": self.codec_seed}),
                            self.n_cols, self.embed_dim)
        sched = NoiseSchedule.linear(self.timesteps, self.beta_start, self.beta_end)
        mconf = ModelConfig(latent_dim=layout.latent_dim, model_dim=self.model_dim,
                            num_blocks=self.num_blocks, num_heads=self.num_heads,
                            embed_dim=self.embed_dim, timestep_embed_dim=self.timestep_embed_dim,
                            mlp_ratio=self.mlp_ratio,
                            max_timestep=max(self.timesteps, 1000))
        tconf = TrainConfig(epochs=self.epochs, total_steps=self.total_steps,
                            batch_size=self.batch_size, subband_augment=self.subband_augment,
                            learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                            beta2=self.beta2, warmup_epochs=self.warmup_epochs,
                            min_lr=self.min_lr, seed=self.random_state)
        return layout, sched, mconf, tconf

    def fit(self, X, y=None, max_steps=None, progress=None):
        """Train on wideband frames ``X``; ``y`` is ignored (the frames are their own labels)."""
        frames = check_frames(X, min_subcarriers=20)
        layout, sched, mconf, tconf = self._build()
        trainer, report = run_training(frames, layout, sched, mconf, tconf,
                                       out_dir=self.checkpoint_dir, dtype=getattr(torch, self.dtype),
                                       max_steps=max_steps, progress=progress)
        self.model_ = trainer.model
        self.layout_ = layout
        self.schedule_ = sched
        self.report_ = report
        self.n_subcarriers_ = len(frames[0])
        return self

    def predict(self, X, k=None, seed=None):
        """Extrapolate every frame of ``X`` by ``k`` (default ``self.k``)."""
        check_is_fitted(self, "model_")
        frames = check_frames(X)
        k = check_k(self.k if k is None else k)
        seed = self.random_state if seed is None else seed
        return extrapolate(self.model_, self.layout_, self.schedule_, frames, k, seed=seed,
                           clamp=self.clamp)

    def transform(self, X):
        return self.predict(X)

    def save(self, path) -> Path:
        check_is_fitted(self, "model_")
        return save_model(path, self.model_, self.layout_, self.schedule_,
                          extra={"estimator": {k: v for k, v in self.get_params().items()
                                        if k != "checkpoint_dir"},
                                 "n_subcarriers": self.n_subcarriers_})

    @classmethod
    def load(cls, path) -> "NWBExtrapolator":
        model, layout, sched, manifest = load_model(path)
        params = manifest.get("estimator", {})
        est = cls(**params) if params else cls()
        est.model_ = model
        est.layout_ = layout
        est.schedule_ = sched
        est.n_subcarriers_ = manifest.get("n_subcarriers")
        return est
