"""Self-supervised training loop.

Every training frame is its own label: random sub-bands (5-50 % of the
frame) condition the denoiser while the full frame is noised and its noise
predicted. Optimization is AdamW under a warmup + cosine learning-rate
schedule.
"""

from __future__ import annotations

import json
import logging
import math
import shutil
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .channel import CsiFrame
from .checkpoint import CheckpointError, load_arrays, save_arrays
from .data import normalize, sample_subbands
from .diffusion import NoiseSchedule, forward_sample
from .layout import BandLayout
from .model import FrequencyAwareDenoiser, ModelConfig, init_parameters
from .rfe import observed_coords

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainReport", "FULL_SCALE", "DESK_SCALE", "TrainingDivergedError",
           "lr_at", "Trainer", "train_step", "run_training", "save_model", "load_model"]


class TrainingDivergedError(FloatingPointError):
    """Raised when the loss stops being finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    total_steps: int = 20_000
    batch_size: int = 1024
    subband_augment: int = 4
    learning_rate: float = 0.02
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    warmup_epochs: int = 10
    min_lr: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "total_steps", "batch_size", "subband_augment"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate < 0 or self.min_lr < 0 or self.weight_decay < 0:
            raise ValueError("learning rates and weight decay must be nonnegative")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


FULL_SCALE = TrainConfig()
# lr 0.02 tends to diverge with adaptive moments at small batch
DESK_SCALE = TrainConfig(epochs=500, total_steps=2000, batch_size=64, learning_rate=1e-3,
                         warmup_epochs=10)


def steps_per_epoch(n_frames: int, config: TrainConfig) -> int:
    return math.ceil(n_frames / config.batch_size)


def schedule_length(config: TrainConfig, spe: int) -> int:
    return min(config.epochs * spe, config.total_steps)


def lr_at(step: int, config: TrainConfig, steps_per_epoch: int = 1) -> float:
    """Linear warmup to ``learning_rate`` then cosine decay to ``min_lr``."""
    if step < 0:
        raise ValueError("step must be >= 0")
    total = schedule_length(config, steps_per_epoch)
    warm = min(config.warmup_epochs * steps_per_epoch, total)
    if step < warm:
        return config.learning_rate * step / warm
    if step >= total:
        return config.min_lr
    progress = (step - warm) / (total - warm)
    return config.min_lr + (config.learning_rate - config.min_lr) * 0.5 * (1 + math.cos(math.pi * progress))


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    wall_clock: float = 0.0
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "TrainReport":
        return cls(**json.loads(Path(path).read_text()))


class Trainer:
    """Owns the model, optimizer and random streams for one training run."""

    def __init__(self, frames: list[CsiFrame], layout: BandLayout, sched: NoiseSchedule,
                 model_config: ModelConfig, config: TrainConfig, dtype=torch.float32, model=None):
        if not frames:
            raise ValueError("training set is empty")
        n = len(frames[0])
        if any(len(f) != n for f in frames):
            raise ValueError("training frames must share one subcarrier count")
        if n < 20:
            raise ValueError("training frames need at least 20 subcarriers")
        if model_config.latent_dim != layout.latent_dim or model_config.embed_dim != layout.embed_dim:
            raise ValueError("model config does not match the layout")
        if sched.T > model_config.max_timestep:
            raise ValueError("schedule is longer than the model's timestep range")
        self.layout = layout
        self.sched = sched
        self.config = config
        self.model_config = model_config
        self.dtype = dtype
        self.num_subcarriers = n
        self.model = model if model is not None else init_parameters(model_config, config.seed, dtype)
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=0.0,
                                           betas=(config.beta1, config.beta2),
                                           weight_decay=config.weight_decay)
        self.rng = np.random.default_rng(config.seed)
        self.gen = torch.Generator().manual_seed(config.seed + 1)
        self.step_count = 0
        self.epoch = 0
        self.spe = steps_per_epoch(len(frames), config)
        self.total_steps = schedule_length(config, self.spe)
        self._tensors = np.stack([layout.tensor_data(normalize(f)[0], f.grid) for f in frames])
        self._shape = self._tensors.shape[-2:]
        self._emb_cache: dict[tuple[int, int], np.ndarray] = {}
        self._grid = frames[0].grid

    def _embedding(self, start: int, length: int) -> np.ndarray:
        key = (start, length)
        if key not in self._emb_cache:
            coords = observed_coords(start, length, self.num_subcarriers)
            self._emb_cache[key] = self.layout.embedding(coords, self._grid)
        return self._emb_cache[key]

    def assemble(self, indices):
        """Build one batch of (z_a, z_bt, emb, t, eps) tensors for frame ``indices``."""
        n_aug = self.config.subband_augment
        codec = self.layout.codec
        full = self._tensors[indices]                     # (B, 3, R, C)
        z_b = codec.encode_array(full)                    # (B, N, D)
        cells = np.arange(full.shape[-2] * full.shape[-1])
        embs, ts, epss, zbts, bands = [], [], [], [], []
        for b in range(len(indices)):
            t = int(self.rng.integers(1, self.sched.T + 1))
            starts, lengths = sample_subbands(self.num_subcarriers, n_aug, self.rng)
            eps = torch.randn(z_b.shape[1:], generator=self.gen, dtype=torch.float64)
            z_bt = forward_sample(torch.from_numpy(z_b[b]), t, eps, self.sched)
            for s, ln in zip(starts.tolist(), lengths.tolist()):
                bands.append((s, ln))
                embs.append(self._embedding(s, ln))
                ts.append(t)
                epss.append(eps)
                zbts.append(z_bt)
        lo = np.array([s for s, _ in bands])[:, None]
        hi = lo + np.array([ln for _, ln in bands])[:, None]
        keep = ((cells >= lo) & (cells < hi)).reshape(-1, *self._shape)
        sub = np.repeat(full, n_aug, axis=0)
        sub[:, :2] *= keep[:, None]
        conds = codec.encode_array(sub)
        cast = dict(dtype=self.dtype)
        return (torch.as_tensor(conds, **cast), torch.stack(zbts).to(self.dtype),
                torch.as_tensor(np.stack(embs), **cast), torch.tensor(ts, dtype=torch.long),
                torch.stack(epss).to(self.dtype))

    def loss(self, batch) -> torch.Tensor:
        z_a, z_bt, emb, t, eps = batch
        eps_hat = self.model(z_a, z_bt, emb, t)
        return torch.mean((eps_hat - eps) ** 2)

    def step(self, indices) -> tuple[float, float]:
        """One optimizer update on frames ``indices``; returns (loss, lr)."""
        self.model.train()
        lr = lr_at(self.step_count, self.config, self.spe)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        batch = self.assemble(indices)
        loss = self.loss(batch)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergedError(
                f"non-finite loss {value} at step {self.step_count} (lr={lr:.3g})")
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.step_count += 1
        return value, lr

    def epoch_batches(self):
        order = self.rng.permutation(len(self._tensors))
        bs = self.config.batch_size
        return [order[i:i + bs] for i in range(0, len(order), bs)]

    @property
    def finished(self) -> bool:
        return self.step_count >= self.total_steps

    # state persistence ---------------------------------------------------------------
    def state_arrays(self) -> tuple[dict, dict]:
        arrays = {f"param.{k}": v.detach().cpu().numpy() for k, v in self.model.state_dict().items()}
        opt_steps = {}
        for name, p in self.model.named_parameters():
            st = self.optimizer.state.get(p)
            if st:
                arrays[f"optim.exp_avg.{name}"] = st["exp_avg"].detach().numpy()
                arrays[f"optim.exp_avg_sq.{name}"] = st["exp_avg_sq"].detach().numpy()
                opt_steps[name] = float(st["step"])
        arrays["rng.torch"] = self.gen.get_state().numpy()
        extra = {"step": self.step_count, "epoch": self.epoch, "optimizer_steps": opt_steps,
                 "numpy_rng": self.rng.bit_generator.state}
        return extra, arrays

    def load_state(self, manifest: dict, arrays: dict) -> None:
        load_params(self.model, arrays)
        state = manifest["trainer"]
        for name, p in self.model.named_parameters():
            if name in state["optimizer_steps"]:
                self.optimizer.state[p] = {
                    "step": torch.tensor(state["optimizer_steps"][name]),
                    "exp_avg": torch.from_numpy(arrays[f"optim.exp_avg.{name}"]).to(p.dtype),
                    "exp_avg_sq": torch.from_numpy(arrays[f"optim.exp_avg_sq.{name}"]).to(p.dtype),
                }
        self.gen.set_state(torch.from_numpy(arrays["rng.torch"]))
        self.rng.bit_generator.state = state["numpy_rng"]
        self.step_count = state["step"]
        self.epoch = state["epoch"]


def train_step(trainer: Trainer, indices) -> float:
    return trainer.step(indices)[0]


def _dtype_name(dtype) -> str:
    return str(dtype).replace("torch.", "")


def model_manifest(model: FrequencyAwareDenoiser, layout: BandLayout, sched: NoiseSchedule,
                   train_config: TrainConfig | None = None) -> dict:
    m = {"model": model.config.to_dict(), "layout": layout.spec(), "schedule": sched.spec(),
         "dtype": _dtype_name(next(model.parameters()).dtype)}
    if train_config is not None:
        m["training"] = asdict(train_config)
    return m


def load_params(model: FrequencyAwareDenoiser, arrays: dict) -> None:
    state = {k[len("param."):]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("param.")}
    missing = set(model.state_dict()) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters {sorted(missing)}")
    model.load_state_dict(state)


def save_model(directory, model, layout, sched, train_config=None, extra=None) -> Path:
    arrays = {f"param.{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    manifest = model_manifest(model, layout, sched, train_config)
    if extra:
        manifest.update(extra)
    return save_arrays(directory, arrays, manifest)


def load_model(directory):
    """Return (model, layout, schedule, manifest) from a checkpoint directory."""
    manifest, arrays = load_arrays(directory)
    for key in ("model", "layout", "schedule"):
        if key not in manifest:
            raise CheckpointError(f"manifest lacks the {key!r} section")
    config = ModelConfig(**manifest["model"])
    dtype = getattr(torch, manifest.get("dtype", "float32"))
    model = FrequencyAwareDenoiser(config).to(dtype)
    load_params(model, arrays)
    return model, BandLayout.from_spec(manifest["layout"]), NoiseSchedule.from_spec(manifest["schedule"]), manifest


def _latest(out_dir: Path) -> Path | None:
    pointer = out_dir / "checkpoints" / "LATEST"
    if pointer.is_file():
        return out_dir / "checkpoints" / pointer.read_text().strip()
    return None


def run_training(frames, layout: BandLayout, sched: NoiseSchedule, model_config: ModelConfig,
                 config: TrainConfig, out_dir=None, resume: bool = True, dtype=torch.float32,
                 max_steps: int | None = None, progress=None,
                 keep_checkpoints: int = 3) -> tuple[Trainer, TrainReport]:
    """Train until the step cap, checkpointing after every epoch when ``out_dir`` is set.

    Only the newest ``keep_checkpoints`` epoch checkpoints are retained.

    ``max_steps`` stops early (without touching the learning-rate schedule),
    which is how an interrupted run is simulated.
    """
    frames = [r.frame if hasattr(r, "frame") else r for r in frames]
    if not frames:
        raise ValueError("training set is empty")
    trainer = Trainer(frames, layout, sched, model_config, config, dtype)
    report = TrainReport()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None and resume:
        latest = _latest(out_dir)
        if latest is not None:
            manifest, arrays = load_arrays(latest)
            trainer.load_state(manifest, arrays)
            report = TrainReport.load(latest / "report.json")
            log.info("resumed from %s at step %d", latest, trainer.step_count)
    stop = trainer.total_steps if max_steps is None else min(max_steps, trainer.total_steps)
    start_time = time.perf_counter()
    while trainer.step_count < stop:
        for idx in trainer.epoch_batches():
            if trainer.step_count >= stop:
                break
            loss, lr = trainer.step(idx)
            report.losses.append(loss)
            report.learning_rates.append(lr)
            if progress is not None:
                progress(trainer.step_count, loss)
        else:
            trainer.epoch += 1
            if out_dir is not None:
                _checkpoint(trainer, report, out_dir, start_time, keep_checkpoints)
            continue
        break
    report.wall_clock += time.perf_counter() - start_time
    if out_dir is not None:
        final = out_dir / "model"
        save_model(final, trainer.model, layout, sched, config)
        report.checkpoint = str(final)
        report.save(out_dir / "report.json")
    return trainer, report


def _checkpoint(trainer: Trainer, report: TrainReport, out_dir: Path, start_time: float,
                keep: int = 3) -> None:
    name = f"epoch_{trainer.epoch:05d}"
    path = out_dir / "checkpoints" / name
    extra, arrays = trainer.state_arrays()
    manifest = model_manifest(trainer.model, trainer.layout, trainer.sched, trainer.config)
    manifest["trainer"] = extra
    save_arrays(path, arrays, manifest)
    snap = replace(report, losses=list(report.losses), learning_rates=list(report.learning_rates),
                   wall_clock=report.wall_clock + time.perf_counter() - start_time)
    snap.save(path / "report.json")
    (out_dir / "checkpoints" / "LATEST").write_text(name)
    old = sorted(p for p in (out_dir / "checkpoints").glob("epoch_*") if p.is_dir())
    for p in old[:-max(keep, 1)]:
        shutil.rmtree(p)
