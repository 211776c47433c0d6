"""Command-line entry point: simulate, make-dataset, train, extrapolate, eval, tof, breath."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULTS, ConfigError, flatten, load_config

log = logging.getLogger("neurowideband")

# config sections each subcommand reads; their keys become --section.key flags
SECTIONS = {
    "simulate": ("simulation", "data"),
    "make-dataset": ("data",),
    "train": ("model", "schedule", "training"),
    "extrapolate": ("evaluation",),
    "eval": ("evaluation",),
    "tof": ("sensing",),
    "breath": ("sensing",),
}


class CliError(Exception):
    """User-facing failure with a module tag for the error report."""

    def __init__(self, message, module="cli"):
        super().__init__(message)
        self.module = module


def _flag_type(default):
    if isinstance(default, bool):
        return lambda s: {"true": True, "false": False, "1": True, "0": False}[s.lower()]
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, list):
        return lambda s: [type(default[0])(x) for x in s.split(",")]
    if default is None:
        return lambda s: None if s.lower() in ("none", "null") else float(s) if "." in s or "e" in s.lower() else int(s)
    return str


def _add_config_flags(p: argparse.ArgumentParser, sections):
    g = p.add_argument_group("configuration overrides (same names as the config file keys)")
    for key, default in flatten({s: DEFAULTS[s] for s in sections}).items():
        hint = ",".join(map(str, default)) if isinstance(default, list) else default
        g.add_argument(f"--{key}", dest=f"cfg:{key}", type=_flag_type(default), default=None,
                       metavar=type(default).__name__.upper() if default is not None else "VALUE",
                       help=f"default: {hint}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neurowideband",
                                     description="Wideband CSI extrapolation from narrowband measurements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", type=Path, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="overrides the config 'seed' key")
        p.add_argument("--threads", type=int, default=None, help="overrides the config 'threads' key")
        p.add_argument("--plots", action="store_true", help="also write PNG figures")
        p.add_argument("-v", "--verbose", action="store_true")
        _add_config_flags(p, SECTIONS[name])
        return p

    p = command("simulate", "Synthesize a wideband CSI dataset from random or breathing scenes.")
    p.add_argument("--out", type=Path, required=True, help="output dataset (.nwbd or .jsonl)")

    p = command("make-dataset", "Split a dataset into train/test files, optionally with narrowband inputs.")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--narrow-k", type=int, default=None,
                   help="also write test_inputs: the central 1/k of each test frame")

    p = command("train", "Train the extrapolator on wideband frames.")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="run directory (checkpoints, model, report)")
    p.add_argument("--no-resume", action="store_true", help="ignore existing checkpoints")
    p.add_argument("--max-steps", type=int, default=None, help="stop early after this many steps")

    p = command("extrapolate", "Extrapolate narrowband frames k times wider.")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--checkpoint", type=Path, required=True, help="model directory")
    p.add_argument("--out", type=Path, required=True, help="output eCSI dataset")

    p = command("eval", "Score a model (or precomputed eCSI) against ground-truth wideband frames.")
    p.add_argument("--truth", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path, help="model directory")
    src.add_argument("--ecsi", type=Path, help="eCSI dataset aligned with --truth")
    p.add_argument("--out", type=Path, required=True, help="output directory for metrics.csv/json")

    p = command("tof", "First-path time of flight for every frame.")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = command("breath", "Per-path breathing rate from a CSI time series.")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def _resolve_config(args) -> dict:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    return load_config(args.config, overrides)


def _load(path: Path):
    from .formats import load_records

    if not path.exists():
        raise CliError(f"input not found: {path}", "csi-data")
    return load_records(path)


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def cmd_simulate(args, cfg):
    from .channel import (EnvironmentSpec, FrequencyGrid, add_awgn, breathing_scene,
                          sample_environment, synthesize_csi, synthesize_series)
    from .data import DatasetRecord
    from .formats import save_records

    s = cfg["simulation"]
    grid = FrequencyGrid(s["center_hz"], s["spacing_hz"], s["num_subcarriers"])
    rng = np.random.default_rng(cfg["seed"])
    records = []
    if s["scene"] == "breathing":
        env, motions = breathing_scene(s["subjects"], s["breath_rate_hz"],
                                       s["breath_amplitude_ps"] * 1e-12)
        frames = synthesize_series(env, motions, grid, s["antenna"], s["sample_rate_hz"],
                                   s["duration_s"])
        records = [DatasetRecord(f, env.label) for f in frames]
    else:
        spec = EnvironmentSpec(tuple(s["num_paths"]),
                               tuple(x * 1e-9 for x in s["delay_range_ns"]),
                               tuple(s["gain_range"]), tuple(s["aoa_range"]), s["sort_gains"])
        for i in range(s["num_frames"]):
            env = sample_environment(spec, rng, label=f"env{i:06d}")
            records.append(DatasetRecord(synthesize_csi(env, grid, s["antenna"]), env.label))
    if s["snr_db"] is not None:
        records = [DatasetRecord(add_awgn(r.frame, s["snr_db"], rng), r.env_label) for r in records]
    out = _with_format(args.out, cfg)
    save_records(out, records)
    return {"output": str(out), "records": len(records), "bandwidth_hz": grid.bandwidth}


def _with_format(path: Path, cfg) -> Path:
    if path.suffix in (".nwbd", ".jsonl"):
        return path
    return path.with_suffix(".jsonl" if cfg["data"]["format"] == "jsonl" else ".nwbd")


def cmd_make_dataset(args, cfg):
    from .data import DatasetRecord
    from .formats import save_records
    from .metrics import central_band

    records = _load(args.input)
    rng = np.random.default_rng(cfg["seed"])
    order = rng.permutation(len(records))
    n_train = int(round(cfg["data"]["train_fraction"] * len(records)))
    train = [records[i] for i in sorted(order[:n_train])]
    test = [records[i] for i in sorted(order[n_train:])]
    ext = ".jsonl" if cfg["data"]["format"] == "jsonl" else ".nwbd"
    args.out.mkdir(parents=True, exist_ok=True)
    save_records(args.out / f"train{ext}", train)
    save_records(args.out / f"test{ext}", test)
    result = {"train": len(train), "test": len(test), "output": str(args.out)}
    if args.narrow_k:
        k = args.narrow_k
        narrow = []
        for r in test:
            if len(r.frame) % k:
                raise CliError(f"{len(r.frame)} subcarriers are not divisible by k={k}", "csi-data")
            narrow.append(DatasetRecord(central_band(r.frame, len(r.frame) // k), r.env_label))
        save_records(args.out / f"test_inputs{ext}", narrow)
        result["test_inputs"] = len(narrow)
    return result


def cmd_train(args, cfg):
    from .estimator import NWBExtrapolator

    records = _load(args.input)
    est = NWBExtrapolator.from_config(cfg, checkpoint_dir=args.out)
    if args.no_resume and (args.out / "checkpoints").exists():
        raise CliError(f"{args.out} already has checkpoints; remove them or drop --no-resume", "trainer")

    def progress(step, loss):
        if step % 100 == 0:
            log.info("step %d loss %.5f", step, loss)

    est.fit(records, max_steps=args.max_steps, progress=progress)
    losses = est.report_.losses
    if args.plots and losses:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.semilogy(losses, lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        fig.tight_layout()
        fig.savefig(args.out / "loss.png", dpi=120)
        plt.close(fig)
    return {"model": str(args.out / "model"), "steps": len(losses),
            "final_loss": float(np.mean(losses[-50:])) if losses else None}


def _load_estimator(path: Path, cfg):
    from .estimator import NWBExtrapolator

    if not (path / "manifest.json").is_file():
        raise CliError(f"no model checkpoint at {path}", "checkpoint")
    est = NWBExtrapolator.load(path)
    est.set_params(clamp=cfg["evaluation"]["clamp"], random_state=cfg["seed"])
    return est


def cmd_extrapolate(args, cfg):
    from .data import DatasetRecord
    from .formats import save_records

    records = _load(args.input)
    est = _load_estimator(args.checkpoint, cfg)
    ecsi = est.predict(records, k=args.k, seed=cfg["seed"])
    out = [DatasetRecord(e, r.env_label) for e, r in zip(ecsi, records)]
    save_records(args.out, out)
    return {"output": str(args.out), "records": len(out),
            "bandwidth_hz": out[0].frame.grid.bandwidth if out else 0.0}


class _Precomputed:
    def __init__(self, frames):
        self.frames = frames

    def predict(self, inputs, k=2, seed=0):
        return self.frames


def cmd_eval(args, cfg):
    from .metrics import central_band, evaluate

    truths = [r.frame for r in _load(args.truth)]
    e = cfg["evaluation"]
    if args.ecsi is not None:
        ecsi = [r.frame for r in _load(args.ecsi)]
        if len(ecsi) != len(truths):
            raise CliError("eCSI and truth datasets differ in length", "metrics")
        ks = [e["ks"][0]]
        width = len(ecsi[0])
        if len(truths[0]) < width or width % ks[0]:
            raise CliError(f"eCSI width {width} does not fit the truth band with k={ks[0]}", "metrics")
        truths = [central_band(t, width) for t in truths]
        model = _Precomputed(ecsi)
    else:
        model = _load_estimator(args.checkpoint, cfg)
        ks = e["ks"]
    table = evaluate(model, truths, ks=ks, seed=cfg["seed"], noise_baseline=e["noise_baseline"],
                     out_dir=args.out)
    if args.plots:
        plt = _plt()
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
        for ax, metric in zip(axes, ("mse", "acc_cir")):
            for key, vals in table.samples.items():
                if key.endswith(f"_{metric}") and vals:
                    y = np.arange(1, len(vals) + 1) / len(vals)
                    ax.step(vals, y, where="post", label=key)
            ax.set_xlabel(metric)
            ax.set_ylabel("CDF")
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(args.out / "metrics_cdf.png", dpi=120)
        plt.close(fig)
    return {"rows": table.rows, "output": str(args.out)}


def cmd_tof(args, cfg):
    from .metrics import cfr_to_cir
    from .sensing import estimate_tof

    s = cfg["sensing"]
    records = _load(args.input)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, r in enumerate(records):
        est = estimate_tof(r.frame, s["dominance_ratio"], s["zero_pad_factor"])
        rows.append({"index": i, "label": r.env_label, "timestamp": r.frame.timestamp,
                     "tof_s": est.tof, "peak_tap": est.peak_tap,
                     "peak_magnitude": est.peak_magnitude})
    with (args.out / "tof.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["index"])
        w.writeheader()
        w.writerows(rows)
    (args.out / "tof.json").write_text(json.dumps(rows, indent=2))
    if args.plots and records:
        plt = _plt()
        cir = cfr_to_cir(records[0].frame, s["zero_pad_factor"])
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(cir.delays * 1e9, cir.magnitude)
        ax.axvline(rows[0]["tof_s"] * 1e9, color="r", ls="--")
        ax.set_xlabel("delay (ns)")
        ax.set_ylabel("|CIR|")
        fig.tight_layout()
        fig.savefig(args.out / "tof_cir.png", dpi=120)
        plt.close(fig)
    tofs = [r["tof_s"] for r in rows]
    return {"frames": len(rows), "mean_tof_s": float(np.mean(tofs)) if tofs else None,
            "output": str(args.out)}


def cmd_breath(args, cfg):
    from .sensing import estimate_breathing

    s = cfg["sensing"]
    frames = [r.frame for r in _load(args.input)]
    est = estimate_breathing(frames, window_s=s["window_s"], sample_rate_hz=s["sample_rate_hz"],
                             hop_s=s["hop_s"], band=tuple(s["band_hz"]), peak_ratio=s["peak_ratio"],
                             persistence=s["persistence"], zero_pad_factor=s["zero_pad_factor"],
                             n_subjects=s["n_subjects"])
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "breath.json").write_text(json.dumps(est.to_dict(), indent=2))
    with (args.out / "breath.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s"] + [f"path{p.tap}_bpm" for p in est.paths])
        for i, t in enumerate(est.times):
            w.writerow([float(t)] + [float(p.bpm[i]) for p in est.paths])
    if args.plots and est.paths:
        plt = _plt()
        fig, axes = plt.subplots(len(est.paths), 1, figsize=(6, 2.2 * len(est.paths)), squeeze=False)
        for ax, p in zip(axes[:, 0], est.paths):
            ax.imshow(p.spectrogram.T, aspect="auto", origin="lower",
                      extent=[est.times[0], est.times[-1], est.freqs[0] * 60, est.freqs[-1] * 60])
            ax.set_ylabel(f"tap {p.tap} bpm")
        axes[-1, 0].set_xlabel("time (s)")
        fig.tight_layout()
        fig.savefig(args.out / "breath_spectrogram.png", dpi=120)
        plt.close(fig)
    return {"paths": [{"tap": p.tap, "median_bpm": float(np.nanmedian(p.bpm))} for p in est.paths],
            "output": str(args.out)}


COMMANDS = {
    "simulate": cmd_simulate,
    "make-dataset": cmd_make_dataset,
    "train": cmd_train,
    "extrapolate": cmd_extrapolate,
    "eval": cmd_eval,
    "tof": cmd_tof,
    "breath": cmd_breath,
}

_MODULE_OF = {
    "channel": "channel-sim", "data": "csi-data", "formats": "csi-data", "rfe": "rfe",
    "codec": "latent-codec", "layout": "latent-codec", "model": "fredit-net",
    "diffusion": "diffusion", "trainer": "trainer", "checkpoint": "trainer",
    "metrics": "metrics", "sensing": "sensing", "estimator": "trainer", "config": "cli",
}


def _module_of(exc: BaseException) -> str:
    if isinstance(exc, CliError):
        return exc.module
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        stem = Path(frame.filename).stem
        if "neurowideband" in frame.filename and stem in _MODULE_OF:
            return _MODULE_OF[stem]
    return "cli"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        import torch

        torch.set_num_threads(cfg["threads"])
        result = COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        err = {"error": "ConfigError", "module": "cli", "message": str(exc),
               "details": [{"path": p, "message": m} for p, m in exc.errors]}
        print(json.dumps(err), file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a machine-readable report
        err = {"error": type(exc).__name__, "module": _module_of(exc), "message": str(exc)}
        if args.verbose:
            err["traceback"] = traceback.format_exc()
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(result, default=_json_default))
    return 0


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and math.isnan(o):
        return None
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
