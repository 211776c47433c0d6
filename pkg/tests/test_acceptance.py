"""The ten acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line that the terminal summary prints; run
``pytest tests/test_acceptance.py -s`` to also see them inline.
"""
import functools
import math
import time

import numpy as np
import pytest
import torch
from conftest import ACCEPTANCE
from oracles import brute_force_csi, finite_difference_check, posterior_reference, toy_problem

from neurowideband.channel import (EnvironmentSpec, FrequencyGrid, MultipathEnvironment, PropagationPath,
                                   breathing_scene, sample_environment, synthesize_csi, synthesize_pair,
                                   synthesize_series)
from neurowideband.cli import main as cli_main
from neurowideband.diffusion import (NoiseSchedule, estimate_z0, forward_sample, posterior_coefficients,
                                     single_step)
from neurowideband.estimator import NWBExtrapolator
from neurowideband.formats import content_hash, load_records, save_records
from neurowideband.metrics import evaluate
from neurowideband.sensing import NoSecondaryPeaksError, estimate_breathing, estimate_tof, resolve_paths
from neurowideband.trainer import load_model, save_model

TAP_160 = 6.25e-9
WIDE = FrequencyGrid(5.5e9, 312.5e3, 512)
NARROW = FrequencyGrid(5.5e9, 312.5e3, 64)


def criterion(n):
    """Record the outcome of criterion ``n``; the test body returns a detail string."""
    def wrap(fn):
        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE[n] = (False, f"{type(exc).__name__}: {str(exc).splitlines()[0][:160]}")
                print(f"\ncriterion {n}: FAIL")
                raise
            ACCEPTANCE[n] = (True, detail or "")
            print(f"\ncriterion {n}: PASS  {detail or ''}")
        return inner
    return wrap


@criterion(1)
def test_c1_channel_oracle():
    rng = np.random.default_rng(101)
    spec = EnvironmentSpec()
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        env = sample_environment(spec, rng)
        grid = FrequencyGrid(rng.uniform(2.4e9, 6e9), rng.choice([78.125e3, 312.5e3]), int(rng.integers(16, 257)))
        antenna = int(rng.integers(0, 4))
        got = synthesize_csi(env, grid, antenna).values
        ref = brute_force_csi(env, grid, antenna)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 10
    return f"max rel err {worst:.2e}, {elapsed:.1f} s"


@criterion(2)
def test_c2_frequency_invariance():
    rng = np.random.default_rng(102)
    spec = EnvironmentSpec()
    for _ in range(1000):
        env = sample_environment(spec, rng)
        k = int(rng.integers(2, 9))
        n = int(rng.integers(1, 65))
        if (k - 1) * n % 2:
            n += 1
        grid = FrequencyGrid(rng.uniform(2.4e9, 6e9), 312.5e3, n)
        narrow, wide = synthesize_pair(env, grid, k)
        off = (k - 1) * n // 2
        assert len(wide) == k * n
        assert np.array_equal(wide.values[off:off + n], narrow.values)
    return "1000/1000 bit-exact"


@criterion(3)
def test_c3_diffusion_algebra():
    s = NoiseSchedule.linear(50)
    rng = np.random.default_rng(103)
    n = 10_000
    z0 = np.array([0.8, -0.5, 0.1, 0.0])
    for t in (1, 2, 10, 25, 50):
        z = np.tile(z0, (n, 1))
        for i in range(1, t + 1):
            z = single_step(z, i, rng.standard_normal(z.shape), s)
        mean, var = math.sqrt(s.alpha_bar(t)) * z0, 1 - s.alpha_bar(t)
        assert np.all(np.abs(z.mean(0) - mean) < 3 * math.sqrt(var / n))
        assert np.all(np.abs(z.var(0, ddof=1) - var) < 3 * var * math.sqrt(2 / (n - 1)))
    inv = 0.0
    for t in range(1, s.T + 1):
        z0r, eps = rng.standard_normal(64), rng.standard_normal(64)
        back = estimate_z0(forward_sample(z0r, t, eps, s), eps, t, s)
        inv = max(inv, float(np.max(np.abs(back - z0r))) * math.sqrt(s.alpha_bar(t)))
    assert inv < 1e-13
    coef = 0.0
    for t in range(2, s.T + 1):
        got = np.array(posterior_coefficients(t, s))
        ref = np.array(posterior_reference(s.beta(t), s.alpha_bar(t - 1), s.alpha_bar(t)))
        coef = max(coef, float(np.max(np.abs(got - ref))))
    assert coef <= 1e-12
    return f"inversion err {inv:.1e}, coefficient err {coef:.1e}"


@criterion(4)
def test_c4_gradients():
    start = time.perf_counter()
    model, batch = toy_problem()
    errors = finite_difference_check(model, batch)
    elapsed = time.perf_counter() - start
    assert set(errors) == {name for name, _ in model.named_parameters()}
    worst = max(errors.values())
    assert worst <= 1e-4, max(errors.items(), key=lambda kv: kv[1])
    assert elapsed < 120
    return f"{len(errors)} parameter groups, max rel err {worst:.1e}, {elapsed:.1f} s"


@pytest.fixture(scope="module")
def desk_run():
    """Desk-preset training on 256 two-path frames, plus 100 held-out truths."""
    spec = EnvironmentSpec(num_paths=(2, 2))
    grid = FrequencyGrid(5.5e9, 312.5e3, 128)
    rng = np.random.default_rng(0)
    train = [synthesize_csi(sample_environment(spec, rng), grid) for _ in range(256)]
    held_out = [synthesize_pair(sample_environment(spec, rng), FrequencyGrid(5.5e9, 312.5e3, 64), 2)[1]
                for _ in range(100)]
    marks = {}
    start = time.perf_counter()

    def progress(step, loss):
        if step == 500:
            marks[500] = time.perf_counter() - start

    est = NWBExtrapolator(random_state=0).fit(train, progress=progress)
    fresh = NWBExtrapolator(random_state=0).fit(train, max_steps=0)
    return est, fresh, held_out, marks


@pytest.mark.slow
@criterion(5)
def test_c5_training_progress(desk_run):
    est, _, _, marks = desk_run
    losses = est.report_.losses
    assert len(losses) >= 500
    first, last = float(np.mean(losses[:50])), float(np.mean(losses[450:500]))
    assert last <= 0.5 * first
    assert marks[500] < 15 * 60
    return f"loss {first:.3f} -> {last:.3f} (ratio {last / first:.3f}) in {marks[500]:.0f} s"


@pytest.mark.slow
@criterion(6)
def test_c6_beats_baselines(desk_run):
    est, fresh, held_out, _ = desk_run
    assert len(est.report_.losses) == 2000
    trained = evaluate(est, held_out, ks=(2,), seed=1)
    base = evaluate(fresh, held_out, ks=(2,), seed=1)
    m, a = trained.value(2, "mse"), trained.value(2, "acc_cir")
    fm, fa = base.value(2, "mse"), base.value(2, "acc_cir")
    nm, na = trained.value(2, "noise_mse"), trained.value(2, "noise_acc_cir")
    assert m < 0.5 * fm and m < 0.5 * nm
    assert a >= fa + 0.1 and a >= na + 0.1
    return f"MSE {m:.3f} (fresh {fm:.3g}, noise {nm:.3f}); AccCIR {a:.3f} (fresh {fa:.3f}, noise {na:.3f})"


@criterion(7)
def test_c7_resolution_grows_with_bandwidth():
    rng = np.random.default_rng(7)
    scenes = []
    for _ in range(200):
        dt, t1 = rng.uniform(10e-9, 60e-9), rng.uniform(0, 100e-9)
        g, ph = rng.uniform(0.6, 1.0, 2), rng.uniform(-math.pi, math.pi, 2)
        env = MultipathEnvironment((PropagationPath(g[0], ph[0], t1, math.pi / 2),
                                    PropagationPath(g[1], ph[1], t1 + dt, math.pi / 2)))
        scenes.append((dt, env))
    rates, missed = [], None
    for n in (64, 128, 256, 512):
        grid = FrequencyGrid(5.5e9, 312.5e3, n)
        ok = [resolve_paths(synthesize_csi(env, grid)) >= 2 for _, env in scenes]
        rates.append(float(np.mean(ok)))
        if n == 512:
            missed = [dt for (dt, _), o in zip(scenes, ok) if dt >= 2 * TAP_160 and not o]
    assert all(b >= a for a, b in zip(rates, rates[1:])), rates
    assert not missed
    return "two-peak rate at 20/40/80/160 MHz: " + ", ".join(f"{r:.3f}" for r in rates)


@criterion(8)
def test_c8_tof():
    rng = np.random.default_rng(108)
    errors = []
    for delay in rng.uniform(0, 150e-9, 100):
        env = MultipathEnvironment((PropagationPath(rng.uniform(0.1, 1), rng.uniform(-math.pi, math.pi),
                                                    delay, rng.uniform(0, math.pi)),))
        errors.append(abs(estimate_tof(synthesize_csi(env, WIDE)).tof - delay))
    hits = sum(e <= TAP_160 for e in errors)
    assert hits == 100
    return f"100/100 within one tap, max error {max(errors) * 1e9:.2f} ns"


@criterion(9)
def test_c9_breathing():
    env, motions = breathing_scene(3)
    delays = sorted(env.paths[m.path_index].delay for m in motions)
    assert min(np.diff(delays)) >= 25e-9
    est = estimate_breathing(synthesize_series(env, motions, WIDE, duration=60.0))
    assert len(est.paths) == 3
    shares = [float(np.mean(np.abs(p.bpm - 15) <= 1)) for p in est.paths]
    assert min(shares) >= 0.9
    narrow_frames = synthesize_series(env, motions, NARROW, duration=60.0)
    separable = max(resolve_paths(f) for f in narrow_frames[::50])
    try:
        narrow_tracked = len(estimate_breathing(narrow_frames).paths)
    except NoSecondaryPeaksError:
        narrow_tracked = 0
    assert separable < 3 and narrow_tracked < 3
    return (f"160 MHz windows within 15±1 bpm: {', '.join(f'{s:.2f}' for s in shares)}; "
            f"20 MHz separable peaks {separable}")


def _pipeline(root, capsys):
    small = ["--model.model_dim", "16", "--model.num_blocks", "1", "--model.num_heads", "2",
             "--model.embed_dim", "8", "--model.timestep_embed_dim", "8", "--schedule.timesteps", "10",
             "--training.total_steps", "12", "--training.batch_size", "8", "--training.warmup_epochs", "1"]
    steps = {
        "simulate": ["simulate", "--out", root / "sim.nwbd", "--simulation.num_subcarriers", "64",
                     "--simulation.num_frames", "40", "--simulation.snr_db", "20", "--seed", "3"],
        "make-dataset": ["make-dataset", "--input", root / "sim.nwbd", "--out", root / "ds", "--narrow-k", "2"],
        "train": ["train", "--input", root / "ds/train.nwbd", "--out", root / "run", *small],
        "extrapolate": ["extrapolate", "--input", root / "ds/test_inputs.nwbd", "--k", "2",
                        "--checkpoint", root / "run/model", "--out", root / "ecsi.nwbd"],
        "eval": ["eval", "--truth", root / "ds/test.nwbd", "--checkpoint", root / "run/model", "--out", root / "ev"],
        "tof": ["tof", "--input", root / "ecsi.nwbd", "--out", root / "tof"],
        "breath": ["breath", "--input", root / "breath.nwbd", "--out", root / "br"],
    }
    outputs = {"simulate": "sim.nwbd", "make-dataset": "ds", "train": "run/model", "extrapolate": "ecsi.nwbd",
               "eval": "ev", "tof": "tof", "breath": "br"}
    assert cli_main([str(a) for a in ["simulate", "--out", root / "breath.nwbd", "--simulation.scene", "breathing",
                                      "--simulation.num_subcarriers", "512", "--simulation.duration_s", "12"]]) == 0
    hashes = {}
    for name, argv in steps.items():
        assert cli_main([str(a) for a in argv]) == 0, capsys.readouterr().err
        hashes[name] = content_hash(root / outputs[name])
    capsys.readouterr()
    return hashes


@criterion(10)
def test_c10_reproducibility(tmp_path, capsys):
    a = _pipeline(tmp_path / "a", capsys)
    b = _pipeline(tmp_path / "b", capsys)
    differing = [k for k in a if a[k] != b[k]]
    assert not differing, differing
    records = load_records(tmp_path / "a/sim.nwbd")
    for suffix in (".nwbd", ".jsonl"):
        path = save_records(tmp_path / f"copy{suffix}", records)
        back = load_records(path)
        assert [r.env_label for r in back] == [r.env_label for r in records]
        for x, y in zip(back, records):
            assert np.array_equal(x.frame.values, y.frame.values) and x.frame.grid == y.frame.grid
            assert x.frame.timestamp == y.frame.timestamp and x.frame.antenna == y.frame.antenna
    model, layout, sched, _ = load_model(tmp_path / "a/run/model")
    save_model(tmp_path / "again", model, layout, sched)
    again, *_ = load_model(tmp_path / "again")
    for (n1, p1), (n2, p2) in zip(model.state_dict().items(), again.state_dict().items()):
        assert n1 == n2 and torch.equal(p1, p2)
    return f"{len(a)} stages hash-identical across two runs; NWBD/JSONL/checkpoint round trips lossless"
