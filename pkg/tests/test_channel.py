import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neurowideband.channel import (CsiFrame, EnvironmentSpec, FrequencyGrid, MotionProfile,
                                   MultipathEnvironment, PropagationPath, add_awgn, breathing_scene,
                                   channel_response, expand_grid, narrow_offset, sample_environment,
                                   synthesize_csi, synthesize_pair, synthesize_series)


def brute_force(env, grid, antenna=0):
    out = []
    for q in range(grid.num_subcarriers):
        f = grid.center_freq + (q - (grid.num_subcarriers - 1) / 2) * grid.subcarrier_spacing
        acc = 0j
        for p in env.paths:
            acc += (p.gain_magnitude * cmath.exp(1j * p.gain_phase)
                    * cmath.exp(-2j * math.pi * f * p.delay)
                    * cmath.exp(-1j * math.pi * antenna * math.cos(p.aoa)))
        out.append(acc)
    return np.array(out)


path_st = st.builds(PropagationPath,
                    st.floats(0, 2), st.floats(-math.pi, math.pi, exclude_max=True),
                    st.floats(0, 300e-9), st.floats(0, math.pi))
env_st = st.lists(path_st, min_size=1, max_size=5).map(lambda ps: MultipathEnvironment(tuple(ps)))
grid_st = st.builds(FrequencyGrid, st.floats(2.4e9, 6e9), st.sampled_from([78.125e3, 312.5e3]),
                    st.integers(1, 96))


def test_unit_path_is_flat(grid64):
    env = MultipathEnvironment((PropagationPath(1.0, 0.0, 0.0, math.pi / 2),))
    np.testing.assert_allclose(synthesize_csi(env, grid64).values, 1.0, atol=1e-15)


def test_single_term_closed_form():
    grid = FrequencyGrid(5.18e9, 312.5e3, 1)
    env = MultipathEnvironment((PropagationPath(1.0, 0.0, 50e-9, 1.0),))
    assert synthesize_csi(env, grid).values[0] == pytest.approx(cmath.exp(-2j * math.pi * 5.18e9 * 50e-9),
                                                                abs=1e-12)


def test_matches_brute_force(grid64):
    env = sample_environment(EnvironmentSpec(num_paths=(3, 3)), 5)
    ref = brute_force(env, grid64, antenna=2)
    got = synthesize_csi(env, grid64, antenna=2).values
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-12


def test_grid_layout():
    g = FrequencyGrid(5e9, 1e6, 4)
    np.testing.assert_array_equal(g.offsets(), [-1.5, -0.5, 0.5, 1.5])
    assert g.bandwidth == 4e6
    assert g.frequencies[0] == 5e9 - 1.5e6


def test_rejects_invalid_inputs(grid64):
    with pytest.raises(ValueError):
        MultipathEnvironment(())
    with pytest.raises(ValueError):
        PropagationPath(-1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PropagationPath(1.0, 0.0, -1e-9, 0.0)
    with pytest.raises(ValueError):
        PropagationPath(1.0, 0.0, 0.0, 4.0)
    with pytest.raises(ValueError):
        PropagationPath(float("nan"), 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        FrequencyGrid(5e9, 0.0, 4)
    with pytest.raises(ValueError):
        FrequencyGrid(5e9, 1e3, 0)
    env = MultipathEnvironment((PropagationPath(1.0, 0.0, 0.0, 0.0),))
    with pytest.raises(ValueError):
        synthesize_csi(env, grid64, antenna=-1)
    with pytest.raises(ValueError):
        channel_response([1.0], [1.0], [float("inf")], [0.0])


def test_pair_shapes_and_bandwidth():
    narrow = FrequencyGrid(5.5e9, 312.5e3, 64)
    env = sample_environment(EnvironmentSpec(), 3)
    n, w = synthesize_pair(env, narrow, 8)
    assert len(w) == 512 and w.grid.center_freq == narrow.center_freq
    assert narrow.bandwidth == 20e6 and w.grid.bandwidth == 160e6
    off = narrow_offset(narrow, 8)
    np.testing.assert_array_equal(w.values[off:off + 64], n.values)


def test_expand_rejects_off_lattice():
    with pytest.raises(ValueError):
        expand_grid(FrequencyGrid(5e9, 1e6, 3), 2)
    with pytest.raises(ValueError):
        expand_grid(FrequencyGrid(5e9, 1e6, 4), 1)
    assert expand_grid(FrequencyGrid(5e9, 1e6, 3), 3).num_subcarriers == 9


def test_two_taps_resolve_only_when_wide():
    from neurowideband.sensing import resolve_paths

    env = MultipathEnvironment((PropagationPath(1.0, 0.0, 0.0, 1.0), PropagationPath(1.0, 1.0, 40e-9, 1.0)))
    narrow = FrequencyGrid(5.5e9, 312.5e3, 64)
    n, w = synthesize_pair(env, narrow, 8)
    assert resolve_paths(w) == 2
    assert resolve_paths(n) == 1


@given(env_st, grid_st)
def test_path_order_invariance(env, grid):
    rev = MultipathEnvironment(tuple(reversed(env.paths)))
    np.testing.assert_allclose(synthesize_csi(rev, grid).values, synthesize_csi(env, grid).values,
                               rtol=1e-12, atol=1e-12)


@given(env_st, env_st, grid_st)
def test_linearity_in_paths(a, b, grid):
    both = MultipathEnvironment(a.paths + b.paths)
    np.testing.assert_allclose(synthesize_csi(both, grid).values,
                               synthesize_csi(a, grid).values + synthesize_csi(b, grid).values,
                               rtol=1e-12, atol=1e-12)


@given(path_st.filter(lambda p: p.gain_magnitude > 1e-3), grid_st, st.integers(0, 6))
def test_antenna_phase_law(path, grid, n):
    env = MultipathEnvironment((path,))
    ratio = synthesize_csi(env, grid, n + 1).values / synthesize_csi(env, grid, n).values
    np.testing.assert_allclose(ratio, cmath.exp(-1j * math.pi * math.cos(path.aoa)), atol=1e-9)


@given(env_st, grid_st)
def test_conjugate_symmetry(env, grid):
    gains, delays, aoas = env.arrays()
    freqs = grid.frequencies
    direct = channel_response(freqs, gains, delays, aoas)
    mirrored = channel_response(freqs, np.conj(gains), -delays, np.pi - aoas, antenna=0)
    np.testing.assert_allclose(mirrored, np.conj(direct), rtol=1e-9, atol=1e-9)


@given(env_st, st.integers(1, 40), st.integers(2, 6))
def test_overlapping_grids_agree(env, n, k):
    narrow = FrequencyGrid(5.5e9, 312.5e3, 2 * n)
    nf, wf = synthesize_pair(env, narrow, k)
    off = narrow_offset(narrow, k)
    np.testing.assert_array_equal(wf.values[off:off + 2 * n], nf.values)


def test_series_length_and_static_case(grid64):
    env = sample_environment(EnvironmentSpec(num_paths=(2, 2)), 0)
    still = MotionProfile(0, 0.0, 0.25)
    frames = synthesize_series(env, still, grid64, rate_hz=100, duration=1.0)
    assert len(frames) == 100
    static = synthesize_csi(env, grid64).values
    for fr in frames[::17]:
        np.testing.assert_array_equal(fr.values, static)
    assert len(synthesize_series(env, MotionProfile(0, 1e-12, 0.25), grid64, duration=60)) == 6000


def test_series_phase_follows_delay():
    grid = FrequencyGrid(5.5e9, 312.5e3, 1)
    env = MultipathEnvironment((PropagationPath(1.0, 0.0, 30e-9, math.pi / 2),))
    m = MotionProfile(0, 40e-12, 0.25, phase0=0.3)
    frames = synthesize_series(env, m, grid, rate_hz=10, duration=20)
    f = grid.frequencies[0]
    for fr in frames:
        tau = 30e-9 + 40e-12 * math.sin(2 * math.pi * 0.25 * fr.timestamp + 0.3)
        assert fr.values[0] == pytest.approx(cmath.exp(-2j * math.pi * f * tau), abs=1e-9)
    phase = np.unwrap(np.angle([fr.values[0] for fr in frames]))
    spec = np.abs(np.fft.rfft(phase - phase.mean()))
    freqs = np.fft.rfftfreq(len(phase), 0.1)
    assert freqs[np.argmax(spec)] == pytest.approx(0.25)


def test_series_rejects_nyquist_violation(grid64):
    env = sample_environment(EnvironmentSpec(), 0)
    with pytest.raises(ValueError):
        synthesize_series(env, MotionProfile(0, 1e-12, 60.0), grid64, rate_hz=100)
    with pytest.raises(ValueError):
        synthesize_series(env, MotionProfile(0, 1e-12, 0.2), grid64, duration=0)


def test_hold_interval_freezes_motion():
    m = MotionProfile(0, 1e-11, 0.25, holds=((10.0, 20.0),))
    assert m.offset(15.0) == 0.0
    assert m.offset(1.0) != 0.0


def test_sample_environment_determinism_and_ranges(rng):
    spec = EnvironmentSpec(num_paths=(2, 4))
    assert sample_environment(spec, 0) == sample_environment(spec, 0)
    delays = []
    for _ in range(2000):
        env = sample_environment(spec, rng)
        assert 2 <= env.num_paths <= 4
        delays.extend(p.delay for p in env.paths)
        assert all(0.1 <= p.gain_magnitude <= 1.0 for p in env.paths)
    assert 0 <= min(delays) and max(delays) <= 200e-9


def test_sorted_gains():
    env = sample_environment(EnvironmentSpec(num_paths=(5, 5), sort_gains=True), 2)
    mags = [p.gain_magnitude for p in env.paths]
    assert mags == sorted(mags, reverse=True)


def test_spec_rejects_empty_ranges():
    with pytest.raises(ValueError):
        EnvironmentSpec(num_paths=(3, 2))
    with pytest.raises(ValueError):
        EnvironmentSpec(delay_range=(1e-7, 0.0))
    with pytest.raises(ValueError):
        EnvironmentSpec(gain_range=(0.0, 1.0))


def test_awgn_snr(grid64):
    frame = CsiFrame(grid64, np.ones(64, dtype=complex))
    big = FrequencyGrid(5e9, 1e3, 20000)
    noisy = add_awgn(CsiFrame(big, np.ones(20000, dtype=complex)), 10.0, seed=0)
    noise_power = np.mean(np.abs(noisy.values - 1) ** 2)
    assert noise_power == pytest.approx(0.1, rel=0.05)
    np.testing.assert_array_equal(add_awgn(frame, 20, 1).values, add_awgn(frame, 20, 1).values)


def test_breathing_scene_layout():
    env, motions = breathing_scene(3)
    delays = sorted(p.delay for p in env.paths)
    assert len(motions) == 3 and env.num_paths == 4
    assert min(np.diff(delays[1:])) >= 25e-9
    assert all(m.rate_hz == 0.25 for m in motions)
