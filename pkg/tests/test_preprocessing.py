import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from gazequality.exceptions import EstimationError, SelectionError
from gazequality.oracle import OracleConfig, generate_saccades_recording
from gazequality.preprocessing import (
    ErrorProfile,
    StableFixationExtractor,
    StableWindow,
    error_profile,
    estimate_latency,
    extract_segments,
    select_stable_window,
)

from .conftest import make_recording, steps


def brute_force_residuals(r, max_shift):
    """Mean gaze-target distance per shift, by explicit loops over samples and steps."""
    out = []
    for s in range(max_shift + 1):
        total, count = 0.0, 0
        for i in range(len(r) - s):
            if not r.valid[i + s]:
                continue
            t = r.timestamps[i]
            tgt = next((st for st in r.targets if st.onset <= t < st.offset), None)
            if tgt is None:
                continue
            gx, gy = r.angles[i + s]
            total += math.hypot(gx - tgt.position.x, gy - tgt.position.y)
            count += 1
        out.append(total / count if count else math.inf)
    return out


def test_zero_latency_perfect_gaze(clean_saccades):
    est = estimate_latency(clean_saccades)
    assert est.shift_samples == 0
    assert est.residual_error == pytest.approx(0, abs=1e-12)


def test_recovers_injected_lag():
    r, truth = generate_saccades_recording(OracleConfig(seed=2, latency_samples=6))
    est = estimate_latency(r)
    assert est.shift_samples == 6
    assert est.shift_ms == pytest.approx(200.0)
    assert truth.latency_ms == pytest.approx(200.0)


def test_lag_beyond_cap_returns_cap():
    # 30 samples = 1000 ms, beyond the 800 ms search range
    r, _ = generate_saccades_recording(OracleConfig(seed=2, latency_samples=30))
    est = estimate_latency(r)
    assert est.shift_samples == 24
    assert est.shift_ms <= 800
    assert est.residual_error > 0


@pytest.mark.parametrize("seed, lag, noise", [(11, 0, 0.5), (12, 13, 0.5), (13, 24, 0.4), (14, 7, 0.3)])
def test_latency_recovery_under_noise(seed, lag, noise):
    r, _ = generate_saccades_recording(OracleConfig(seed=seed, latency_samples=lag, noise_sd=noise))
    assert estimate_latency(r).shift_samples == lag


def test_objective_optimality_against_brute_force():
    r, _ = generate_saccades_recording(
        OracleConfig(seed=5, n_steps=12, latency_samples=4, noise_sd=0.4, invalid_probability=0.05, drop_probability=0.05)
    )
    est = estimate_latency(r)
    brute = brute_force_residuals(r, 24)
    assert np.allclose(est.candidate_errors, brute, rtol=1e-12)
    assert all(est.residual_error <= b + 1e-12 for b in brute)
    assert est.shift_samples == 4


def test_latency_preconditions():
    r = make_recording(np.zeros((10, 2)), targets=steps([(0, 0)]))
    with pytest.raises(EstimationError):
        estimate_latency(r)


def test_profile_perfect_is_zero(clean_saccades):
    p = error_profile(clean_saccades, 0)
    assert len(p) == 30
    assert np.allclose(p.mean_error, 0, atol=1e-12)
    assert (p.counts == 80).all()


def test_profile_settling_transient():
    # a 200 ms ramp covers post-onset samples 0..5 (sample k sits 33.3*k to 33.3*(k+1) ms after onset)
    r, _ = generate_saccades_recording(OracleConfig(seed=4, settle_ms=200, noise_sd=0.05))
    p = error_profile(r, 0)
    assert (p.mean_error[:6] > 0.5).all()
    assert (p.mean_error[6:] < 0.1).all()
    assert np.all(np.diff(p.mean_error[:6]) < 0)


def test_profile_short_steps_reduce_counts():
    isi = 1000 / 30
    r = make_recording(np.zeros((50, 2)), targets=steps([(0, 0), (0, 0)], dwell=25 * isi))
    p = error_profile(r, 0)
    assert p.counts[:25].tolist() == [2] * 25
    assert p.counts[25:].tolist() == [0] * 5
    assert np.isnan(p.mean_error[25:]).all()
    assert not p.present[25:].any()


def test_window_paper_fixed():
    flat = ErrorProfile(np.zeros(30), np.ones(30, dtype=int))
    assert select_stable_window(flat, "paper_fixed").as_tuple() == (8, 22)


def test_window_flat_zero_profile():
    flat = ErrorProfile(np.zeros(30), np.ones(30, dtype=int))
    assert select_stable_window(flat).as_tuple() == (0, 29)


def test_window_plateau():
    err = np.full(30, 1.0)
    err[7:22] = 0.5
    assert select_stable_window(ErrorProfile(err, np.ones(30, dtype=int))).as_tuple() == (7, 21)


def test_window_tie_prefers_earlier_and_absent_breaks_runs():
    err = np.full(30, 1.0)
    err[2:6] = 0.2
    err[20:24] = 0.2
    counts = np.ones(30, dtype=int)
    assert select_stable_window(ErrorProfile(err, counts)).as_tuple() == (2, 5)
    err[2:12] = 0.2
    counts[5] = 0
    err[5] = np.nan
    assert select_stable_window(ErrorProfile(err, counts)).as_tuple() == (6, 11)


def test_window_empty_profile():
    with pytest.raises(SelectionError):
        select_stable_window(ErrorProfile(np.full(30, np.nan), np.zeros(30, dtype=int)))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.01, 5), min_size=30, max_size=30),
    st.floats(1.0, 3.0),
    st.floats(0.0, 2.0),
)
def test_window_monotone_in_tolerance(errors, f1, extra):
    p = ErrorProfile(np.array(errors), np.ones(30, dtype=int))
    small = select_stable_window(p, tolerance_factor=f1)
    large = select_stable_window(p, tolerance_factor=f1 + extra)
    assert large.length >= small.length


def test_extract_full_coverage():
    r, _ = generate_saccades_recording(OracleConfig(seed=1))
    segs = extract_segments(r, 0, StableWindow(8, 22))
    assert len(segs) == 80 and segs.skipped == 0
    assert all(len(s) == 15 for s in segs)
    assert [s.source_step_index for s in segs] == list(range(80))


def test_extract_perfect_segments_on_target(clean_saccades):
    for s in extract_segments(clean_saccades, 0, StableWindow(8, 22)):
        assert np.allclose(s.angles, s.target_array, atol=1e-12)


def test_extract_skips_step_with_invalid_window():
    valid = np.ones(60, dtype=bool)
    valid[30 + 8 : 30 + 23] = False
    r = make_recording(np.zeros((60, 2)), valid=valid, targets=steps([(0, 0), (0, 0)], dwell=1000.0))
    segs = extract_segments(r, 0, StableWindow(8, 22))
    assert len(segs) == 1 and segs.skipped == 1
    assert segs[0].source_step_index == 0


def test_segment_purity_with_invalid_and_dropped():
    r, _ = generate_saccades_recording(
        OracleConfig(seed=9, latency_samples=3, noise_sd=0.2, invalid_probability=0.15, drop_probability=0.1)
    )
    est = estimate_latency(r)
    valid_times = set(r.timestamps[r.valid].tolist())
    for s in extract_segments(r, est, StableWindow(8, 22)):
        assert len(s) > 0
        assert np.all(np.diff(s.timestamps) > 0)
        assert set(s.timestamps.tolist()) <= valid_times
        assert np.isfinite(s.angles).all()


def test_extractor_estimator_api():
    recs = [generate_saccades_recording(OracleConfig(seed=s, latency_samples=s)) [0] for s in (1, 2, 3)]
    ext = StableFixationExtractor(window="paper_fixed")
    assert ext.get_params()["window"] == "paper_fixed"
    assert clone(ext).get_params() == ext.get_params()
    ext.fit(recs)
    assert {k: v.shift_samples for k, v in ext.latencies_.items()} == {"S001": 1, "S002": 2, "S003": 3}
    assert ext.window_.as_tuple() == (8, 22)
    segs = ext.transform(recs)
    assert len(segs) == 240
    assert all(np.allclose(s.angles, s.target_array, atol=1e-9) for s in segs)
