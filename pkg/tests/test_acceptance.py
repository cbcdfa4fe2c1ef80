"""Acceptance criteria, one test per criterion.

Each check returns ``(passed, detail)``; the test records a PASS/FAIL line
that is printed in the pytest terminal summary. Running this file directly
(``python3 tests/test_acceptance.py``) prints the same lines without pytest.
"""
from __future__ import annotations

import itertools
import json
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from gazequality.cli import main
from gazequality.core import Task
from gazequality.ingestion import load_dataset, load_manifest, validate_recording
from gazequality.metrics import temporal_stats
from gazequality.oracle import GRID_POSITIONS, OracleConfig, generate_grid_recording, generate_saccades_recording
from gazequality.pipeline import AnalysisOptions, analyze
from gazequality.preprocessing import StableWindow, estimate_latency, extract_segments
from gazequality.recalibration import CalibrationModel, fit_calibration
from gazequality.regression import confidence_interval, crosstalk

RESULTS: dict[int, tuple[str, bool, str]] = {}

WINDOW = StableWindow(8, 22)
SEEDS_100 = range(100)
PUBLIC_DATASET = Path(__file__).resolve().parent.parent / "data" / "public" / "manifest.json"


def line(n: int) -> str:
    title, ok, detail = RESULTS[n]
    return f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"


def record(n: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[n] = (title, bool(ok), detail)
    print(line(n))
    assert ok, detail


# 1

def check_end_to_end_identity():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "config.json"
        cfg.write_text(json.dumps({"seeds": list(range(30)), "n_steps": 80, "rate": 30}))
        if main(["generate", str(tmp / "data"), "-c", str(cfg)]) != 0:
            return False, "generate failed"
        t0 = time.perf_counter()
        code = main(["analyze", str(tmp / "data" / "manifest.json"), "-o", str(tmp / "out")])
        runtime = time.perf_counter() - t0
        if code != 0:
            return False, f"analyze exited {code}"
        report = json.loads((tmp / "out" / "report.json").read_text())
    orig = report["conditions"]["original"]
    acc = max(orig["accuracy"]["C"][k] for k in ("median", "p75", "p90", "mean"))
    prec = max(orig["precision"][d][k] for d in "HVC" for k in ("median", "p75", "p90"))
    lin = [orig["linearity"][d] for d in "HV"]
    slope_err = max(abs(v - 1) for r in lin for v in r["per_subject_slopes"])
    ci_err = max(abs(v - 1) for r in lin for v in r["ci95"])
    kinds = [orig["crosstalk"][d]["kind"] for d in "HV"]
    ok = (
        len(report["subjects"]["included"]) == 30
        and acc <= 1e-9
        and prec <= 1e-12
        and slope_err <= 1e-9
        and ci_err <= 1e-9
        and not any(r["significantly_nonideal"] for r in lin)
        and kinds == ["intercept", "intercept"]
        and runtime < 10
    )
    detail = (
        f"accuracy {acc:.1e} deg, RMS {prec:.1e} deg, |slope-1| {slope_err:.1e}, |CI-1| {ci_err:.1e}, "
        f"crosstalk {kinds}, analyze {runtime:.2f} s"
    )
    return ok, detail


def test_criterion_1_end_to_end_identity():
    record(1, "end-to-end identity", *check_end_to_end_identity())


# 2

def check_latency_recovery():
    noises = (0.0, 0.1, 0.25, 0.5)
    hits = []
    for seed in SEEDS_100:
        lag = seed % 25
        rec = generate_saccades_recording(OracleConfig(seed=seed, latency_samples=lag, noise_sd=noises[seed % 4]))[0]
        hits.append(estimate_latency(rec).shift_samples == lag)
    return sum(hits) == 100, f"{sum(hits)}/100 exact (lags 0-24, noise up to 0.5 deg)"


def test_criterion_2_latency_recovery():
    record(2, "latency recovery", *check_latency_recovery())


# 3

def check_affine_recovery():
    gains, cross, offsets = (0.7, 1.0, 1.3), (-0.2, 0.0, 0.2), (-10.0, 0.0, 10.0)
    probe = np.array(GRID_POSITIONS)
    worst = 0.0
    count = 0
    for ax, by, bx, ay, cx, cy in itertools.product(gains, gains, cross, cross, offsets, offsets):
        corruption = CalibrationModel(ax=ax, bx=bx, cx=cx, ay=ay, by=by, cy=cy)
        rec = generate_grid_recording(OracleConfig(seed=count, affine=corruption))[0]
        model = fit_calibration(extract_segments(rec, 0, WINDOW))
        worst = max(worst, float(np.abs(model.apply(corruption.apply(probe)) - probe).max()))
        count += 1
    return worst < 1e-6, f"{count} corruptions, worst applied error {worst:.1e} deg"


def test_criterion_3_affine_recovery():
    record(3, "affine recovery", *check_affine_recovery())


# 4

def check_recalibration_benefit():
    corruption = CalibrationModel(ax=0.9, by=0.9, cx=3.0, cy=3.0)
    loaded = []
    for seed in range(20):
        c = OracleConfig(seed=seed, affine=corruption, noise_sd=0.3)
        for gen in (generate_saccades_recording, generate_grid_recording):
            rec = gen(c)[0]
            loaded.append((rec, validate_recording(rec)))
    cond = analyze(loaded, AnalysisOptions(recalibrate=True)).report["conditions"]
    before = cond["original"]["accuracy"]["C"]["median"]
    after = cond["recalibrated"]["accuracy"]["C"]["median"]
    ratio = after / before
    return ratio < 0.25, f"median combined {before:.3f} -> {after:.3f} deg (ratio {ratio:.3f}, 20 seeds)"


def test_criterion_4_recalibration_benefit():
    record(4, "recalibration benefit", *check_recalibration_benefit())


# 5

# (mean, sd, printed interval) per row, n = 30 subjects
LINEARITY_TABLE = (
    (0.944, 0.050, (0.925, 0.963)),
    (0.945, 0.043, (0.929, 0.961)),
    (0.988, 0.065, (0.963, 1.012)),
    (0.965, 0.130, (0.917, 1.014)),
)


def _rounding_consistent(mean, sd, printed, n=30, steps=101):
    """True when some (mean, sd) that rounds to the printed pair gives an interval rounding to ``printed``."""
    for m in np.linspace(mean - 5e-4, mean + 5e-4, steps):
        for s in np.linspace(sd - 5e-4, sd + 5e-4, steps):
            if tuple(round(v, 3) for v in confidence_interval(m, s, n)) == printed:
                return True
    return False


def check_table_intervals():
    worst = 0.0
    consistent = 0
    for mean, sd, printed in LINEARITY_TABLE:
        ci = confidence_interval(mean, sd, 30)
        worst = max(worst, *(abs(a - b) for a, b in zip(ci, printed)))
        consistent += _rounding_consistent(mean, sd, printed)
    ok = worst < 1e-3 and consistent == len(LINEARITY_TABLE)
    detail = (
        f"max |CI - printed| {worst:.4f} from rounded inputs; "
        f"{consistent}/{len(LINEARITY_TABLE)} rows reproduced exactly by inputs within their rounding cells"
    )
    return ok, detail


def test_criterion_5_table_intervals():
    record(5, "confidence intervals", *check_table_intervals())


# 6

def _pooled_segments(seeds, **kw):
    out = []
    for seed in seeds:
        out.extend(extract_segments(generate_saccades_recording(OracleConfig(seed=seed, **kw))[0], 0, WINDOW))
    return out


def check_crosstalk_selection():
    quad = crosstalk(_pooled_segments(range(30), crosstalk_quadratic=0.002, noise_sd=0.05), "V")
    c2 = float(quad.fit.coefficients[2]) if quad.model_kind == "quadratic" else float("nan")
    quad_ok = quad.model_kind == "quadratic" and 0.0015 <= c2 <= 0.0025
    null = {"V": 0, "H": 0}
    for seed in SEEDS_100:
        segs = _pooled_segments([seed], noise_sd=0.1)
        for d in null:
            null[d] += crosstalk(segs, d, 0.05).model_kind == "intercept"
    ok = quad_ok and min(null.values()) >= 90
    detail = f"quadratic oracle selects {quad.model_kind}, c={c2:.5f}; intercept-only {null['V']}/100 (V), {null['H']}/100 (H)"
    return ok, detail


def test_criterion_6_crosstalk_selection():
    record(6, "crosstalk model selection", *check_crosstalk_selection())


# 7

def _stats(timestamps):
    from gazequality.core import Recording

    ts = np.asarray(timestamps, dtype=float)
    n = len(ts)
    rec = Recording("T", Task.RANDOM_SACCADES, ts, np.tile([0.0, 0.0, 1.0], (n, 1)), np.ones(n, bool), ())
    return temporal_stats(rec)


def check_temporal_semantics():
    failures = []
    # (timestamps, mean, population sd, dropped)
    cases = [
        ([0, 50], 50.0, 0.0, 1),
        ([0, 49.95], 49.95, 0.0, 0),
        ([0, 1000 / 30, 2000 / 30, 1000.0], 1000 / 3, float(np.std(np.diff([0, 1000 / 30, 2000 / 30, 1000.0]))), 1),
        ([0, 33, 66, 116.01], 116.01 / 3, float(np.sqrt(((33 - 116.01 / 3) ** 2 * 2 + (50.01 - 116.01 / 3) ** 2) / 3)), 1),
        ([0, 30, 70, 130, 160], 40.0, float(np.sqrt(150.0)), 1),
        ([0, 100, 200], 100.0, 0.0, 2),
    ]
    for ts, mean, sd, dropped in cases:
        s = _stats(ts)
        if abs(s.mean_isi - mean) > 1e-9 or abs(s.sd_isi - sd) > 1e-9 or s.dropped_count != dropped:
            failures.append(f"{ts}: got ({s.mean_isi}, {s.sd_isi}, {s.dropped_count})")
        if abs(s.dropped_fraction - dropped / (len(ts) - 1)) > 1e-12:
            failures.append(f"{ts}: dropped fraction {s.dropped_fraction}")
    detail = f"{len(cases) - len(failures)}/{len(cases)} hand-computed streams match" + (
        f"; {'; '.join(failures)}" if failures else ""
    )
    return not failures, detail


def test_criterion_7_temporal_semantics():
    record(7, "temporal threshold semantics", *check_temporal_semantics())


# 8

PUBLISHED = {"original_median_c": 6.06, "recalibrated_median_c": 2.06, "mean_isi_ms": 34.8, "dropped_fraction": 0.046}
PUBLISHED_SLOPES = {("original", "H"): 0.944, ("original", "V"): 0.945, ("recalibrated", "H"): 0.988, ("recalibrated", "V"): 0.965}


def check_public_dataset():
    manifest = load_manifest(PUBLIC_DATASET)
    report = analyze(load_dataset(manifest), AnalysisOptions(recalibrate=True)).report
    cond, temporal = report["conditions"], report["temporal"]["pooled"]
    got = {
        "original_median_c": cond["original"]["accuracy"]["C"]["median"],
        "recalibrated_median_c": cond["recalibrated"]["accuracy"]["C"]["median"],
        "mean_isi_ms": temporal["mean_isi_ms"],
        "dropped_fraction": temporal["dropped_fraction"],
    }
    off = {k: abs(got[k] - v) / v for k, v in PUBLISHED.items()}
    slope_off = {k: abs(cond[k[0]]["linearity"][k[1]]["mean_slope"] - v) for k, v in PUBLISHED_SLOPES.items()}
    ok = max(off.values()) <= 0.10 and max(slope_off.values()) <= 0.01
    detail = ", ".join(f"{k} {got[k]:.3f}" for k in got) + f"; worst slope offset {max(slope_off.values()):.3f}"
    return ok, detail


@pytest.mark.skipif(not PUBLIC_DATASET.exists(), reason=f"public dataset not converted to {PUBLIC_DATASET}")
def test_criterion_8_public_dataset():
    record(8, "public dataset reproduction", *check_public_dataset())


CHECKS = {
    1: ("end-to-end identity", check_end_to_end_identity),
    2: ("latency recovery", check_latency_recovery),
    3: ("affine recovery", check_affine_recovery),
    4: ("recalibration benefit", check_recalibration_benefit),
    5: ("confidence intervals", check_table_intervals),
    6: ("crosstalk model selection", check_crosstalk_selection),
    7: ("temporal threshold semantics", check_temporal_semantics),
    8: ("public dataset reproduction", check_public_dataset),
}


if __name__ == "__main__":
    for n, (title, check) in CHECKS.items():
        if n == 8 and not PUBLIC_DATASET.exists():
            print(f"criterion 8 [SKIP] {title}: no converted dataset at {PUBLIC_DATASET}")
            continue
        RESULTS[n] = (title, *check())
        print(line(n))
