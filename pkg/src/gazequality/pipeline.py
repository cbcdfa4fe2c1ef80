"""Dataset-level analysis: from validated recordings to a quality report."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .core import Recording, Task
from .exceptions import AnalysisError, DomainError
from .ingestion import ValidationSummary
from .metrics import (
    DROP_THRESHOLD_MS,
    aggregate_metric,
    pool_temporal_stats,
    segment_accuracy,
    segment_precision,
    segment_vector_accuracy,
    temporal_stats,
)
from .preprocessing import (
    DEFAULT_TOLERANCE_FACTOR,
    MAX_LATENCY_MS,
    FixationSegment,
    StableFixationExtractor,
)
from .recalibration import fit_calibration, recalibrate_recording
from .regression import crosstalk, linearity, ols_fit

__all__ = ["AnalysisOptions", "Analysis", "analyze", "config_hash"]

CONDITIONS = ("original", "recalibrated")


@dataclass(frozen=True)
class AnalysisOptions:
    window: str = "data_driven"
    tolerance_factor: float = DEFAULT_TOLERANCE_FACTOR
    recalibrate: bool = False
    drop_threshold_ms: float = DROP_THRESHOLD_MS
    alpha: float = 0.05
    pooled_mean: bool = False
    max_latency_ms: float = MAX_LATENCY_MS

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(options: AnalysisOptions, inputs: dict | None = None) -> str:
    payload = {"options": options.to_dict(), "inputs": inputs or {}}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class Analysis:
    report: dict
    intermediates: dict
    segments: dict = field(default_factory=dict, repr=False)


def _not_computable(reason: str) -> dict:
    return {"computable": False, "reason": reason}


def _condition_metrics(segments: dict[str, list[FixationSegment]], opts: AnalysisOptions):
    acc = {"H": {}, "V": {}, "C": {}}
    vec = {}
    rms = {"H": {}, "V": {}, "C": {}}
    sd = {"H": {}, "V": {}, "C": {}}
    fixations = []
    for sid in sorted(segments):
        segs = segments[sid]
        a = [segment_accuracy(s) for s in segs]
        acc["H"][sid] = [r.horizontal for r in a]
        acc["V"][sid] = [r.vertical for r in a]
        acc["C"][sid] = [r.combined for r in a]
        vec[sid] = [segment_vector_accuracy(s) for s in segs]
        prec = {}
        for s in segs:
            if len(s) >= 2:
                prec[s.source_step_index] = segment_precision(s)
        for dim, attr in (("H", "h"), ("V", "v"), ("C", "c")):
            rms[dim][sid] = [getattr(p, f"rms_{attr}") for p in prec.values()]
            sd[dim][sid] = [getattr(p, f"sd_{attr}") for p in prec.values()]
        for s, r in zip(segs, a):
            p = prec.get(s.source_step_index)
            fixations.append({
                "subject_id": sid,
                "step": s.source_step_index,
                "n_samples": len(s),
                "target_x": float(s.target.x),
                "target_y": float(s.target.y),
                "gaze_x": float(s.mean_gaze[0]),
                "gaze_y": float(s.mean_gaze[1]),
                "accuracy_h": r.horizontal,
                "accuracy_v": r.vertical,
                "accuracy_c": r.combined,
                "precision_rms_c": None if p is None else p.rms_c,
            })

    out = {
        "n_fixations": sum(len(v) for v in segments.values()),
        "accuracy": {d: aggregate_metric(acc[d], "accuracy", opts.pooled_mean).to_dict() for d in ("H", "V", "C")},
        "vector_accuracy": aggregate_metric(vec, "accuracy", opts.pooled_mean).to_dict(),
    }
    precision = {}
    for d in ("H", "V", "C"):
        try:
            precision[d] = aggregate_metric(rms[d], "precision", opts.pooled_mean, mean_values=sd[d]).to_dict()
        except DomainError as exc:
            precision[d] = _not_computable(str(exc))
    out["precision"] = precision

    lin = {}
    for d in ("H", "V"):
        try:
            lin[d] = linearity(segments, d).to_dict()
        except AnalysisError as exc:
            lin[d] = _not_computable(str(exc))
    out["linearity"] = lin

    pooled = [s for sid in sorted(segments) for s in segments[sid]]
    xt = {}
    xt_scatter = {}
    for d in ("H", "V"):
        try:
            res = crosstalk(pooled, d, opts.alpha)
        except AnalysisError as exc:
            xt[d] = _not_computable(str(exc))
            continue
        xt[d] = res.to_dict()
        xt_scatter[d] = {
            "target_deg": [float(v) for v in res.predictor],
            "observed_deg": [float(v) for v in res.response],
        }
    out["crosstalk"] = xt

    lin_scatter = {}
    for d, k in (("H", 0), ("V", 1)):
        target = np.array([s.target_array[k] for s in pooled])
        gaze = np.array([s.mean_gaze[k] for s in pooled])
        model = None
        try:
            fit = ols_fit(np.column_stack([np.ones(len(target)), target]), gaze)
            model = {"kind": "linear", "coefficients": [float(c) for c in fit.coefficients],
                     "p_values": [float(p) for p in fit.p_values]}
        except AnalysisError:
            pass
        lin_scatter[d] = {"target_deg": target.tolist(), "observed_deg": gaze.tolist(), "model": model}

    intermediates = {
        "fixations": fixations,
        "linearity_scatter": lin_scatter,
        "crosstalk_scatter": xt_scatter,
    }
    return out, intermediates


def analyze(
    loaded: Sequence[tuple[Recording, ValidationSummary]],
    options: AnalysisOptions = AnalysisOptions(),
    dataset_id: str = "dataset",
    inputs: dict | None = None,
) -> Analysis:
    """Run the full pipeline over parsed and validated recordings.

    A subject is analysed only when its random-saccades recording passes
    validation and, with ``options.recalibrate``, its calibration-grid
    recording does too. Errors in latency estimation or calibration fitting
    propagate; linearity and crosstalk that cannot be computed are marked
    as such in the report.
    """
    by_subject: dict[str, dict[Task, tuple[Recording, ValidationSummary]]] = {}
    for rec, summary in loaded:
        by_subject.setdefault(rec.subject_id, {})[rec.task] = (rec, summary)
    all_subjects = sorted(by_subject)

    excluded = []
    included = []
    for sid in all_subjects:
        tasks = by_subject[sid]
        reasons = []
        needed = [Task.RANDOM_SACCADES] + ([Task.CALIBRATION_GRID] if options.recalibrate else [])
        for task in needed:
            if task not in tasks:
                reasons.append(f"no {task.value} recording")
            elif tasks[task][1].excluded:
                reasons.extend(f"{task.value}: {r}" for r in tasks[task][1].reasons)
        if reasons:
            excluded.append({"subject_id": sid, "reasons": reasons})
        else:
            included.append(sid)
    if not included:
        raise AnalysisError("no subjects remain after exclusion")

    saccades = [by_subject[sid][Task.RANDOM_SACCADES][0] for sid in included]
    extractor = StableFixationExtractor(
        window=options.window,
        tolerance_factor=options.tolerance_factor,
        max_latency_ms=options.max_latency_ms,
    ).fit(saccades)

    segments = {"original": {}}
    skipped = {"original": 0}
    for rec in saccades:
        segs = extractor.extract(rec)
        segments["original"][rec.subject_id] = list(segs)
        skipped["original"] += segs.skipped

    models = {}
    if options.recalibrate:
        segments["recalibrated"] = {}
        skipped["recalibrated"] = 0
        for rec in saccades:
            sid = rec.subject_id
            grid = by_subject[sid][Task.CALIBRATION_GRID][0]
            try:
                model = fit_calibration(extractor.extract(grid))
            except AnalysisError as exc:
                raise type(exc)(f"subject {sid!r}, recalibration: {exc}") from exc
            models[sid] = model.to_dict()
            segs = extractor.extract(recalibrate_recording(model, rec))
            segments["recalibrated"][sid] = list(segs)
            skipped["recalibrated"] += segs.skipped

    conditions = {}
    inter_conditions = {}
    for cond in CONDITIONS:
        if cond not in segments:
            conditions[cond] = _not_computable("recalibration not requested")
            continue
        empty = [sid for sid, segs in segments[cond].items() if not segs]
        if empty:
            raise AnalysisError(f"{cond}: no fixation segments for subject(s) {', '.join(empty)}")
        metrics, inter = _condition_metrics(segments[cond], options)
        metrics["skipped_steps"] = skipped[cond]
        conditions[cond] = metrics
        inter_conditions[cond] = inter

    per_subject_temporal = {rec.subject_id: temporal_stats(rec, options.drop_threshold_ms) for rec in saccades}
    pooled_temporal = pool_temporal_stats([per_subject_temporal[s] for s in included])

    window = extractor.window_
    report = {
        "tool": {"name": "gazequality", "version": __version__},
        "dataset_id": dataset_id,
        "options": options.to_dict(),
        "config_hash": config_hash(options, inputs),
        "subjects": {
            "manifest": all_subjects,
            "included": included,
            "excluded": excluded,
        },
        "validation": [s.to_dict() for _, s in loaded],
        "provenance": {
            "window": {"policy": options.window, "start_index": window.start_index, "end_index": window.end_index},
            "latency": {sid: extractor.latencies_[sid].to_dict() for sid in included},
            "calibration_models": models,
        },
        "conditions": conditions,
        "temporal": {
            "pooled": pooled_temporal.to_dict(),
            "per_subject": {sid: per_subject_temporal[sid].to_dict() for sid in included},
        },
    }
    intermediates = {
        "error_profile": {
            "mean_error_deg": [None if not np.isfinite(v) else float(v) for v in extractor.profile_.mean_error],
            "count": [int(c) for c in extractor.profile_.counts],
        },
        "conditions": inter_conditions,
    }
    return Analysis(report, intermediates, segments)
