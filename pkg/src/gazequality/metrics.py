"""Spatial accuracy, spatial precision and temporal precision."""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .core import GazeVector, Recording
from .exceptions import DomainError
from .ingestion import format_number
from .preprocessing import FixationSegment

__all__ = [
    "DROP_THRESHOLD_MS",
    "AccuracyResult",
    "PrecisionResult",
    "TemporalStats",
    "AggregateStat",
    "segment_accuracy",
    "vector_accuracy",
    "vector_accuracy_array",
    "segment_vector_accuracy",
    "segment_precision",
    "temporal_stats",
    "pool_temporal_stats",
    "aggregate_metric",
    "histogram",
    "write_histogram_csv",
]

# 1.5x the ideal 33.3 ms interval of a 30 Hz tracker
DROP_THRESHOLD_MS = 49.95


@dataclass(frozen=True)
class AccuracyResult:
    horizontal: float
    vertical: float
    combined: float


@dataclass(frozen=True)
class PrecisionResult:
    """RMS of intersample distances per dimension, and their population SDs.

    Only ``sd_c`` is strictly needed for comparison with SD-based precision
    reports; ``sd_h``/``sd_v`` fill the per-dimension columns of the table.
    """

    rms_h: float
    rms_v: float
    rms_c: float
    sd_c: float
    sd_h: float = 0.0
    sd_v: float = 0.0


@dataclass(frozen=True)
class TemporalStats:
    n_samples: int
    mean_isi: float
    sd_isi: float
    dropped_count: int
    dropped_fraction: float

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "mean_isi_ms": self.mean_isi,
            "sd_isi_ms": self.sd_isi,
            "dropped_count": self.dropped_count,
            "dropped_fraction": self.dropped_fraction,
        }


@dataclass(frozen=True)
class AggregateStat:
    median: float
    p75: float
    p90: float
    mean: float

    def to_dict(self) -> dict:
        return {"median": self.median, "p75": self.p75, "p90": self.p90, "mean": self.mean}


def segment_accuracy(s: FixationSegment) -> AccuracyResult:
    """Mean absolute horizontal, vertical and Euclidean gaze-target offset."""
    if len(s) == 0:
        raise DomainError("accuracy of an empty segment")
    off = s.offsets
    return AccuracyResult(
        float(np.mean(np.abs(off[:, 0]))),
        float(np.mean(np.abs(off[:, 1]))),
        float(np.mean(np.hypot(off[:, 0], off[:, 1]))),
    )


def vector_accuracy_array(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Angle in degrees between rows of ``v`` and ``u`` (broadcasting)."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    nv = np.linalg.norm(v, axis=-1)
    nu = np.linalg.norm(u, axis=-1)
    if np.any(nv == 0) or np.any(nu == 0):
        raise DomainError("angle between vectors is undefined for a zero vector")
    # atan2(|v x u|, v.u) equals arccos of the normalized dot product but stays accurate near 0
    cross = np.linalg.norm(np.cross(v, u), axis=-1)
    dot = np.sum(v * u, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def vector_accuracy(v: GazeVector, u: GazeVector) -> float:
    """Angle in degrees between a gaze vector and a target vector."""
    return float(vector_accuracy_array(v.as_array(), u.as_array()))


def segment_vector_accuracy(s: FixationSegment) -> float:
    """Segment mean of the angle between each gaze vector and the target vector."""
    if len(s) == 0:
        raise DomainError("accuracy of an empty segment")
    target = np.array([np.tan(np.radians(s.target.x)), np.tan(np.radians(s.target.y)), 1.0])
    return float(np.mean(vector_accuracy_array(s.vectors, target)))


def segment_precision(s: FixationSegment) -> PrecisionResult:
    """RMS and SD of consecutive intersample distances within a segment."""
    if len(s) < 2:
        raise DomainError("precision needs at least 2 samples")
    step = np.diff(s.angles, axis=0)
    dh = np.abs(step[:, 0])
    dv = np.abs(step[:, 1])
    dc = np.hypot(step[:, 0], step[:, 1])

    def rms(d):
        return float(np.sqrt(np.mean(d * d)))

    return PrecisionResult(rms(dh), rms(dv), rms(dc), float(np.std(dc)), float(np.std(dh)), float(np.std(dv)))


def temporal_stats(r: Recording, drop_threshold_ms: float = DROP_THRESHOLD_MS) -> TemporalStats:
    """ISI mean/SD (population) and the count of ISIs strictly above the threshold.

    Every sample counts, valid or not, since the device timestamps them all.
    """
    return _temporal_from_timestamps(r.timestamps, drop_threshold_ms)


def _temporal_from_timestamps(ts: np.ndarray, drop_threshold_ms: float) -> TemporalStats:
    ts = np.asarray(ts, dtype=float)
    if len(ts) < 2:
        raise DomainError("temporal precision needs at least 2 samples")
    isi = np.diff(ts)
    dropped = int(np.count_nonzero(isi > drop_threshold_ms))
    return TemporalStats(len(ts), float(isi.mean()), float(isi.std()), dropped, dropped / len(isi))


def pool_temporal_stats(stats: Sequence[TemporalStats]) -> TemporalStats:
    """Combine per-recording stats as if all ISIs were pooled into one sample."""
    if not stats:
        raise DomainError("no temporal stats to pool")
    n_isi = np.array([s.n_samples - 1 for s in stats], dtype=float)
    means = np.array([s.mean_isi for s in stats])
    sds = np.array([s.sd_isi for s in stats])
    total = n_isi.sum()
    mean = float((n_isi * means).sum() / total)
    second = float((n_isi * (sds**2 + means**2)).sum() / total)
    sd = float(np.sqrt(max(second - mean * mean, 0.0)))
    dropped = sum(s.dropped_count for s in stats)
    return TemporalStats(sum(s.n_samples for s in stats), mean, sd, dropped, dropped / total)


def aggregate_metric(
    per_fixation: Mapping[str, Sequence[float]],
    kind: str = "accuracy",
    pooled_mean: bool = False,
    mean_values: Mapping[str, Sequence[float]] | None = None,
) -> AggregateStat:
    """Dataset summary of a per-fixation metric grouped by subject.

    Percentiles (linear interpolation) are taken over per-subject medians.
    ``mean`` averages per-subject means, or all fixations when
    ``pooled_mean`` is set. For ``kind="precision"`` the mean is taken over
    ``mean_values`` (SD-based precision) when given, since the mean column
    reports a different precision definition than the percentiles.
    """
    if kind not in ("accuracy", "precision"):
        raise DomainError(f"unknown metric kind {kind!r}")
    groups = {k: np.asarray(v, dtype=float) for k, v in per_fixation.items() if len(v)}
    if not groups:
        raise DomainError("no values to aggregate")
    subjects = sorted(groups)
    medians = np.array([np.median(groups[k]) for k in subjects])
    p50, p75, p90 = np.percentile(medians, [50, 75, 90])
    src = groups
    if kind == "precision" and mean_values is not None:
        src = {k: np.asarray(v, dtype=float) for k, v in mean_values.items() if len(v)}
        if not src:
            raise DomainError("no values for the mean column")
    if pooled_mean:
        mean = float(np.mean(np.concatenate([src[k] for k in sorted(src)])))
    else:
        mean = float(np.mean([src[k].mean() for k in sorted(src)]))
    return AggregateStat(float(p50), float(p75), float(p90), mean)


def histogram(values: Iterable[float], bin_width: float = 0.25) -> list[tuple[float, float, int]]:
    """Fixed-width histogram starting at 0; bins are ``[left, right)``."""
    if bin_width <= 0:
        raise DomainError("bin width must be positive")
    v = np.asarray(list(values), dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return []
    idx = np.floor(v / bin_width).astype(int)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1)
    return [((lo + i) * bin_width, (lo + i + 1) * bin_width, int(c)) for i, c in enumerate(counts)]


def write_histogram_csv(values: Iterable[float], fh: IO[str], bin_width: float = 0.25) -> None:
    fh.write("bin_left_deg,bin_right_deg,count\n")
    for left, right, count in histogram(values, bin_width):
        fh.write(f"{format_number(left)},{format_number(right)},{count}\n")
