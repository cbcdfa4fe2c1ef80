"""Saccade-latency removal and stable-fixation extraction.

Latency is removed by shifting the gaze stream backward by a whole number
of samples: after a shift of ``s`` the gaze sample ``i + s`` is paired with
the target active at the timestamp of sample ``i``. Within each target step
the shifted samples are then indexed 0, 1, 2, ... from onset in stream
order (dropped samples shorten a step rather than leaving holes), and a
window of those indices is kept as the stable part of the fixation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import GazeAngles, Recording, angles_to_vectors
from .exceptions import EstimationError, SelectionError
from .ingestion import format_number

__all__ = [
    "MAX_LATENCY_MS",
    "PROFILE_LENGTH",
    "PAPER_WINDOW",
    "DEFAULT_TOLERANCE_FACTOR",
    "LatencyEstimate",
    "ErrorProfile",
    "StableWindow",
    "FixationSegment",
    "SegmentList",
    "estimate_latency",
    "error_profile",
    "combine_profiles",
    "select_stable_window",
    "extract_segments",
    "write_error_profile_csv",
    "StableFixationExtractor",
]

MAX_LATENCY_MS = 800.0
PROFILE_LENGTH = 30
PAPER_WINDOW = (8, 22)
DEFAULT_TOLERANCE_FACTOR = 1.10
# profile entries within this many degrees of the minimum always count as minimal
WINDOW_ATOL = 1e-9


@dataclass(frozen=True)
class LatencyEstimate:
    shift_samples: int
    shift_ms: float
    residual_error: float
    # mean gaze-target distance for every candidate shift 0..max
    candidate_errors: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "shift_samples": self.shift_samples,
            "shift_ms": self.shift_ms,
            "residual_error": self.residual_error,
        }


@dataclass(frozen=True, eq=False)
class ErrorProfile:
    """Mean gaze-target error by sample index from target onset.

    Indices without contributors hold NaN in ``mean_error`` and 0 in
    ``counts``.
    """

    mean_error: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean_error", np.asarray(self.mean_error, dtype=float))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=int))

    def __len__(self) -> int:
        return len(self.mean_error)

    @property
    def present(self) -> np.ndarray:
        return self.counts > 0


@dataclass(frozen=True)
class StableWindow:
    start_index: int
    end_index: int

    def __post_init__(self):
        if not 0 <= self.start_index <= self.end_index:
            raise ValueError(f"invalid window ({self.start_index}, {self.end_index})")

    @property
    def length(self) -> int:
        return self.end_index - self.start_index + 1

    def as_tuple(self) -> tuple[int, int]:
        return (self.start_index, self.end_index)


@dataclass(frozen=True, eq=False)
class FixationSegment:
    """Stable-window gaze samples recorded while one target was shown."""

    subject_id: str
    target: GazeAngles
    timestamps: np.ndarray
    angles: np.ndarray
    source_step_index: int

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        ang = np.asarray(self.angles, dtype=float).reshape(-1, 2)
        if len(ts) != len(ang):
            raise ValueError("timestamps and angles must have the same length")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "angles", ang)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def samples(self) -> list[tuple[float, GazeAngles]]:
        return [(float(t), GazeAngles(float(a[0]), float(a[1]))) for t, a in zip(self.timestamps, self.angles)]

    @property
    def target_array(self) -> np.ndarray:
        return np.array([self.target.x, self.target.y])

    @property
    def offsets(self) -> np.ndarray:
        """Signed gaze minus target, ``(n, 2)`` degrees."""
        return self.angles - self.target_array

    @property
    def mean_gaze(self) -> np.ndarray:
        return self.angles.mean(axis=0)

    @property
    def vectors(self) -> np.ndarray:
        return angles_to_vectors(self.angles)


class SegmentList(list):
    """A list of segments that also records how many steps were skipped."""

    def __init__(self, segments: Iterable[FixationSegment] = (), skipped: int = 0):
        super().__init__(segments)
        self.skipped = skipped


def _max_shift(r: Recording, max_latency_ms: float) -> int:
    # small epsilon so 800 ms at 30 Hz gives exactly 24 samples
    return max(0, int(math.floor(max_latency_ms / r.nominal_isi + 1e-9)))


def _aligned(r: Recording, shift: int):
    """Pair target-clock timestamps with gaze shifted ``shift`` samples later."""
    n = len(r) - shift
    if n <= 0:
        empty = np.empty(0)
        return empty, np.empty((0, 2)), np.empty(0, dtype=bool), empty
    t = r.timestamps[:n]
    return t, r.angles[shift:], r.valid[shift:], r.timestamps[shift:]


def _target_positions_at(r: Recording, times: np.ndarray) -> np.ndarray:
    idx = r.target_index_at(times)
    pos = np.full((len(times), 2), np.nan)
    hit = idx >= 0
    pos[hit] = r.target_positions[idx[hit]]
    return pos


def estimate_latency(r: Recording, max_latency_ms: float = MAX_LATENCY_MS) -> LatencyEstimate:
    """Find the backward gaze shift that minimizes mean gaze-target distance.

    Every integer shift from 0 to ``floor(max_latency_ms / nominal ISI)``
    samples is evaluated exhaustively; ties go to the smaller shift.

    Raises
    ------
    EstimationError
        If the recording has fewer than two target steps or valid samples,
        or if no shift yields a valid gaze/target pair.
    """
    if len(r.targets) < 2:
        raise EstimationError(f"{r.subject_id}: latency estimation needs at least 2 target steps")
    if np.count_nonzero(r.valid) < 2:
        raise EstimationError(f"{r.subject_id}: latency estimation needs at least 2 valid samples")
    target_pos = _target_positions_at(r, r.timestamps)
    angles = r.angles
    n = len(r)
    errors = []
    for s in range(_max_shift(r, max_latency_ms) + 1):
        if s >= n:
            errors.append(math.inf)
            continue
        d = np.hypot(*(angles[s:] - target_pos[: n - s]).T)
        d = d[np.isfinite(d)]
        errors.append(float(d.mean()) if d.size else math.inf)
    errors_arr = np.asarray(errors)
    if not np.isfinite(errors_arr).any():
        raise EstimationError(f"{r.subject_id}: no valid gaze/target pairs at any shift")
    best = int(np.argmin(errors_arr))
    return LatencyEstimate(best, best * r.nominal_isi, float(errors_arr[best]), tuple(errors))


def _step_positions(step_idx: np.ndarray) -> np.ndarray:
    """Position of each sample within its run of equal step indices."""
    n = len(step_idx)
    if n == 0:
        return np.empty(0, dtype=int)
    starts = np.ones(n, dtype=bool)
    starts[1:] = step_idx[1:] != step_idx[:-1]
    start_pos = np.maximum.accumulate(np.where(starts, np.arange(n), 0))
    return np.arange(n) - start_pos


def _indexed(r: Recording, shift: LatencyEstimate | int):
    s = shift.shift_samples if isinstance(shift, LatencyEstimate) else int(shift)
    t, gaze, valid, gaze_t = _aligned(r, s)
    step = r.target_index_at(t)
    k = _step_positions(step)
    return step, k, gaze, valid, gaze_t


def error_profile(r: Recording, shift: LatencyEstimate | int, length: int = PROFILE_LENGTH) -> ErrorProfile:
    """Mean Euclidean gaze-target error at each of the first ``length`` post-shift sample indices."""
    step, k, gaze, valid, _ = _indexed(r, shift)
    use = (step >= 0) & (k < length) & valid
    err = np.hypot(*(gaze[use] - r.target_positions[step[use]]).T) if use.any() else np.empty(0)
    sums = np.bincount(k[use], weights=err, minlength=length)[:length]
    counts = np.bincount(k[use], minlength=length)[:length]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return ErrorProfile(mean, counts)


def combine_profiles(profiles: Sequence[ErrorProfile]) -> ErrorProfile:
    """Pool per-recording profiles into one, weighting every fixation equally."""
    if not profiles:
        raise SelectionError("no error profiles to combine")
    length = len(profiles[0])
    sums = np.zeros(length)
    counts = np.zeros(length, dtype=int)
    for p in profiles:
        if len(p) != length:
            raise ValueError("profiles differ in length")
        sums += np.where(p.present, p.mean_error * p.counts, 0.0)
        counts += p.counts
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return ErrorProfile(mean, counts)


def select_stable_window(
    p: ErrorProfile,
    policy: str = "data_driven",
    tolerance_factor: float = DEFAULT_TOLERANCE_FACTOR,
) -> StableWindow:
    """Pick the sample-index window used for all fixation metrics.

    ``paper_fixed`` always returns indices 8..22. ``data_driven`` returns the
    longest contiguous run of present indices whose error is within
    ``tolerance_factor`` times the profile minimum (or within 1e-9 degrees
    of it); ties go to the earliest run.
    """
    if policy == "paper_fixed":
        return StableWindow(*PAPER_WINDOW)
    if policy != "data_driven":
        raise ValueError(f"unknown window policy {policy!r}")
    present = p.present
    if not present.any():
        raise SelectionError("error profile has no present indices")
    lowest = float(np.min(p.mean_error[present]))
    threshold = max(lowest * tolerance_factor, lowest + WINDOW_ATOL)
    ok = present & (np.nan_to_num(p.mean_error, nan=np.inf) <= threshold)
    best, best_len, run_start = None, 0, None
    for i, flag in enumerate(list(ok) + [False]):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if i - run_start > best_len:
                best, best_len = (run_start, i - 1), i - run_start
            run_start = None
    return StableWindow(*best)


def extract_segments(r: Recording, shift: LatencyEstimate | int, w: StableWindow) -> SegmentList:
    """One :class:`FixationSegment` per target step, holding the valid in-window samples.

    Steps without any valid in-window sample are skipped; their number is
    available as ``.skipped`` on the returned list.
    """
    step, k, gaze, valid, gaze_t = _indexed(r, shift)
    in_window = (step >= 0) & (k >= w.start_index) & (k <= w.end_index)
    use = in_window & valid
    segments = []
    sel = np.flatnonzero(use)
    bounds = np.flatnonzero(np.diff(step[sel])) + 1
    for group in np.split(sel, bounds) if sel.size else []:
        j = int(step[group[0]])
        tgt = r.targets[j].position
        segments.append(FixationSegment(r.subject_id, tgt, gaze_t[group], gaze[group], j))
    skipped = len(r.targets) - len(segments)
    return SegmentList(segments, skipped)


def write_error_profile_csv(p: ErrorProfile, fh: IO[str]) -> None:
    fh.write("index,mean_error_deg,count\n")
    for i, (m, c) in enumerate(zip(p.mean_error, p.counts)):
        fh.write(f"{i},{format_number(m)},{int(c)}\n")


class StableFixationExtractor(BaseEstimator):
    """Estimator wrapper around the latency and windowing steps.

    ``fit`` estimates one latency per subject from random-saccades
    recordings, pools their error profiles and selects a stable window.
    ``transform`` turns recordings of fitted subjects (of either task) into
    fixation segments with that subject's latency and the shared window.

    Parameters
    ----------
    window : {"data_driven", "paper_fixed"}
    tolerance_factor : float
        Multiple of the minimum profile error still counted as stable.
    max_latency_ms : float
    profile_length : int
        Number of post-onset samples in the error profile.
    """

    def __init__(self, window="data_driven", tolerance_factor=DEFAULT_TOLERANCE_FACTOR,
                 max_latency_ms=MAX_LATENCY_MS, profile_length=PROFILE_LENGTH):
        self.window = window
        self.tolerance_factor = tolerance_factor
        self.max_latency_ms = max_latency_ms
        self.profile_length = profile_length

    def fit(self, recordings: Sequence[Recording], y=None):
        recordings = list(recordings)
        if not recordings:
            raise ValueError("no recordings to fit")
        self.latencies_ = {}
        profiles = []
        for r in recordings:
            est = estimate_latency(r, self.max_latency_ms)
            self.latencies_[r.subject_id] = est
            profiles.append(error_profile(r, est, self.profile_length))
        self.profile_ = combine_profiles(profiles)
        self.window_ = select_stable_window(self.profile_, self.window, self.tolerance_factor)
        return self

    def extract(self, r: Recording) -> SegmentList:
        check_is_fitted(self, "window_")
        try:
            est = self.latencies_[r.subject_id]
        except KeyError:
            raise EstimationError(f"no latency estimate for subject {r.subject_id!r}") from None
        return extract_segments(r, est, self.window_)

    def transform(self, recordings: Sequence[Recording]) -> list[FixationSegment]:
        out: list[FixationSegment] = []
        for r in recordings:
            out.extend(self.extract(r))
        return out
