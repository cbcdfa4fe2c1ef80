"""Domain types and the gaze-vector to visual-angle conversion.

Angle convention: positive x is rightward, positive y is upward, and the
gaze vector's z component points into the scene. Horizontal and vertical
angles are computed independently from (vx, vz) and (vy, vz), so they are
separable and invariant to positive scaling of the vector; vectors are not
normalized.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DomainError, InvalidVectorError

__all__ = [
    "Task",
    "GazeVector",
    "GazeAngles",
    "GazeSample",
    "TargetStep",
    "Recording",
    "to_angles",
    "angles_to_vector",
    "vectors_to_angles",
    "angles_to_vectors",
    "usable_vectors",
]


class Task(str, enum.Enum):
    RANDOM_SACCADES = "random_saccades"
    CALIBRATION_GRID = "calibration_grid"


@dataclass(frozen=True)
class GazeVector:
    vx: float
    vy: float
    vz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz], dtype=float)


@dataclass(frozen=True)
class GazeAngles:
    """Horizontal and vertical visual angle in degrees."""

    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class GazeSample:
    timestamp: float
    vector: GazeVector
    valid: bool = True


@dataclass(frozen=True)
class TargetStep:
    """One stimulus position held over ``[onset, offset)`` milliseconds."""

    onset: float
    offset: float
    position: GazeAngles
    position3d: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.offset > self.onset:
            raise DomainError(f"target step offset {self.offset} must exceed onset {self.onset}")


def to_angles(v: GazeVector) -> GazeAngles:
    """Convert a gaze direction to degrees of visual angle.

    Raises
    ------
    InvalidVectorError
        If the vector is zero, non-finite, or does not point into the scene.
    """
    comps = (v.vx, v.vy, v.vz)
    if not all(np.isfinite(c) for c in comps):
        raise InvalidVectorError(f"non-finite gaze vector {comps}")
    if v.vx == 0 and v.vy == 0 and v.vz == 0:
        raise InvalidVectorError("zero gaze vector")
    if v.vz <= 0:
        raise InvalidVectorError(f"gaze vector does not point into the scene (vz={v.vz})")
    return GazeAngles(
        float(np.degrees(np.arctan2(v.vx, v.vz))),
        float(np.degrees(np.arctan2(v.vy, v.vz))),
    )


def angles_to_vector(a: GazeAngles) -> GazeVector:
    """Inverse of :func:`to_angles`, returning the vector with ``vz = 1``."""
    if not (np.isfinite(a.x) and np.isfinite(a.y)) or abs(a.x) >= 90 or abs(a.y) >= 90:
        raise DomainError(f"angles must lie strictly within (-90, 90) degrees, got ({a.x}, {a.y})")
    return GazeVector(float(np.tan(np.radians(a.x))), float(np.tan(np.radians(a.y))), 1.0)


def usable_vectors(vectors: np.ndarray) -> np.ndarray:
    """Boolean mask of rows that are finite and have ``vz > 0``."""
    vectors = np.asarray(vectors, dtype=float)
    return np.isfinite(vectors).all(axis=1) & (vectors[:, 2] > 0)


def vectors_to_angles(vectors: np.ndarray) -> np.ndarray:
    """Vectorized :func:`to_angles` over an ``(n, 3)`` array.

    Rows that cannot be converted come back as NaN instead of raising.
    """
    vectors = np.asarray(vectors, dtype=float).reshape(-1, 3)
    ok = usable_vectors(vectors)
    out = np.full((vectors.shape[0], 2), np.nan)
    v = vectors[ok]
    out[ok, 0] = np.degrees(np.arctan2(v[:, 0], v[:, 2]))
    out[ok, 1] = np.degrees(np.arctan2(v[:, 1], v[:, 2]))
    return out


def angles_to_vectors(angles: np.ndarray) -> np.ndarray:
    """Vectorized :func:`angles_to_vector`; out-of-range rows become NaN."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 2)
    ok = np.isfinite(angles).all(axis=1) & (np.abs(angles) < 90).all(axis=1)
    out = np.full((angles.shape[0], 3), np.nan)
    out[ok, :2] = np.tan(np.radians(angles[ok]))
    out[ok, 2] = 1.0
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Recording:
    """A gaze recording with its target schedule.

    Samples are stored column-wise: ``timestamps`` (ms, strictly
    increasing), ``vectors`` (n x 3) and ``valid``. A sample whose vector is
    non-finite or has ``vz <= 0`` is always flagged invalid, whatever the
    flag it was constructed with.
    """

    subject_id: str
    task: Task
    timestamps: np.ndarray
    vectors: np.ndarray
    valid: np.ndarray
    targets: tuple[TargetStep, ...] = ()
    nominal_rate: float = 30.0
    viewing_distance: float = 1500.0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        vec = np.asarray(self.vectors, dtype=float).reshape(-1, 3)
        valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if not (len(ts) == len(vec) == len(valid)):
            raise ValueError("timestamps, vectors and valid must have the same length")
        if not np.isfinite(ts).all():
            raise ValueError("timestamps must be finite")
        if len(ts) > 1 and not (np.diff(ts) > 0).all():
            raise ValueError("timestamps must be strictly increasing")
        if self.nominal_rate <= 0:
            raise ValueError("nominal_rate must be positive")
        valid = valid & usable_vectors(vec)
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "timestamps", _frozen(ts))
        object.__setattr__(self, "vectors", _frozen(vec))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "targets", tuple(self.targets))

    @classmethod
    def from_samples(
        cls,
        subject_id: str,
        task: Task | str,
        samples: Iterable[GazeSample],
        targets: Sequence[TargetStep] = (),
        nominal_rate: float = 30.0,
        viewing_distance: float = 1500.0,
    ) -> "Recording":
        samples = list(samples)
        return cls(
            subject_id=subject_id,
            task=Task(task),
            timestamps=np.array([s.timestamp for s in samples], dtype=float),
            vectors=np.array([(s.vector.vx, s.vector.vy, s.vector.vz) for s in samples], dtype=float).reshape(-1, 3),
            valid=np.array([s.valid for s in samples], dtype=bool),
            targets=tuple(targets),
            nominal_rate=nominal_rate,
            viewing_distance=viewing_distance,
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.task == other.task
            and self.nominal_rate == other.nominal_rate
            and self.viewing_distance == other.viewing_distance
            and self.targets == other.targets
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.vectors, other.vectors, equal_nan=True)
            and np.array_equal(self.valid, other.valid)
        )

    __hash__ = None

    @property
    def samples(self) -> tuple[GazeSample, ...]:
        return tuple(
            GazeSample(float(t), GazeVector(*map(float, v)), bool(ok))
            for t, v, ok in zip(self.timestamps, self.vectors, self.valid)
        )

    @property
    def nominal_isi(self) -> float:
        """Nominal inter-sample interval in ms."""
        return 1000.0 / self.nominal_rate

    @cached_property
    def angles(self) -> np.ndarray:
        """``(n, 2)`` gaze angles in degrees; NaN rows for invalid samples."""
        out = vectors_to_angles(self.vectors)
        out[~self.valid] = np.nan
        out.setflags(write=False)
        return out

    @cached_property
    def target_onsets(self) -> np.ndarray:
        return np.array([t.onset for t in self.targets], dtype=float)

    @cached_property
    def target_offsets(self) -> np.ndarray:
        return np.array([t.offset for t in self.targets], dtype=float)

    @cached_property
    def target_positions(self) -> np.ndarray:
        return np.array([(t.position.x, t.position.y) for t in self.targets], dtype=float).reshape(-1, 2)

    def target_index_at(self, times: np.ndarray) -> np.ndarray:
        """Index of the target step active at each time, or -1 when none is."""
        times = np.asarray(times, dtype=float)
        if not self.targets:
            return np.full(times.shape, -1, dtype=int)
        idx = np.searchsorted(self.target_onsets, times, side="right") - 1
        safe = np.clip(idx, 0, None)
        active = (idx >= 0) & (times < self.target_offsets[safe])
        return np.where(active, idx, -1)

    def with_samples(self, vectors: np.ndarray, valid: np.ndarray | None = None) -> "Recording":
        """Copy with replaced vectors (and optionally validity flags)."""
        return replace(self, vectors=vectors, valid=self.valid if valid is None else valid)
