"""Post-hoc affine recalibration of gaze angles.

Corrected angles are an affine function of both measured angles::

    x' = ax * x + bx * y + cx
    y' = ay * x + by * y + cy

The six coefficients come from two independent least-squares fits of the
target coordinates on the measured gaze (plus an intercept), using the
stable-window samples of a calibration-grid recording.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import GazeAngles, Recording, angles_to_vectors
from .exceptions import RankDeficiencyError
from .preprocessing import FixationSegment
from .regression import solve_least_squares

__all__ = [
    "CalibrationModel",
    "AffineRecalibrator",
    "fit_calibration",
    "apply_calibration",
    "recalibrate_recording",
]

_MIN_SAMPLES = 6
_MIN_TARGETS = 3


@dataclass(frozen=True)
class CalibrationModel:
    ax: float = 1.0
    bx: float = 0.0
    cx: float = 0.0
    ay: float = 0.0
    by: float = 1.0
    cy: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.as_matrix()).all():
            raise ValueError("calibration coefficients must be finite")

    @classmethod
    def identity(cls) -> "CalibrationModel":
        return cls()

    def as_matrix(self) -> np.ndarray:
        """2 x 3 matrix ``[[ax, bx, cx], [ay, by, cy]]``."""
        return np.array([[self.ax, self.bx, self.cx], [self.ay, self.by, self.cy]], dtype=float)

    def apply(self, angles: np.ndarray) -> np.ndarray:
        """Apply to an ``(n, 2)`` array of angles."""
        angles = np.asarray(angles, dtype=float).reshape(-1, 2)
        m = self.as_matrix()
        return angles @ m[:, :2].T + m[:, 2]

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationModel":
        return cls(**{k: float(d[k]) for k in ("ax", "bx", "cx", "ay", "by", "cy")})

    @classmethod
    def from_json(cls, text: str) -> "CalibrationModel":
        return cls.from_dict(json.loads(text))


def _fit_arrays(measured: np.ndarray, target: np.ndarray) -> CalibrationModel:
    if len(measured) < _MIN_SAMPLES:
        raise RankDeficiencyError(f"need at least {_MIN_SAMPLES} samples to fit a calibration, got {len(measured)}")
    uniq = np.unique(target, axis=0)
    if len(uniq) < _MIN_TARGETS or np.linalg.matrix_rank(np.column_stack([uniq, np.ones(len(uniq))]), tol=1e-9) < 3:
        raise RankDeficiencyError("calibration targets are collinear or fewer than 3")
    X = np.column_stack([measured, np.ones(len(measured))])
    coef, _ = solve_least_squares(X, target)
    (ax, ay), (bx, by), (cx, cy) = coef
    return CalibrationModel(ax, bx, cx, ay, by, cy)


def fit_calibration(segments: Sequence[FixationSegment]) -> CalibrationModel:
    """Fit the affine model on every sample of the given grid-task segments.

    Raises
    ------
    RankDeficiencyError
        With fewer than 6 samples, fewer than 3 non-collinear targets, or an
        ill-conditioned set of measured positions.
    """
    if not segments:
        raise RankDeficiencyError("no calibration segments")
    measured = np.concatenate([s.angles for s in segments])
    target = np.concatenate([np.broadcast_to(s.target_array, s.angles.shape) for s in segments])
    return _fit_arrays(measured, target)


def apply_calibration(m: CalibrationModel, a: GazeAngles) -> GazeAngles:
    x, y = m.apply(a.as_array())[0]
    return GazeAngles(float(x), float(y))


def recalibrate_recording(m: CalibrationModel, r: Recording) -> Recording:
    """Copy of ``r`` with every valid sample's angles passed through ``m``.

    Vectors are rebuilt with ``vz = 1``. Timestamps and validity flags are
    kept, except that a sample mapped to 90 degrees or beyond has no vector
    representation and becomes invalid. The identity model returns ``r``
    unchanged.
    """
    if m == CalibrationModel.identity():
        return r
    vectors = np.array(r.vectors, copy=True)
    ok = r.valid
    vectors[ok] = angles_to_vectors(m.apply(r.angles[ok]))
    return r.with_samples(vectors, r.valid & np.isfinite(vectors).all(axis=1))


class AffineRecalibrator(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer for the affine gaze correction.

    ``fit(X, y)`` takes measured angles ``X`` and target angles ``y``, both
    ``(n, 2)``. ``transform(X)`` returns corrected angles. The fitted model
    is exposed as ``model_``.
    """

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, multi_output=True)
        if X.shape[1] != 2 or np.asarray(y).reshape(len(X), -1).shape[1] != 2:
            raise ValueError("X and y must both have two columns (x, y degrees)")
        self.model_ = _fit_arrays(X, np.asarray(y).reshape(-1, 2))
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return self.model_.apply(X)
