"""Synthetic recordings with known ground truth.

Gaze is built from the target schedule in a fixed order: optional settling
ramp from the previous target, vertical crosstalk driven by the horizontal
gaze angle, affine miscalibration, isotropic Gaussian noise, a latency of
whole samples, invalid flags, and finally dropped samples. Random numbers
are always drawn in the same order, so two configs that differ only in a
corruption strength share every random draw.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from .core import GazeAngles, Recording, TargetStep, Task, angles_to_vectors
from .exceptions import OracleConfigError
from .ingestion import ManifestEntry, write_samples_csv, write_targets_csv
from .recalibration import CalibrationModel

__all__ = [
    "OracleConfig",
    "GroundTruth",
    "GRID_POSITIONS",
    "generate_saccades_recording",
    "generate_grid_recording",
    "write_oracle_recording",
]

_TASK_STREAM = {Task.RANDOM_SACCADES: 0, Task.CALIBRATION_GRID: 1}


def grid_positions(half_width: float = 15.0, half_height: float = 10.0) -> tuple[tuple[float, float], ...]:
    """Center, 4 corners, 4 edge midpoints and 4 half-diagonal points."""
    w, h = half_width, half_height
    pts = [(0.0, 0.0)]
    pts += [(sx * w, sy * h) for sx in (-1, 1) for sy in (-1, 1)]
    pts += [(-w, 0.0), (w, 0.0), (0.0, -h), (0.0, h)]
    pts += [(sx * w / 2, sy * h / 2) for sx in (-1, 1) for sy in (-1, 1)]
    return tuple(pts)


GRID_POSITIONS = grid_positions()


@dataclass(frozen=True)
class OracleConfig:
    seed: int = 0
    n_steps: int = 80
    dwell_range: tuple[float, float] = (1000.0, 1500.0)
    min_jump: float = 3.0
    field: tuple[float, float] = (15.0, 10.0)
    rate: float = 30.0
    latency_samples: int = 0
    noise_sd: float = 0.0
    affine: CalibrationModel = dc_field(default_factory=CalibrationModel)
    crosstalk_linear: float = 0.0
    crosstalk_quadratic: float = 0.0
    drop_probability: float = 0.0
    invalid_probability: float = 0.0
    settle_ms: float = 0.0
    subject_id: str | None = None
    viewing_distance: float = 1500.0

    def __post_init__(self):
        object.__setattr__(self, "dwell_range", tuple(float(v) for v in self.dwell_range))
        object.__setattr__(self, "field", tuple(float(v) for v in self.field))
        if isinstance(self.affine, dict):
            object.__setattr__(self, "affine", CalibrationModel.from_dict(self.affine))

    @property
    def subject(self) -> str:
        return self.subject_id if self.subject_id is not None else f"S{self.seed:03d}"

    def validate(self) -> None:
        lo, hi = self.dwell_range
        hw, hh = self.field
        problems = []
        if self.n_steps < 1:
            problems.append("n_steps must be at least 1")
        if not 0 < lo <= hi:
            problems.append("dwell_range must satisfy 0 < low <= high")
        if hw <= 0 or hh <= 0 or hw >= 90 or hh >= 90:
            problems.append("field half-extents must lie in (0, 90) degrees")
        if self.rate <= 0:
            problems.append("rate must be positive")
        if self.latency_samples < 0:
            problems.append("latency_samples must be non-negative")
        if self.noise_sd < 0:
            problems.append("noise_sd must be non-negative")
        if self.settle_ms < 0:
            problems.append("settle_ms must be non-negative")
        for name in ("drop_probability", "invalid_probability"):
            if not 0 <= getattr(self, name) < 1:
                problems.append(f"{name} must lie in [0, 1)")
        if self.min_jump < 0 or self.min_jump >= math.hypot(hw, hh):
            problems.append(f"min_jump {self.min_jump} is infeasible for a +/-{hw:g} x +/-{hh:g} degree field")
        if problems:
            raise OracleConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dwell_range"] = list(self.dwell_range)
        d["field"] = list(self.field)
        d["affine"] = self.affine.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OracleConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise OracleConfigError(f"unknown oracle config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**d)
        except (TypeError, ValueError, KeyError) as exc:
            raise OracleConfigError(f"invalid oracle config: {exc}") from None


@dataclass(frozen=True)
class GroundTruth:
    subject_id: str
    task: str
    config: dict
    latency_ms: float
    n_generated: int
    n_dropped: int
    n_invalid: int
    targets: tuple[tuple[float, float], ...]

    def to_json(self) -> str:
        d = asdict(self)
        d["targets"] = [list(t) for t in self.targets]
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _saccade_positions(c: OracleConfig, rng: np.random.Generator) -> np.ndarray:
    hw, hh = c.field
    pos = np.empty((c.n_steps, 2))
    pos[0] = rng.uniform([-hw, -hh], [hw, hh])
    for i in range(1, c.n_steps):
        for _ in range(100_000):
            p = rng.uniform([-hw, -hh], [hw, hh])
            if math.hypot(*(p - pos[i - 1])) >= c.min_jump:
                pos[i] = p
                break
        else:
            raise OracleConfigError(f"could not place a target {c.min_jump} degrees from {tuple(pos[i - 1])}")
    return pos


def _synthesize(c: OracleConfig, task: Task, positions: np.ndarray, rng: np.random.Generator) -> tuple[Recording, GroundTruth]:
    n_steps = len(positions)
    isi = 1000.0 / c.rate
    dwell = rng.uniform(c.dwell_range[0], c.dwell_range[1], n_steps)
    edges = np.concatenate([[0.0], np.cumsum(dwell)])
    targets = tuple(
        TargetStep(float(edges[i]), float(edges[i + 1]), GazeAngles(float(positions[i, 0]), float(positions[i, 1])))
        for i in range(n_steps)
    )
    n = int(math.ceil(edges[-1] / isi))
    t = np.arange(n) * isi
    step = np.searchsorted(edges, t, side="right") - 1

    gaze = positions[step].copy()
    if c.settle_ms > 0:
        since = t - edges[step]
        ramp = (step > 0) & (since < c.settle_ms)
        frac = (since[ramp] / c.settle_ms)[:, None]
        prev = positions[step[ramp] - 1]
        gaze[ramp] = prev + frac * (gaze[ramp] - prev)
    gaze[:, 1] += c.crosstalk_linear * gaze[:, 0] + c.crosstalk_quadratic * gaze[:, 0] ** 2
    gaze = c.affine.apply(gaze)
    gaze += rng.normal(0.0, 1.0, size=gaze.shape) * c.noise_sd
    lag = c.latency_samples
    if lag:
        gaze = np.concatenate([np.repeat(gaze[:1], min(lag, n), axis=0), gaze[: max(n - lag, 0)]])

    vectors = angles_to_vectors(gaze)
    invalid = rng.random(n) < c.invalid_probability
    keep = ~(rng.random(n) < c.drop_probability)
    rec = Recording(
        subject_id=c.subject,
        task=task,
        timestamps=t[keep],
        vectors=vectors[keep],
        valid=~invalid[keep],
        targets=targets,
        nominal_rate=c.rate,
        viewing_distance=c.viewing_distance,
    )
    truth = GroundTruth(
        subject_id=c.subject,
        task=task.value,
        config=c.to_dict(),
        latency_ms=lag * isi,
        n_generated=n,
        n_dropped=int(n - keep.sum()),
        n_invalid=int(len(rec) - np.count_nonzero(rec.valid)),
        targets=tuple((float(x), float(y)) for x, y in positions),
    )
    return rec, truth


def generate_saccades_recording(c: OracleConfig) -> tuple[Recording, GroundTruth]:
    """Random-saccades recording: targets uniform in the field, each jump at least ``min_jump``."""
    c.validate()
    rng = np.random.default_rng([c.seed, _TASK_STREAM[Task.RANDOM_SACCADES]])
    positions = _saccade_positions(c, rng)
    return _synthesize(c, Task.RANDOM_SACCADES, positions, rng)


def generate_grid_recording(c: OracleConfig) -> tuple[Recording, GroundTruth]:
    """13-point calibration grid in seed-determined random order."""
    c.validate()
    rng = np.random.default_rng([c.seed, _TASK_STREAM[Task.CALIBRATION_GRID]])
    pts = np.array(grid_positions(*c.field))
    positions = pts[rng.permutation(len(pts))]
    return _synthesize(c, Task.CALIBRATION_GRID, positions, rng)


def write_oracle_recording(rec: Recording, truth: GroundTruth, out_dir: str | Path) -> ManifestEntry:
    """Write ``<subject>_<task>_{samples,targets}.csv`` and ``_truth.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{rec.subject_id}_{rec.task.value}"
    samples = out_dir / f"{stem}_samples.csv"
    targets = out_dir / f"{stem}_targets.csv"
    with open(samples, "w", encoding="utf-8", newline="") as fh:
        write_samples_csv(rec, fh)
    with open(targets, "w", encoding="utf-8", newline="") as fh:
        write_targets_csv(rec.targets, fh)
    (out_dir / f"{stem}_truth.json").write_text(truth.to_json(), encoding="utf-8")
    return ManifestEntry(rec.subject_id, rec.task, samples, targets, rec.nominal_rate, rec.viewing_distance)


def with_seed(c: OracleConfig, seed: int) -> OracleConfig:
    return replace(c, seed=seed)
