"""Reading and writing recordings, target schedules and dataset manifests.

File formats (all comma separated, header row required)::

    samples.csv   timestamp_ms,vx,vy,vz,valid
    targets.csv   onset_ms,offset_ms,target_x_deg,target_y_deg

A manifest is a JSON array of ``{"subject_id", "task", "samples",
"targets"}`` objects; relative paths resolve against the manifest's own
directory. Optional ``nominal_rate`` (Hz) and ``viewing_distance`` (mm)
keys override the defaults of 30 Hz and 1500 mm.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .core import GazeAngles, Recording, TargetStep, Task
from .exceptions import DataError, ParseError, ValidationError

__all__ = [
    "SAMPLE_COLUMNS",
    "TARGET_COLUMNS",
    "INVALID_FRACTION_THRESHOLD",
    "ManifestEntry",
    "DatasetManifest",
    "ValidationSummary",
    "parse_recording",
    "parse_samples",
    "parse_targets",
    "validate_recording",
    "load_manifest",
    "load_dataset",
    "write_samples_csv",
    "write_targets_csv",
    "format_number",
]

SAMPLE_COLUMNS = ("timestamp_ms", "vx", "vy", "vz", "valid")
TARGET_COLUMNS = ("onset_ms", "offset_ms", "target_x_deg", "target_y_deg")

# subjects are excluded when strictly more than this fraction of samples is invalid
INVALID_FRACTION_THRESHOLD = 0.20
# an ISI above this multiple of the nominal ISI counts as data loss
_GAP_FACTOR = 1.5

Source = Union[bytes, str, os.PathLike, IO]


def format_number(x: float) -> str:
    """Locale-independent, round-trippable decimal text for a float."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e15:
        return repr(int(x)) if x != 0 else "0"
    return repr(x)


def _read_text(source: Source) -> tuple[str, str | None]:
    if isinstance(source, bytes):
        return source.decode("utf-8"), None
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        try:
            return path.read_text(encoding="utf-8"), str(path)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data, getattr(source, "name", None)


def _rows(text: str, expected: tuple[str, ...], name: str | None):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header", row=1, source=name) from None
    header = tuple(h.strip() for h in header)
    if header != expected:
        raise ParseError(f"expected header {','.join(expected)!r}, got {','.join(header)!r}", row=1, source=name)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(expected):
            raise ParseError(f"expected {len(expected)} columns, got {len(row)}", row=lineno, source=name)
        yield lineno, row


def _to_float(cell: str, lineno: int, column: str, name: str | None) -> float:
    try:
        return float(cell.strip())
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", row=lineno, column=column, source=name) from None


def parse_samples(source: Source) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a samples CSV into sorted, de-duplicated column arrays.

    Rows are stably sorted by timestamp and repeated timestamps keep only
    their first occurrence. Non-finite vector components and ``vz <= 0``
    leave the row in place but mark it invalid.
    """
    text, name = _read_text(source)
    ts, vec, valid = [], [], []
    for lineno, row in _rows(text, SAMPLE_COLUMNS, name):
        t = _to_float(row[0], lineno, "timestamp_ms", name)
        if not math.isfinite(t):
            raise ParseError("timestamp must be finite", row=lineno, column="timestamp_ms", source=name)
        v = [_to_float(row[i], lineno, SAMPLE_COLUMNS[i], name) for i in (1, 2, 3)]
        flag = row[4].strip()
        if flag not in ("0", "1"):
            raise ParseError(f"valid must be 0 or 1, got {flag!r}", row=lineno, column="valid", source=name)
        ok = flag == "1" and all(math.isfinite(c) for c in v) and v[2] > 0
        ts.append(t)
        vec.append(v)
        valid.append(ok)
    ts = np.asarray(ts, dtype=float)
    vec = np.asarray(vec, dtype=float).reshape(-1, 3)
    valid = np.asarray(valid, dtype=bool)
    order = np.argsort(ts, kind="stable")
    ts, vec, valid = ts[order], vec[order], valid[order]
    keep = np.ones(len(ts), dtype=bool)
    keep[1:] = ts[1:] != ts[:-1]
    return ts[keep], vec[keep], valid[keep]


def parse_targets(source: Source) -> tuple[TargetStep, ...]:
    """Parse a targets CSV; steps must be ordered and non-overlapping."""
    text, name = _read_text(source)
    steps: list[TargetStep] = []
    for lineno, row in _rows(text, TARGET_COLUMNS, name):
        onset, offset, x, y = (_to_float(c, lineno, col, name) for c, col in zip(row, TARGET_COLUMNS))
        for value, col in zip((onset, offset, x, y), TARGET_COLUMNS):
            if not math.isfinite(value):
                raise ParseError("value must be finite", row=lineno, column=col, source=name)
        if not offset > onset:
            raise ParseError(f"offset {offset} does not follow onset {onset}", row=lineno, column="offset_ms", source=name)
        if steps and onset < steps[-1].offset:
            raise ParseError(
                f"step starting at {onset} overlaps the previous step ending at {steps[-1].offset}",
                row=lineno,
                column="onset_ms",
                source=name,
            )
        steps.append(TargetStep(onset, offset, GazeAngles(x, y)))
    return tuple(steps)


def parse_recording(
    samples_source: Source,
    targets_source: Source,
    subject_id: str,
    task: Task | str,
    nominal_rate: float = 30.0,
    viewing_distance: float = 1500.0,
) -> Recording:
    """Build a :class:`Recording` from a samples CSV and a targets CSV.

    Raises
    ------
    ParseError
        On a malformed header, a wrong column count, an unparseable value, or
        a target schedule that is not strictly ordered.
    """
    try:
        task = Task(task)
    except ValueError:
        raise ParseError(f"unknown task {task!r}") from None
    ts, vec, valid = parse_samples(samples_source)
    targets = parse_targets(targets_source)
    return Recording(
        subject_id=subject_id,
        task=task,
        timestamps=ts,
        vectors=vec,
        valid=valid,
        targets=targets,
        nominal_rate=nominal_rate,
        viewing_distance=viewing_distance,
    )


@dataclass(frozen=True)
class ValidationSummary:
    """Outcome of :func:`validate_recording`.

    ``reasons`` lists what caused an exclusion. ``notes`` carries
    informational findings, such as timestamp gaps, that do not exclude.
    """

    subject_id: str
    task: str
    total_samples: int
    invalid_fraction: float
    excluded: bool
    reasons: tuple[str, ...] = ()
    data_loss_fraction: float = 0.0
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "task": self.task,
            "total_samples": self.total_samples,
            "invalid_fraction": self.invalid_fraction,
            "excluded": self.excluded,
            "reasons": list(self.reasons),
            "data_loss_fraction": self.data_loss_fraction,
            "notes": list(self.notes),
        }


def validate_recording(r: Recording, threshold: float = INVALID_FRACTION_THRESHOLD) -> ValidationSummary:
    """Apply the invalid-sample exclusion rule and structural checks.

    A recording is excluded when more than ``threshold`` of its samples are
    invalid (strict inequality), when it has no target steps, or when no
    sample is valid. Gaps in the timestamp stream are reported in
    ``notes`` only.
    """
    total = len(r)
    if total == 0:
        raise ValidationError(f"recording {r.subject_id}/{r.task.value} has no samples")
    n_invalid = int(total - np.count_nonzero(r.valid))
    invalid_fraction = n_invalid / total
    reasons = []
    if invalid_fraction > threshold:
        reasons.append(f"invalid fraction {invalid_fraction:.4f} exceeds {threshold:.2f}")
    if not r.targets:
        reasons.append("no target steps")
    if n_invalid == total:
        reasons.append("no valid samples")

    notes = []
    data_loss = 0.0
    if total > 1:
        isi = np.diff(r.timestamps)
        gaps = int(np.count_nonzero(isi > _GAP_FACTOR * r.nominal_isi))
        expected = int(round((r.timestamps[-1] - r.timestamps[0]) / r.nominal_isi)) + 1
        data_loss = max(0.0, 1.0 - total / expected) if expected > 0 else 0.0
        if gaps:
            notes.append(f"{gaps} timestamp gaps longer than {_GAP_FACTOR:g}x the nominal interval")
    return ValidationSummary(
        subject_id=r.subject_id,
        task=r.task.value,
        total_samples=total,
        invalid_fraction=invalid_fraction,
        excluded=bool(reasons),
        reasons=tuple(reasons),
        data_loss_fraction=data_loss,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    task: Task
    samples: Path
    targets: Path
    nominal_rate: float = 30.0
    viewing_distance: float = 1500.0

    def to_dict(self, relative_to: Path | None = None) -> dict:
        def rel(p: Path) -> str:
            if relative_to is not None:
                try:
                    return Path(p).relative_to(relative_to).as_posix()
                except ValueError:
                    pass
            return Path(p).as_posix()

        d = {
            "subject_id": self.subject_id,
            "task": self.task.value,
            "samples": rel(self.samples),
            "targets": rel(self.targets),
        }
        if self.nominal_rate != 30.0:
            d["nominal_rate"] = self.nominal_rate
        if self.viewing_distance != 1500.0:
            d["viewing_distance"] = self.viewing_distance
        return d


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.subject_id, e.task)
            if key in seen:
                raise ParseError(f"duplicate manifest entry for subject {e.subject_id!r}, task {e.task.value!r}")
            seen.add(key)

    @property
    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.entries})

    def to_json(self, relative_to: Path | None = None) -> str:
        return json.dumps([e.to_dict(relative_to) for e in self.entries], indent=2, sort_keys=True) + "\n"


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    path = Path(path)
    text, _ = _read_text(path)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", row=exc.lineno, source=str(path)) from None
    if not isinstance(raw, list):
        raise ParseError("manifest must be a JSON array", source=str(path))
    base = path.parent
    entries = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ParseError(f"entry {i} is not an object", source=str(path))
        missing = [k for k in ("subject_id", "task", "samples", "targets") if k not in item]
        if missing:
            raise ParseError(f"entry {i} lacks {', '.join(missing)}", source=str(path))
        try:
            task = Task(item["task"])
        except ValueError:
            raise ParseError(f"entry {i} has unknown task {item['task']!r}", source=str(path)) from None
        entries.append(
            ManifestEntry(
                subject_id=str(item["subject_id"]),
                task=task,
                samples=base / item["samples"],
                targets=base / item["targets"],
                nominal_rate=float(item.get("nominal_rate", 30.0)),
                viewing_distance=float(item.get("viewing_distance", 1500.0)),
            )
        )
    return DatasetManifest(tuple(entries))


def load_dataset(manifest: DatasetManifest) -> list[tuple[Recording, ValidationSummary]]:
    """Parse and validate every manifest entry, in manifest order.

    Excluded recordings are returned with ``excluded=True`` rather than
    dropped.
    """
    out = []
    for e in manifest.entries:
        for p in (e.samples, e.targets):
            if not Path(p).is_file():
                raise DataError(f"missing file: {p}")
        rec = parse_recording(e.samples, e.targets, e.subject_id, e.task, e.nominal_rate, e.viewing_distance)
        out.append((rec, validate_recording(rec)))
    return out


def write_samples_csv(r: Recording, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SAMPLE_COLUMNS)
    for t, v, ok in zip(r.timestamps, r.vectors, r.valid):
        w.writerow([format_number(t), *(format_number(c) for c in v), "1" if ok else "0"])


def write_targets_csv(targets: Iterable[TargetStep], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TARGET_COLUMNS)
    for s in targets:
        w.writerow([format_number(s.onset), format_number(s.offset), format_number(s.position.x), format_number(s.position.y)])
