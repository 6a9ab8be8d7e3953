"""Optical-capture CSV ingest: parsing, gap filling, smoothing, resampling,
and tracker-table averaging.

Canonical capture format: UTF-8 comma-separated text whose header names a
``Frame`` column, a ``Time`` column (seconds), and three columns
``<label>.x``, ``<label>.y``, ``<label>.z`` per marker.  Empty cells mark
occluded samples; a marker missing any one coordinate is treated as absent
for that frame.  Positions are converted to meters on parse and everything
downstream works in meters.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    AlignmentError,
    CaptureFormatError,
    InsufficientDataError,
    MarkerLookupError,
    OrderingError,
    ParameterError,
    TimeSequenceError,
)

ARTICULATIONS = ("shoulder", "elbow", "wrist")

_UNIT_SCALE = {"millimeters": 1e-3, "mm": 1e-3, "meters": 1.0, "m": 1.0}

# Fraction of the median segment length beyond which a frame is flagged as
# violating the rigid-segment sanity check (flagged, never fatal).
SEGMENT_TOLERANCE = 0.05


def _unit_scale(units: str) -> float:
    try:
        return _UNIT_SCALE[units]
    except KeyError:
        raise ParameterError(
            f"unknown units {units!r}, expected one of {sorted(_UNIT_SCALE)}"
        ) from None


def _fmt(v: float) -> str:
    """Shortest decimal that round-trips the double exactly."""
    return repr(float(v))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RawCapture:
    """One parsed capture file.

    ``column_labels`` lists the data columns (everything except Frame/Time)
    in file order; ``values[i, j]`` is the j-th data column of row i in
    meters, NaN where the cell was empty.
    """

    column_labels: tuple[str, ...]
    frame_index: np.ndarray   # (n,) int
    times: np.ndarray         # (n,) float seconds
    values: np.ndarray        # (n, len(column_labels)) float meters
    source_units: str

    def __post_init__(self):
        if self.values.shape != (len(self.times), len(self.column_labels)):
            raise CaptureFormatError("values shape does not match labels/rows")
        if len(self.times) > 1:
            if not np.all(np.diff(self.times) > 0):
                raise TimeSequenceError("capture times must be strictly increasing")
            if not np.all(np.diff(self.frame_index) > 0):
                raise TimeSequenceError("frame indices must be strictly increasing")
        for a in (self.frame_index, self.times, self.values):
            _readonly(a)

    @property
    def marker_labels(self) -> tuple[str, ...]:
        seen = []
        for c in self.column_labels:
            if c.endswith(".x") and c[:-2] not in seen:
                seen.append(c[:-2])
        return tuple(seen)


def parse_capture_csv(path, units: str = "millimeters") -> RawCapture:
    """Parse a capture CSV, mapping empty cells to NaN and scaling to meters."""
    scale = _unit_scale(units)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CaptureFormatError(f"{path}: empty file, expected a header line") from None
        if "Frame" not in header or "Time" not in header:
            raise CaptureFormatError(
                f"{path}: header must contain 'Frame' and 'Time' columns, got {header!r}"
            )
        frame_col = header.index("Frame")
        time_col = header.index("Time")
        data_cols = [i for i in range(len(header)) if i not in (frame_col, time_col)]
        labels = tuple(header[i] for i in data_cols)

        frames, times, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue  # tolerate a trailing blank line
            if len(row) != len(header):
                raise CaptureFormatError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            frames.append(_parse_frame(row[frame_col], lineno, path))
            times.append(_parse_required(row[time_col], lineno, path, "Time"))
            rows.append([_parse_cell(row[i], lineno, path) for i in data_cols])

    values = np.asarray(rows, dtype=float) if rows else np.empty((0, len(labels)))
    return RawCapture(
        column_labels=labels,
        frame_index=np.asarray(frames, dtype=int),
        times=np.asarray(times, dtype=float),
        values=values * scale,
        source_units="meters" if scale == 1.0 else "millimeters",
    )


def write_capture_csv(capture: RawCapture, path) -> None:
    """Inverse of :func:`parse_capture_csv` (values written in source units)."""
    scale = _unit_scale(capture.source_units)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(("Frame", "Time") + capture.column_labels) + "\n")
        for i in range(len(capture.times)):
            cells = [str(int(capture.frame_index[i])), _fmt(capture.times[i])]
            for v in capture.values[i]:
                cells.append("" if np.isnan(v) else _fmt(v / scale))
            fh.write(",".join(cells) + "\n")


def _parse_frame(cell: str, lineno: int, path) -> int:
    try:
        v = float(cell)
    except ValueError:
        raise CaptureFormatError(f"{path}: row {lineno}: bad Frame value {cell!r}") from None
    if v != int(v):
        raise CaptureFormatError(f"{path}: row {lineno}: Frame must be an integer, got {cell!r}")
    return int(v)


def _parse_required(cell: str, lineno: int, path, name: str) -> float:
    cell = cell.strip()
    if not cell:
        raise CaptureFormatError(f"{path}: row {lineno}: empty {name} cell")
    try:
        return float(cell)
    except ValueError:
        raise CaptureFormatError(f"{path}: row {lineno}: bad {name} value {cell!r}") from None


def _parse_cell(cell: str, lineno: int, path) -> float:
    cell = cell.strip()
    if not cell:
        return float("nan")
    try:
        return float(cell)
    except ValueError:
        raise CaptureFormatError(f"{path}: row {lineno}: bad numeric cell {cell!r}") from None


@dataclass(frozen=True)
class MarkerTrajectory:
    """Time-stamped positions of one labeled marker, NaN rows = occluded.

    ``rate`` is the nominal sample rate; it is exact after :func:`resample`
    and inferred from the median time step otherwise.  ``residual_gaps``
    lists (first, last) frame indices of runs left unfilled by
    :func:`fill_gaps`.
    """

    label: str
    times: np.ndarray      # (n,)
    positions: np.ndarray  # (n, 3) meters
    rate: float
    residual_gaps: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        pos = np.array(self.positions, dtype=float)
        if pos.shape != (len(times), 3):
            raise ParameterError(f"positions must be (n, 3), got {pos.shape}")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise TimeSequenceError(f"marker {self.label!r}: times must be strictly increasing")
        # all-or-nothing absence: a partially known sample is not trusted
        pos[np.isnan(pos).any(axis=1)] = np.nan
        if np.isinf(pos).any():
            raise ParameterError(f"marker {self.label!r}: non-finite present position")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "positions", _readonly(pos))

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.positions[:, 0])

    def __len__(self):
        return len(self.times)


def extract_marker(capture: RawCapture, label: str) -> MarkerTrajectory:
    """Pull one marker's x/y/z columns out of a capture."""
    cols = []
    for axis in ("x", "y", "z"):
        name = f"{label}.{axis}"
        if name not in capture.column_labels:
            raise MarkerLookupError(
                f"marker {label!r} not in capture; available markers: "
                f"{', '.join(capture.marker_labels) or '(none)'}"
            )
        cols.append(capture.column_labels.index(name))
    pos = capture.values[:, cols].copy()
    return MarkerTrajectory(
        label=label,
        times=capture.times.copy(),
        positions=pos,
        rate=_infer_rate(capture.times),
    )


def _infer_rate(times: np.ndarray) -> float:
    if len(times) < 2:
        return 0.0
    return float(1.0 / np.median(np.diff(times)))


def fill_gaps(traj: MarkerTrajectory, max_gap: int = 10) -> MarkerTrajectory:
    """Linearly interpolate occlusion runs of at most ``max_gap`` frames.

    Runs longer than ``max_gap`` and leading/trailing runs are left absent
    and recorded in ``residual_gaps``.  Present samples are never modified.
    """
    present = traj.present
    idx = np.flatnonzero(present)
    if len(idx) < 2:
        raise InsufficientDataError(
            f"marker {traj.label!r}: need at least 2 present samples, have {len(idx)}"
        )
    pos = traj.positions.copy()
    residual: list[tuple[int, int]] = []
    if idx[0] > 0:
        residual.append((0, int(idx[0]) - 1))
    for a, b in zip(idx[:-1], idx[1:]):
        run = b - a - 1
        if run == 0:
            continue
        if run <= max_gap:
            w = (traj.times[a + 1:b] - traj.times[a]) / (traj.times[b] - traj.times[a])
            pos[a + 1:b] = pos[a] + w[:, None] * (pos[b] - pos[a])
        else:
            residual.append((int(a) + 1, int(b) - 1))
    if idx[-1] < len(traj) - 1:
        residual.append((int(idx[-1]) + 1, len(traj) - 1))
    residual.sort()
    return replace(traj, positions=pos, residual_gaps=tuple(residual))


def smooth(traj: MarkerTrajectory, window: int = 5) -> MarkerTrajectory:
    """Zero-phase moving average: forward pass then backward pass.

    Each pass is a centered mean whose half-width shrinks symmetrically at
    the endpoints, so affine signals pass through unchanged and there is no
    phase lag.  ``window`` must be odd; 1 is the identity.
    """
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be odd and >= 1, got {window}")
    if np.isnan(traj.positions).any():
        raise OrderingError(
            f"marker {traj.label!r} has absent samples; run fill_gaps before smooth"
        )
    if window == 1:
        return replace(traj)
    half = window // 2
    out = _centered_mean(traj.positions, half)            # forward pass
    out = _centered_mean(out[::-1], half)[::-1]           # backward pass
    return replace(traj, positions=out)


def _centered_mean(arr: np.ndarray, half: int) -> np.ndarray:
    n = len(arr)
    out = np.empty_like(arr)
    for i in range(n):
        h = min(half, i, n - 1 - i)
        out[i] = arr[i - h:i + h + 1].mean(axis=0)
    return out


def resample(traj: MarkerTrajectory, rate: float) -> MarkerTrajectory:
    """Linear interpolation onto a uniform grid spanning the input times."""
    if rate <= 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    if np.isnan(traj.positions).any():
        raise OrderingError(
            f"marker {traj.label!r} has absent samples; run fill_gaps before resample"
        )
    if len(traj) < 2:
        raise InsufficientDataError(f"marker {traj.label!r}: need >= 2 samples to resample")
    t0 = traj.times[0]
    n_out = int(np.floor((traj.times[-1] - t0) * rate + 1e-9)) + 1
    new_t = t0 + np.arange(n_out) / rate
    pos = np.column_stack(
        [np.interp(new_t, traj.times, traj.positions[:, c]) for c in range(3)]
    )
    return MarkerTrajectory(label=traj.label, times=new_t, positions=pos, rate=float(rate))


@dataclass(frozen=True)
class TrackerMap:
    """Assignment of marker labels to the three arm articulations."""

    articulations: dict[str, tuple[str, ...]]

    def __post_init__(self):
        arts = dict(self.articulations)
        if set(arts) != set(ARTICULATIONS):
            raise ParameterError(
                f"tracker map must define exactly {ARTICULATIONS}, got {sorted(arts)}"
            )
        seen: dict[str, str] = {}
        for art in ARTICULATIONS:
            labels = tuple(arts[art])
            if not labels:
                raise ParameterError(f"articulation {art!r} has no markers")
            for lab in labels:
                if lab in seen:
                    raise ParameterError(
                        f"marker {lab!r} assigned to both {seen[lab]!r} and {art!r}"
                    )
                seen[lab] = art
            arts[art] = labels
        object.__setattr__(self, "articulations", arts)

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerMap":
        return cls({k: tuple(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.articulations.items()}


def load_tracker_map(path) -> TrackerMap:
    with open(path, encoding="utf-8") as fh:
        return TrackerMap.from_dict(json.load(fh))


@dataclass(frozen=True)
class ArticulationTrajectory:
    """Shoulder/elbow/wrist position series on one shared uniform grid.

    ``segment_flags[i]`` is True where either segment length deviates from
    its median by more than :data:`SEGMENT_TOLERANCE` (rigidity sanity
    check; informational, never fatal).
    """

    times: np.ndarray
    shoulder: np.ndarray
    elbow: np.ndarray
    wrist: np.ndarray
    rate: float
    segment_flags: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for name in ("shoulder", "elbow", "wrist"):
            if getattr(self, name).shape != (n, 3):
                raise ParameterError(f"{name} series must be (n, 3)")
        if self.segment_flags.shape != (n,):
            raise ParameterError("segment_flags must be (n,)")
        for a in (self.times, self.shoulder, self.elbow, self.wrist, self.segment_flags):
            _readonly(np.asarray(a))

    def __len__(self):
        return len(self.times)

    def point(self, articulation: str) -> np.ndarray:
        return getattr(self, articulation)


def segment_sanity_flags(shoulder, elbow, wrist, tolerance=SEGMENT_TOLERANCE) -> np.ndarray:
    """Flag frames whose segment lengths stray >tolerance from the medians."""
    flags = np.zeros(len(shoulder), dtype=bool)
    for a, b in ((elbow, shoulder), (wrist, elbow)):
        d = np.linalg.norm(a - b, axis=1)
        med = np.median(d)
        if med > 0:
            flags |= np.abs(d - med) > tolerance * med
    return flags


def average_tracker_table(markers, tracker_map: TrackerMap) -> ArticulationTrajectory:
    """Collapse each articulation's markers to their per-frame mean position.

    Members are averaged in label-sorted order, which makes the result
    independent of the order markers are supplied in.
    """
    by_label = {m.label: m for m in markers}
    ref: MarkerTrajectory | None = None
    series = {}
    for art in ARTICULATIONS:
        labels = tracker_map.articulations[art]
        missing = [lab for lab in labels if lab not in by_label]
        if missing:
            raise MarkerLookupError(
                f"articulation {art!r}: markers {missing} listed in the tracker map "
                f"but not supplied"
            )
        if len(labels) < 2:
            warnings.warn(
                f"articulation {art!r} has a single marker; two or more are recommended",
                stacklevel=2,
            )
        members = [by_label[lab] for lab in sorted(labels)]
        for m in members:
            if ref is None:
                ref = m
                continue
            if len(m) != len(ref) or not np.allclose(m.times, ref.times, rtol=0, atol=1e-9):
                raise AlignmentError(
                    f"marker {m.label!r} is not on the same time grid as {ref.label!r}"
                )
        series[art] = np.mean([m.positions for m in members], axis=0)

    flags = segment_sanity_flags(series["shoulder"], series["elbow"], series["wrist"])
    return ArticulationTrajectory(
        times=ref.times.copy(),
        shoulder=series["shoulder"],
        elbow=series["elbow"],
        wrist=series["wrist"],
        rate=ref.rate,
        segment_flags=flags,
    )


def write_articulation_csv(art: ArticulationTrajectory, path) -> None:
    """Normalized trajectory file: time plus xyz per articulation, meters."""
    header = ["time"]
    for name in ARTICULATIONS:
        header += [f"{name}.x", f"{name}.y", f"{name}.z"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(art)):
            cells = [_fmt(art.times[i])]
            for name in ARTICULATIONS:
                cells += [_fmt(v) for v in art.point(name)[i]]
            fh.write(",".join(cells) + "\n")


def read_articulation_csv(path) -> ArticulationTrajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expect = ["time"] + [f"{n}.{a}" for n in ARTICULATIONS for a in "xyz"]
        if header != expect:
            raise CaptureFormatError(f"{path}: unexpected trajectory header {header!r}")
        data = np.array([[float(c) for c in row] for row in reader if row])
    if data.size == 0:
        raise CaptureFormatError(f"{path}: no data rows")
    times = data[:, 0]
    s, e, w = data[:, 1:4], data[:, 4:7], data[:, 7:10]
    return ArticulationTrajectory(
        times=times,
        shoulder=s,
        elbow=e,
        wrist=w,
        rate=_infer_rate(times),
        segment_flags=segment_sanity_flags(s, e, w),
    )
