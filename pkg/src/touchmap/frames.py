"""Pressure-frame sequences on masked (non-rectangular) sensor layouts.

A layout is a row of rectangular segments laid side by side along the column
axis (e.g. upper arm then forearm).  Cells outside every segment are masked
and carry no value at all.  Frame values are stored as a flat array over the
valid cells in row-major order of the bounding rectangle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_PITCH_MM = 25.4
DEFAULT_RATE_HZ = 20.0
SENSOR_RANGE_PSI = (0.0, 2.96)


class SequenceError(ValueError):
    """Base class for frame-sequence ingestion failures."""


class FormatError(SequenceError):
    """Unparseable file content; message carries line/record context."""


class LayoutMismatchError(SequenceError):
    """Frame values do not match the declared layout."""


class NonFiniteValueError(SequenceError):
    pass


class DegenerateSequenceError(ValueError):
    """Sequence has no spread (empty, or zero standard deviation)."""


@dataclass(frozen=True)
class Segment:
    name: str
    rows: int
    cols: int
    row_offset: int = 0


@dataclass(frozen=True)
class SensorLayout:
    segments: tuple[Segment, ...]
    cell_pitch: float = DEFAULT_PITCH_MM
    mask: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("layout needs at least one segment")
        if not self.cell_pitch > 0:
            raise ValueError(f"cell_pitch must be positive, got {self.cell_pitch}")
        for seg in self.segments:
            if seg.rows < 1 or seg.cols < 1 or seg.row_offset < 0:
                raise ValueError(f"bad segment {seg}")
        height = max(s.row_offset + s.rows for s in self.segments)
        width = sum(s.cols for s in self.segments)
        mask = np.zeros((height, width), dtype=bool)
        col = 0
        for seg in self.segments:
            mask[seg.row_offset:seg.row_offset + seg.rows, col:col + seg.cols] = True
            col += seg.cols
        mask.setflags(write=False)
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "mask", mask)

    @classmethod
    def rectangle(cls, rows, cols, cell_pitch=DEFAULT_PITCH_MM, name="grid"):
        return cls((Segment(name, rows, cols),), cell_pitch)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    def cell_indices(self) -> np.ndarray:
        """(n_cells, 2) array of (row, col) for valid cells, row-major."""
        return np.argwhere(self.mask)

    def cell_centers(self) -> np.ndarray:
        """(n_cells, 2) array of metric (x, y) centers in mm."""
        rc = self.cell_indices()
        return np.column_stack([(rc[:, 1] + 0.5), (rc[:, 0] + 0.5)]) * self.cell_pitch

    def __eq__(self, other):
        if not isinstance(other, SensorLayout):
            return NotImplemented
        return self.segments == other.segments and self.cell_pitch == other.cell_pitch

    def __hash__(self):
        return hash((self.segments, self.cell_pitch))


# Sleeve layouts: the small sleeve is 8x10 (upper arm) + 6x8 (forearm).  The
# large sleeve adds a 14-cell elbow band to reach 142 cells.
LAYOUT_PRESETS = {
    "small_sleeve": (Segment("upper", 8, 10), Segment("lower", 6, 8, 1)),
    "large_sleeve": (
        Segment("upper", 8, 10),
        Segment("elbow", 7, 2, 0),
        Segment("lower", 6, 8, 1),
    ),
}


def preset_layout(name: str, cell_pitch: float = DEFAULT_PITCH_MM) -> SensorLayout:
    try:
        return SensorLayout(LAYOUT_PRESETS[name], cell_pitch)
    except KeyError:
        raise ValueError(f"unknown layout preset {name!r}; have {sorted(LAYOUT_PRESETS)}") from None


@dataclass(frozen=True)
class Frame:
    time_index: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FrameSequence:
    layout: SensorLayout
    frames: tuple[Frame, ...]
    sample_rate: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self):
        return len(self.frames)

    @classmethod
    def from_grids(cls, layout: SensorLayout, grids, sample_rate=DEFAULT_RATE_HZ):
        """Build from a (T, rows, cols) array; masked entries are dropped."""
        grids = np.asarray(grids, dtype=float)
        if grids.ndim != 3 or grids.shape[1:] != layout.shape:
            raise LayoutMismatchError(
                f"grid shape {grids.shape[1:]} != layout shape {layout.shape}"
            )
        frames = tuple(Frame(t, g[layout.mask]) for t, g in enumerate(grids))
        return cls(layout, frames, sample_rate)

    def grids(self) -> np.ndarray:
        """(T, rows, cols) array with NaN on masked cells."""
        out = np.full((len(self.frames),) + self.layout.shape, np.nan)
        for k, frame in enumerate(self.frames):
            out[k][self.layout.mask] = frame.values
        return out


@dataclass(frozen=True)
class SequenceStats:
    mean: float
    stdev: float
    count: int


def stats_of_values(values) -> SequenceStats:
    """Mean and population stdev via exactly-rounded two-pass sums.

    Using ``math.fsum`` makes the result independent of value order.
    """
    flat = np.asarray(values, dtype=float).ravel()
    n = flat.size
    if n == 0:
        raise DegenerateSequenceError("no values")
    mean = math.fsum(flat.tolist()) / n
    dev = flat - mean
    var = math.fsum((dev * dev).tolist()) / n
    return SequenceStats(mean, math.sqrt(var), n)


def sequence_stats(seq: FrameSequence) -> SequenceStats:
    if not seq.frames or seq.layout.n_cells == 0:
        raise DegenerateSequenceError("sequence has no frames or no valid cells")
    return stats_of_values(np.concatenate([f.values for f in seq.frames]))


def validate_sequence(seq: FrameSequence) -> list[str]:
    violations = []
    if not seq.sample_rate > 0:
        violations.append(f"sample_rate must be positive, got {seq.sample_rate}")
    n = seq.layout.n_cells
    for k, frame in enumerate(seq.frames):
        if frame.time_index != k:
            violations.append(
                f"non-consecutive time index: frame {k} has t={frame.time_index}"
            )
        if frame.values.shape != (n,):
            violations.append(
                f"frame t={frame.time_index}: {frame.values.size} values for {n} valid cells"
            )
        elif not np.all(np.isfinite(frame.values)):
            bad = int(np.count_nonzero(~np.isfinite(frame.values)))
            violations.append(f"non-finite value: frame t={frame.time_index} has {bad}")
    return violations


def _check(seq: FrameSequence) -> FrameSequence:
    problems = validate_sequence(seq)
    for p in problems:
        if p.startswith("non-finite"):
            raise NonFiniteValueError(p)
    if problems:
        raise LayoutMismatchError("; ".join(problems))
    return seq


# ---------------------------------------------------------------- file I/O


def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return "json"
    return "csv"


def load_sequence(path, format: str | None = None) -> FrameSequence:
    """Read and validate a frame sequence from CSV or JSON."""
    fmt = _infer_format(path, format)
    text = Path(path).read_text()
    if fmt == "json":
        return _check(_parse_json(text))
    return _check(_parse_csv(text))


def save_sequence(seq: FrameSequence, path, format: str | None = None) -> None:
    fmt = _infer_format(path, format)
    text = dump_json(seq) if fmt == "json" else dump_csv(seq)
    Path(path).write_text(text)


def _parse_float(token, where):
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"{where}: not a number: {token!r}") from None
    return value


def _parse_int(token, where):
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"{where}: not an integer: {token!r}") from None


def _assemble(layout, rate, records, where_of):
    """records: list of (t, row, col, psi) -> FrameSequence.

    ``where_of(i)`` names record i for error messages.
    """
    height, width = layout.shape
    index = -np.ones(layout.shape, dtype=int)
    index[layout.mask] = np.arange(layout.n_cells)
    by_t: dict[int, dict[int, float]] = {}
    for i, (t, r, c, v) in enumerate(records):
        if t < 0:
            raise FormatError(f"{where_of(i)}: negative time index {t}")
        if not (0 <= r < height and 0 <= c < width) or not layout.mask[r, c]:
            raise LayoutMismatchError(f"{where_of(i)}: cell ({r}, {c}) is not a valid layout cell")
        if not math.isfinite(v):
            raise NonFiniteValueError(f"{where_of(i)}: non-finite value {v}")
        cells = by_t.setdefault(t, {})
        k = int(index[r, c])
        if k in cells:
            raise LayoutMismatchError(f"{where_of(i)}: duplicate cell ({r}, {c}) at t={t}")
        cells[k] = v
    frames = []
    for t in sorted(by_t):
        cells = by_t[t]
        if len(cells) != layout.n_cells:
            raise LayoutMismatchError(
                f"frame t={t}: {len(cells)} cells given, layout has {layout.n_cells}"
            )
        frames.append(Frame(t, np.array([cells[k] for k in range(layout.n_cells)])))
    return FrameSequence(layout, tuple(frames), rate)


def _parse_csv(text: str) -> FrameSequence:
    segments = []
    pitch = DEFAULT_PITCH_MM
    rate = DEFAULT_RATE_HZ
    records = []
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        where = f"line {lineno}"
        if line.startswith("#"):
            parts = line[1:].split()
            if not parts:
                continue
            key = parts[0]
            if key == "layout":
                if len(parts) not in (4, 5):
                    raise FormatError(f"{where}: expected '#layout <name> <rows> <cols> [row_offset]'")
                offset = _parse_int(parts[4], where) if len(parts) == 5 else 0
                segments.append(Segment(parts[1], _parse_int(parts[2], where),
                                        _parse_int(parts[3], where), offset))
            elif key == "pitch":
                pitch = _parse_float(parts[1], where)
            elif key == "rate":
                rate = _parse_float(parts[1], where)
            # other comments are ignored
            continue
        if line.replace(" ", "") == "t,row,col,psi":
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise FormatError(f"{where}: expected 4 fields t,row,col,psi, got {len(fields)}")
        records.append((_parse_int(fields[0], where), _parse_int(fields[1], where),
                        _parse_int(fields[2], where), _parse_float(fields[3], where)))
        lines.append(lineno)
    if not segments:
        raise FormatError("missing '#layout' header")
    try:
        layout = SensorLayout(tuple(segments), pitch)
    except ValueError as exc:
        raise FormatError(f"bad layout header: {exc}") from None
    return _assemble(layout, rate, records, lambda i: f"line {lines[i]}")


def _parse_json(text: str) -> FrameSequence:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {exc.lineno}: {exc.msg}") from None
    try:
        lay = doc["layout"]
        segments = tuple(
            Segment(s["name"], int(s["rows"]), int(s["cols"]), int(s.get("row_offset", 0)))
            for s in lay["segments"]
        )
        layout = SensorLayout(segments, float(lay.get("pitch", DEFAULT_PITCH_MM)))
        rate = float(doc.get("rate", DEFAULT_RATE_HZ))
        records, where = [], []
        for fi, fr in enumerate(doc["frames"]):
            t = int(fr["t"])
            for ci, cell in enumerate(fr["cells"]):
                r, c, v = cell
                records.append((t, int(r), int(c), float(v)))
                where.append(f"frames[{fi}].cells[{ci}]")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SequenceError):
            raise
        raise FormatError(f"malformed JSON sequence: {exc!r}") from None
    return _assemble(layout, rate, records, lambda i: where[i])


def dump_csv(seq: FrameSequence) -> str:
    out = []
    for seg in seq.layout.segments:
        out.append(f"#layout {seg.name} {seg.rows} {seg.cols} {seg.row_offset}")
    out.append(f"#pitch {seq.layout.cell_pitch!r}")
    out.append(f"#rate {float(seq.sample_rate)!r}")
    out.append("t,row,col,psi")
    rc = seq.layout.cell_indices()
    for frame in seq.frames:
        t = frame.time_index
        for (r, c), v in zip(rc.tolist(), frame.values.tolist()):
            out.append(f"{t},{r},{c},{v!r}")
    return "\n".join(out) + "\n"


def dump_json(seq: FrameSequence) -> str:
    rc = seq.layout.cell_indices().tolist()
    doc = {
        "layout": {
            "segments": [
                {"name": s.name, "rows": s.rows, "cols": s.cols, "row_offset": s.row_offset}
                for s in seq.layout.segments
            ],
            "pitch": seq.layout.cell_pitch,
        },
        "rate": float(seq.sample_rate),
        "frames": [
            {"t": f.time_index,
             "cells": [[r, c, v] for (r, c), v in zip(rc, f.values.tolist())]}
            for f in seq.frames
        ],
    }
    return json.dumps(doc, indent=1) + "\n"
