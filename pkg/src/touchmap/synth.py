"""Seeded synthetic touch gestures for tests and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import FrameSequence, SensorLayout, preset_layout

KINDS = ("stroke", "tap", "squeeze", "hold")


@dataclass(frozen=True)
class SynthParams:
    """Gesture geometry in cell units; positions are cell-centre coordinates
    (column c, row r) where integer values sit on cell centres."""

    n_frames: int = 20
    rows: int = 4
    cols: int = 8
    layout: str | None = None  # preset name; overrides rows/cols
    amplitude: float = 1.5  # psi at the bump apex
    width: float = 1.0  # bump standard deviation in cells
    row: float = 1.0
    start_col: float = 1.5
    velocity: float = 0.25  # cells per frame (stroke)
    col: float = 2.0  # tap / hold position
    onset: int = 2  # first frame of a tap
    duration: int = 2  # tap length in frames
    col_a: float = 1.0  # squeeze bump columns
    col_b: float = 5.0
    noise: float = 0.0  # psi, i.i.d. Gaussian per cell and frame
    rate: float = 20.0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.duration < 0 or self.onset < 0:
            raise ValueError("tap onset and duration must be >= 0")


def _bump(layout: SensorLayout, col: float, row: float, amplitude: float, width: float):
    rr, cc = np.indices(layout.shape, dtype=float)
    g = amplitude * np.exp(-((cc - col) ** 2 + (rr - row) ** 2) / (2.0 * width ** 2))
    return np.where(layout.mask, g, 0.0)


def synthesize(kind: str, params: SynthParams = SynthParams(), seed: int = 0) -> FrameSequence:
    """stroke: bump moving along +col at constant velocity; tap: brief
    stationary bump; squeeze: two simultaneous bumps at ``col_a``/``col_b``;
    hold: sustained stationary bump."""
    if kind not in KINDS:
        raise ValueError(f"unknown gesture {kind!r}; choose from {KINDS}")
    layout = preset_layout(params.layout) if params.layout else SensorLayout.rectangle(params.rows, params.cols)
    p = params
    grids = np.zeros((p.n_frames,) + layout.shape)
    for t in range(p.n_frames):
        if kind == "stroke":
            grids[t] = _bump(layout, p.start_col + p.velocity * t, p.row, p.amplitude, p.width)
        elif kind == "tap":
            if p.onset <= t < p.onset + p.duration:
                grids[t] = _bump(layout, p.col, p.row, p.amplitude, p.width)
        elif kind == "squeeze":
            grids[t] = (_bump(layout, p.col_a, p.row, p.amplitude, p.width)
                        + _bump(layout, p.col_b, p.row, p.amplitude, p.width))
        else:
            grids[t] = _bump(layout, p.col, p.row, p.amplitude, p.width)
    if p.noise > 0:
        rng = np.random.default_rng(seed)
        grids = grids + rng.normal(0.0, p.noise, size=grids.shape)
    return FrameSequence.from_grids(layout, grids, p.rate)
