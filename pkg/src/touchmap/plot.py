"""Static SVG views of stage artifacts (frames, tracks, placement, signals).

Plain string output with fixed number formatting so files are byte-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import artifacts
from .frames import FrameSequence, load_sequence
from .render import ActuatorSignal, load_signal_csv
from .tracking import Trajectory

SCALE = 2.0  # svg px per mm
MARGIN = 20.0
PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _heat(v: float, lo: float, hi: float) -> str:
    """White-to-red ramp over [lo, hi]."""
    a = 0.0 if hi <= lo else min(max((v - lo) / (hi - lo), 0.0), 1.0)
    g = int(round(255 * (1.0 - a)))
    return f"#ff{g:02x}{g:02x}"


class _Canvas:
    def __init__(self, width_mm, height_mm, x0=0.0, y0=0.0):
        self.x0, self.y0 = x0, y0
        self.w = width_mm * SCALE + 2 * MARGIN
        self.h = height_mm * SCALE + 2 * MARGIN
        self.items: list[str] = []

    def px(self, x, y):
        return (x - self.x0) * SCALE + MARGIN, (y - self.y0) * SCALE + MARGIN

    def add(self, item: str):
        self.items.append(item)

    def grid(self, width_mm, height_mm, pitch):
        nx = int(np.ceil(width_mm / pitch - 1e-9))
        ny = int(np.ceil(height_mm / pitch - 1e-9))
        for i in range(nx + 1):
            x0, y0 = self.px(self.x0 + i * pitch, self.y0)
            x1, y1 = self.px(self.x0 + i * pitch, self.y0 + ny * pitch)
            self.add(f'<line class="grid" x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="#ccc"/>')
        for j in range(ny + 1):
            x0, y0 = self.px(self.x0, self.y0 + j * pitch)
            x1, y1 = self.px(self.x0 + nx * pitch, self.y0 + j * pitch)
            self.add(f'<line class="grid" x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="#ccc"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.w)}" '
                f'height="{_f(self.h)}" viewBox="0 0 {_f(self.w)} {_f(self.h)}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def _frame_cells(canvas: _Canvas, seq: FrameSequence, t: int, lo: float, hi: float):
    pitch = seq.layout.cell_pitch
    rc = seq.layout.cell_indices()
    for (r, c), v in zip(rc.tolist(), seq.frames[t].values.tolist()):
        x, y = canvas.px(c * pitch, r * pitch)
        canvas.add(f'<rect class="cell" x="{_f(x)}" y="{_f(y)}" width="{_f(pitch * SCALE)}" '
                   f'height="{_f(pitch * SCALE)}" fill="{_heat(v, lo, hi)}" stroke="#999"/>')


def svg_sequence(seq: FrameSequence, frame: int | None = None) -> str:
    """Heat map of one frame (default: the frame with the largest value)."""
    grids = seq.grids()
    if frame is None:
        frame = int(np.nanargmax(np.nanmax(grids.reshape(len(seq), -1), axis=1)))
    h, w = seq.layout.shape
    pitch = seq.layout.cell_pitch
    canvas = _Canvas(w * pitch, h * pitch)
    vals = seq.frames[frame].values
    _frame_cells(canvas, seq, frame, float(vals.min()), float(vals.max()))
    return canvas.render()


def _extent(points, seq):
    if seq is not None:
        h, w = seq.layout.shape
        return 0.0, 0.0, w * seq.layout.cell_pitch, h * seq.layout.cell_pitch
    if len(points):
        pts = np.asarray(points)
        lo = np.floor(pts.min(axis=0) / 25.4) * 25.4
        hi = np.ceil(pts.max(axis=0) / 25.4 + 1e-9) * 25.4
        return lo[0], lo[1], max(hi[0] - lo[0], 25.4), max(hi[1] - lo[1], 25.4)
    return 0.0, 0.0, 8 * 25.4, 4 * 25.4


def svg_trajectories(trajs, seq: FrameSequence | None = None) -> str:
    """One polyline per trajectory over the frame grid."""
    points = [d.x for tr in trajs for d in tr.detections]
    x0, y0, w, h = _extent(points, seq)
    canvas = _Canvas(w, h, x0, y0)
    canvas.grid(w, h, seq.layout.cell_pitch if seq else 25.4)
    for k, tr in enumerate(trajs):
        pts = " ".join(f"{_f(px)},{_f(py)}" for px, py in (canvas.px(*d.x) for d in tr.detections))
        color = PALETTE[k % len(PALETTE)]
        canvas.add(f'<polyline class="traj" data-id="{tr.id}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="2"/>')
    return canvas.render()


def svg_selection(doc: dict, seq: FrameSequence | None = None) -> str:
    """Workspace circles at their placed centres, filled by assignment count."""
    ws = doc["workspaces"]
    centers = np.array([w["center"] for w in ws], dtype=float)
    radius = max(w["radius"] for w in ws)
    if seq is not None:
        x0, y0, w, h = _extent([], seq)
        lo = np.minimum(centers.min(axis=0) - radius, [x0, y0])
        hi = np.maximum(centers.max(axis=0) + radius, [x0 + w, y0 + h])
    else:
        lo = centers.min(axis=0) - radius
        hi = centers.max(axis=0) + radius
    canvas = _Canvas(hi[0] - lo[0], hi[1] - lo[1], lo[0], lo[1])
    if seq is not None:
        canvas.grid(w, h, seq.layout.cell_pitch)
    counts: dict = {}
    for a in doc["assignments"]:
        counts[(a["row"], a["col"])] = counts.get((a["row"], a["col"]), 0) + 1
    top = max(counts.values(), default=0)
    for w_ in ws:
        cx, cy = canvas.px(*w_["center"])
        fill = _heat(counts.get((w_["row"], w_["col"]), 0), 0, top)
        canvas.add(f'<circle class="workspace" data-index="{w_["row"]},{w_["col"]}" cx="{_f(cx)}" '
                   f'cy="{_f(cy)}" r="{_f(w_["radius"] * SCALE)}" fill="{fill}" stroke="#333"/>')
    return canvas.render()


def svg_signal(sig: ActuatorSignal) -> str:
    """Grid of per-actuator traces with a bar for each channel's peak."""
    rows, cols = sig.grid
    cw, ch = 80.0, 50.0  # mm-equivalent panel size
    canvas = _Canvas(cols * cw, rows * ch)
    n = sig.channels.shape[-1]
    for r in range(rows):
        for c in range(cols):
            series = sig.channels[r, c]
            bx, by = canvas.px(c * cw, r * ch)
            pw, ph = (cw - 6) * SCALE, (ch - 6) * SCALE
            peak = float(series.max()) if n else 0.0
            canvas.add(f'<rect class="bar" x="{_f(bx)}" y="{_f(by + ph * (1 - peak))}" width="{_f(6.0)}" '
                       f'height="{_f(ph * peak)}" fill="#1f77b4"/>')
            if n > 1:
                xs = bx + 10 + np.arange(n) / (n - 1) * (pw - 10)
                ys = by + ph * (1 - series)
                pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
                canvas.add(f'<polyline class="channel" data-index="{r},{c}" points="{pts}" '
                           f'fill="none" stroke="#333"/>')
    return canvas.render()


def plot_artifact(path, out, frames=None) -> str:
    """Detect the artifact type from its content and write an SVG."""
    path = Path(path)
    seq = load_sequence(frames) if frames else None
    text = path.read_text()
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    if path.suffix.lower() == ".json" and '"workspaces"' in text:
        svg = svg_selection(json.loads(text), seq)
    elif first.replace(" ", "") == artifacts.TRAJECTORY_HEADER:
        svg = svg_trajectories(artifacts.load_trajectories(path), seq)
    elif first.replace(" ", "") == artifacts.DETECTION_HEADER:
        dets = artifacts.load_detections(path)
        svg = svg_trajectories([Trajectory(k, (d,)) for k, d in enumerate(dets)], seq)
    elif first.startswith("# rows="):
        svg = svg_signal(load_signal_csv(path))
    elif first.startswith("#layout") or path.suffix.lower() == ".json":
        svg = svg_sequence(load_sequence(path))
    else:
        raise artifacts.ArtifactError(f"{path}: unrecognised artifact")
    Path(out).write_text(svg)
    return svg
