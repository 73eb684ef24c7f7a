"""Turn selected trajectories into per-actuator command signals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .frames import SENSOR_RANGE_PSI
from .preprocess import DenseSequence
from .workspace import CONTAIN_TOL, SelectionResult, WorkspaceArray


@dataclass(frozen=True)
class RenderParams:
    cutoff: float = 4.0
    order: int = 5
    spike_fraction: float = 1.0 / 8.0
    output_rate: float | None = None  # None keeps the input rate
    pressure_range: tuple[float, float] = SENSOR_RANGE_PSI
    zero_phase: bool = False

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order}")
        if not 0 < self.spike_fraction < 1:
            raise ValueError(f"spike_fraction must lie in (0, 1), got {self.spike_fraction}")
        if self.output_rate is not None and not self.output_rate > 0:
            raise ValueError(f"output_rate must be positive, got {self.output_rate}")
        lo, hi = self.pressure_range
        if not hi > lo:
            raise ValueError(f"pressure_range needs max > min, got {self.pressure_range}")

    def check_rate(self, rate: float) -> None:
        if not self.cutoff < rate / 2.0:
            raise ValueError(f"cutoff {self.cutoff} Hz is not below Nyquist ({rate / 2.0} Hz)")


@dataclass(frozen=True)
class ActuatorSignal:
    """Commanded intensities in [0, 1], ``channels`` shaped (rows, cols, T)."""

    channels: np.ndarray
    sample_rate: float
    source_pressure_range: tuple[float, float] = SENSOR_RANGE_PSI

    @property
    def grid(self) -> tuple[int, int]:
        return self.channels.shape[:2]

    def __len__(self):
        return self.channels.shape[-1]


# ---------------------------------------------------------------- assembly


def workspace_pixel_masks(dense: DenseSequence, arr: WorkspaceArray, transform) -> dict:
    """Valid pixels inside each transformed workspace."""
    xs, ys = dense.pixel_centers()
    gx, gy = np.meshgrid(xs, ys)
    out = {}
    for ws, (cx, cy) in zip(arr.workspaces, transform.apply(arr.centers)):
        inside = np.sqrt((gx - cx) ** 2 + (gy - cy) ** 2) <= ws.radius + CONTAIN_TOL
        out[ws.index] = inside & dense.mask
    return out


def assemble(selection: SelectionResult, trajs, dense: DenseSequence, arr: WorkspaceArray) -> np.ndarray:
    """Raw per-actuator series in psi, shape (rows, cols, T).

    An actuator assigned a trajectory point renders that point's value.  A
    row-wise neighbour of such an actuator that renders no trajectory itself
    shows the maximum blurred intensity inside its own workspace.
    """
    by_id = {t.id: t for t in trajs}
    n_t = dense.frames.shape[0]
    out = np.zeros((arr.rows, arr.cols, n_t))
    rendering: dict[int, dict] = {}
    for (tid, t), ws in selection.assignment.items():
        if tid not in by_id:
            raise ValueError(f"assignment references unknown trajectory {tid}")
        det = by_id[tid].at(t)
        if det is None:
            raise ValueError(f"trajectory {tid} has no point at t={t}")
        if not 0 <= t < n_t:
            raise ValueError(f"assignment time {t} outside the {n_t}-frame sequence")
        rendering.setdefault(t, {})[tuple(ws)] = det.value
    if not rendering:
        return out
    pix = workspace_pixel_masks(dense, arr, selection.transform)
    for t in sorted(rendering):
        active = rendering[t]
        for (r, c), value in active.items():
            out[r, c, t] = value
        fill = set()
        for r, c in active:
            for nc in (c - 1, c + 1):
                if 0 <= nc < arr.cols and (r, nc) not in active:
                    fill.add((r, nc))
        for r, c in sorted(fill):
            region = pix[(r, c)]
            out[r, c, t] = float(dense.frames[t][region].max()) if region.any() else 0.0
    return out


# ----------------------------------------------------------- post-processing


def despike(series, fraction: float = 1.0 / 8.0) -> np.ndarray:
    """Flatten single-sample rise-and-drop spikes.

    One left-to-right pass over the original values: x[i] is replaced by the
    mean of its neighbours when it exceeds both by at least ``fraction`` of
    the series range.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    x = np.asarray(series, dtype=float)
    out = x.copy()
    if x.size < 3:
        return out
    thr = fraction * (x.max() - x.min())
    if thr <= 0:
        return out
    mid = x[1:-1]
    spike = (mid - x[:-2] >= thr) & (mid - x[2:] >= thr)
    out[1:-1][spike] = 0.5 * (x[:-2][spike] + x[2:][spike])
    return out


def butterworth_sos(order: int, cutoff: float, rate: float) -> np.ndarray:
    """Digital Butterworth lowpass as second-order sections.

    Bilinear transform with the analog cutoff prewarped so the -3 dB point
    lands exactly on ``cutoff``.  Odd orders end with a first-order section
    (stored with zero second-order coefficients).  Rows are
    [b0, b1, b2, 1, a1, a2].
    """
    if int(order) != order or order < 1:
        raise ValueError(f"order must be an integer >= 1, got {order}")
    if not 0 < cutoff < rate / 2.0:
        raise ValueError(f"need 0 < cutoff < rate/2, got cutoff={cutoff}, rate={rate}")
    order = int(order)
    w = math.tan(math.pi * cutoff / rate)  # prewarped cutoff with s = (z-1)/(z+1)
    sections = []
    for k in range(order // 2):
        theta = math.pi * (2 * k + 1) / (2 * order)
        # conjugate pole pair at w * (-sin(theta) +/- j cos(theta))
        two_sigma = 2.0 * w * math.sin(theta)
        w2 = w * w
        a0 = 1.0 + two_sigma + w2
        a1 = 2.0 * (w2 - 1.0)
        a2 = 1.0 - two_sigma + w2
        sections.append([w2 / a0, 2 * w2 / a0, w2 / a0, 1.0, a1 / a0, a2 / a0])
    if order % 2:
        a0 = 1.0 + w
        sections.append([w / a0, w / a0, 0.0, 1.0, (w - 1.0) / a0, 0.0])
    return np.array(sections)


def sos_response(sos: np.ndarray, freqs, rate: float) -> np.ndarray:
    """Complex frequency response at ``freqs`` (Hz)."""
    z = np.exp(1j * 2.0 * np.pi * np.asarray(freqs, dtype=float) / rate)
    zi = 1.0 / z
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * zi + b2 * zi * zi) / (a0 + a1 * zi + a2 * zi * zi)
    return h


def sos_poles(sos: np.ndarray) -> np.ndarray:
    poles = []
    for _, _, _, a0, a1, a2 in sos:
        poles.extend(np.roots([a0, a1, a2]) if a2 != 0 else np.roots([a0, a1]))
    return np.array(poles)


def butterworth_lowpass(series, rate: float, cutoff: float = 4.0, order: int = 5,
                        zero_phase: bool = False) -> np.ndarray:
    """Causal Butterworth lowpass from zero initial state."""
    sos = butterworth_sos(order, cutoff, rate)
    x = np.asarray(series, dtype=float)
    if zero_phase:
        return sps.sosfiltfilt(sos, x)
    return sps.sosfilt(sos, x)


def scale_output(series, pressure_range=SENSOR_RANGE_PSI) -> np.ndarray:
    """Linear map of [min, max] psi onto [0, 1], clamped."""
    lo, hi = pressure_range
    if not hi > lo:
        raise ValueError(f"degenerate pressure range {pressure_range}")
    return np.clip((np.asarray(series, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


def resample_linear(series, rate: float, new_rate: float) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if new_rate == rate or x.size == 0:
        return x.copy()
    n_out = int(math.floor((x.size - 1) * new_rate / rate + 1e-9)) + 1
    t_out = np.arange(n_out) / new_rate
    return np.interp(t_out, np.arange(x.size) / rate, x)


def postprocess(raw, rate: float, params: RenderParams = RenderParams()) -> np.ndarray:
    """despike -> filter -> scale -> optional resample, channel by channel."""
    params.check_rate(rate)
    raw = np.asarray(raw, dtype=float)
    out_rate = params.output_rate or rate
    flat = raw.reshape(-1, raw.shape[-1])
    chans = []
    for series in flat:
        y = despike(series, params.spike_fraction)
        y = butterworth_lowpass(y, rate, params.cutoff, params.order, params.zero_phase)
        y = scale_output(y, params.pressure_range)
        chans.append(resample_linear(y, rate, out_rate))
    return np.array(chans).reshape(raw.shape[:-1] + (-1,))


def render(selection: SelectionResult, trajs, dense: DenseSequence, arr: WorkspaceArray,
           params: RenderParams = RenderParams()) -> ActuatorSignal:
    params.check_rate(dense.sample_rate)
    raw = assemble(selection, trajs, dense, arr)
    chans = postprocess(raw, dense.sample_rate, params)
    return ActuatorSignal(chans, params.output_rate or dense.sample_rate,
                          tuple(params.pressure_range))


def onset_times(channels, rate: float, level: float = 0.5) -> np.ndarray:
    """First time (s) each channel reaches ``level`` of its own peak, linearly
    interpolated between samples. NaN for channels that never rise above 0."""
    x = np.asarray(channels, dtype=float)
    flat = x.reshape(-1, x.shape[-1])
    out = np.full(flat.shape[0], np.nan)
    for k, s in enumerate(flat):
        peak = s.max(initial=0.0)
        if peak <= 0:
            continue
        thr = level * peak
        i = int(np.argmax(s >= thr))
        if i == 0:
            out[k] = 0.0
        else:
            out[k] = (i - 1 + (thr - s[i - 1]) / (s[i] - s[i - 1])) / rate
    return out.reshape(x.shape[:-1])


# ------------------------------------------------------------------ export


def dump_signal_csv(sig: ActuatorSignal) -> str:
    rows, cols = sig.grid
    lo, hi = sig.source_pressure_range
    lines = [f"# rows={rows} cols={cols} rate={sig.sample_rate:.9g} range={lo:.9g},{hi:.9g}"]
    lines.append(",".join(["t"] + [f"ch_{r}_{c}" for r in range(rows) for c in range(cols)]))
    flat = sig.channels.reshape(rows * cols, -1)
    for t in range(flat.shape[1]):
        lines.append(",".join([str(t)] + [f"{v:.9g}" for v in flat[:, t].tolist()]))
    return "\n".join(lines) + "\n"


def save_signal_csv(sig: ActuatorSignal, path) -> None:
    Path(path).write_text(dump_signal_csv(sig))


def load_signal_csv(path) -> ActuatorSignal:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# rows=.. cols=.. rate=.. range=..' header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split())
    rows, cols = int(meta["rows"]), int(meta["cols"])
    lo, hi = (float(v) for v in meta["range"].split(","))
    body = lines[2:]
    data = np.array([[float(v) for v in ln.split(",")[1:]] for ln in body]).reshape(len(body), rows * cols)
    return ActuatorSignal(data.T.reshape(rows, cols, -1), float(meta["rate"]), (lo, hi))
