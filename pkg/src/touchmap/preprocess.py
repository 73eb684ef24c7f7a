"""Spatial upsampling, masked Gaussian blur, local maxima and detection probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special

from .frames import DegenerateSequenceError, FrameSequence, SequenceStats, stats_of_values

# smallest probability handed to the tracker; keeps log-odds finite
_P_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class DetectionParams:
    sigma_k: float = 1.25
    m: float = 0.98
    blur_sigma: float = 3.0
    upsample: int = 7
    # "gather" keeps constants exact, "scatter" conserves mass; see gaussian_blur
    blur_mode: str = "gather"

    def __post_init__(self):
        if not 0 < self.m < 1:
            raise ValueError(f"m must lie in (0, 1), got {self.m}")
        if not self.blur_sigma > 0:
            raise ValueError(f"blur_sigma must be positive, got {self.blur_sigma}")
        if int(self.upsample) != self.upsample or self.upsample < 1:
            raise ValueError(f"upsample must be an integer >= 1, got {self.upsample}")
        if self.blur_mode not in ("gather", "scatter"):
            raise ValueError(f"blur_mode must be 'gather' or 'scatter', got {self.blur_mode!r}")


@dataclass(frozen=True)
class DenseSequence:
    """Upsampled frames, shape (T, height, width), NaN on masked pixels."""

    frames: np.ndarray
    mask: np.ndarray
    pitch: float
    sample_rate: float = 20.0

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    def pixel_centers(self):
        """Return (xs, ys): metric centers of pixel columns and rows."""
        xs = (np.arange(self.width) + 0.5) * self.pitch
        ys = (np.arange(self.height) + 0.5) * self.pitch
        return xs, ys

    def valid_values(self) -> np.ndarray:
        return self.frames[:, self.mask]


@dataclass(frozen=True)
class Detection:
    t: int
    x: tuple[float, float]
    value: float
    prob: float | None = None

    def with_prob(self, prob: float) -> "Detection":
        return Detection(self.t, self.x, self.value, float(prob))


def _axis_weights(n_cells: int, factor: int):
    """Source cells and weights for each output pixel along one axis.

    Pixel j sits at cell coordinate u = (2j + 1 - f) / 2f; integer arithmetic
    keeps pixels that land exactly on a cell centre at weight 0 for the
    neighbour, which matters for the validity rule at mask edges.
    """
    n_out = n_cells * factor
    num = 2 * np.arange(n_out) + 1 - factor
    den = 2 * factor
    num = np.clip(num, 0, (n_cells - 1) * den)
    lo = np.minimum(num // den, max(n_cells - 2, 0))
    rem = num - lo * den
    hi = np.minimum(lo + 1, n_cells - 1)
    w = rem / den
    return lo, hi, w


def upsample(seq: FrameSequence, factor: int) -> DenseSequence:
    """Bilinear interpolation from cell centres onto a factor-times finer grid.

    A pixel is valid only if every cell contributing non-zero weight is valid.
    Pixels beyond the outermost cell centres clamp to the nearest cell.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    layout = seq.layout
    rows, cols = layout.shape
    cells = np.nan_to_num(seq.grids(), nan=0.0)
    cmask = layout.mask

    r0, r1, wy = _axis_weights(rows, factor)
    c0, c1, wx = _axis_weights(cols, factor)

    top = cells[:, r0, :] * (1 - wy)[None, :, None] + cells[:, r1, :] * wy[None, :, None]
    dense = top[:, :, c0] * (1 - wx) + top[:, :, c1] * wx

    need_r = [(r0, wy < 1), (r1, wy > 0)]
    need_c = [(c0, wx < 1), (c1, wx > 0)]
    valid = np.ones((rows * factor, cols * factor), dtype=bool)
    for ri, rneed in need_r:
        for ci, cneed in need_c:
            needed = rneed[:, None] & cneed[None, :]
            valid &= ~needed | cmask[ri][:, ci]

    dense = np.where(valid, dense, np.nan)
    return DenseSequence(dense, valid, layout.cell_pitch / factor, seq.sample_rate)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalised Gaussian taps truncated at radius ceil(3 sigma)."""
    radius = int(math.ceil(3 * sigma))
    k = np.arange(-radius, radius + 1)
    g = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return g / g.sum()


def _smooth(arr, kernel):
    """Separable zero-padded convolution over the last two axes."""
    out = ndimage.correlate1d(arr, kernel, axis=-1, mode="constant", cval=0.0)
    return ndimage.correlate1d(out, kernel, axis=-2, mode="constant", cval=0.0)


def gaussian_blur(dense: DenseSequence, sigma: float, mode: str = "gather") -> DenseSequence:
    """Mask-aware 2D Gaussian blur.

    ``gather`` divides each output by the kernel weight over its valid
    neighbours (normalised convolution): constants are preserved exactly.
    ``scatter`` divides each source pixel's contribution by the kernel weight
    over the valid pixels it reaches: total mass over the mask is preserved.
    No single linear kernel does both near a mask edge.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kernel = gaussian_kernel_1d(sigma)
    m = dense.mask.astype(float)
    values = np.where(dense.mask, dense.frames, 0.0)
    support = _smooth(m, kernel)
    if mode == "gather":
        blurred = _smooth(values, kernel)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = blurred / support
    elif mode == "scatter":
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(dense.mask, values / support, 0.0)
        out = _smooth(share, kernel)
    else:
        raise ValueError(f"unknown blur mode {mode!r}")
    out = np.where(dense.mask, out, np.nan)
    return DenseSequence(out, dense.mask, dense.pitch, dense.sample_rate)


def normal_cdf(x):
    """Standard normal CDF (scipy's ndtr is erf-based, ~1 ulp)."""
    return special.ndtr(x)


def detection_probability(value, stats: SequenceStats, params: DetectionParams = DetectionParams()):
    """Phi((value - mean)/stdev - sigma_k) * m, floored above zero."""
    if not stats.stdev > 0:
        raise DegenerateSequenceError("zero standard deviation: every value is identical")
    z = (np.asarray(value, dtype=float) - stats.mean) / stats.stdev
    p = np.maximum(normal_cdf(z - params.sigma_k) * params.m, _P_FLOOR)
    return float(p) if np.ndim(p) == 0 else p


def local_maxima_mask(frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Valid pixels that are >= every valid pixel in their 8-neighbourhood."""
    v = np.where(mask, frame, -np.inf)
    padded = np.pad(v, 1, constant_values=-np.inf)
    h, w = v.shape
    keep = mask.copy()
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            keep &= v >= padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
    return keep


def find_local_maxima(dense: DenseSequence) -> list[Detection]:
    xs, ys = dense.pixel_centers()
    out = []
    for t, frame in enumerate(dense.frames):
        for r, c in np.argwhere(local_maxima_mask(frame, dense.mask)).tolist():
            out.append(Detection(t, (float(xs[c]), float(ys[r])), float(frame[r, c])))
    return out


def preprocess(seq: FrameSequence, params: DetectionParams = DetectionParams()) -> DenseSequence:
    dense = upsample(seq, params.upsample)
    return gaussian_blur(dense, params.blur_sigma, params.blur_mode)


def build_detections(seq: FrameSequence, params: DetectionParams = DetectionParams()):
    """upsample -> blur -> stats -> maxima -> probability.

    Statistics are taken over the preprocessed frames the maxima come from.
    """
    dense = preprocess(seq, params)
    values = dense.valid_values()
    if values.size == 0:
        raise DegenerateSequenceError("no valid pixels after upsampling")
    stats = stats_of_values(values)
    if not stats.stdev > 0:
        raise DegenerateSequenceError("zero standard deviation: every value is identical")
    peaks = find_local_maxima(dense)
    probs = detection_probability(np.array([d.value for d in peaks]), stats, params)
    dets = [d.with_prob(p) for d, p in zip(peaks, np.atleast_1d(probs).tolist())]
    return dense, dets
