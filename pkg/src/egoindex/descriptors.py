"""Per-segment descriptors and observation vector assembly."""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np
from scipy.fft import dctn

from .errors import EmptyConfig, EmptySegment, ImageTooSmall, MissingDescriptor

CANONICAL_ORDER = ("cut", "tpe", "cld", "loc")

# JPEG zigzag scan (row, col) of the first low-frequency coefficients
ZIGZAG = ((0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (0, 3), (1, 2), (2, 1), (3, 0))
N_LUMA = 6
N_CHROMA = 3


def cut_histogram_frame(cut_frames: Sequence[int], frame: int, n_bins: int = 6) -> np.ndarray:
    """Bin i (1-based) counts cuts c with ``frame - 2**i <= c < frame``."""
    hi = bisect_left(cut_frames, frame)
    out = np.empty(n_bins)
    for i in range(1, n_bins + 1):
        out[i - 1] = hi - bisect_left(cut_frames, frame - 2**i)
    return out


def cut_histogram_segment(per_frame) -> np.ndarray:
    h = np.asarray(per_frame, dtype=float)
    if h.size == 0:
        raise EmptySegment("no frames in segment")
    return h.mean(axis=0)


def cut_histogram(cut_frames, start_frame, end_frame, n_bins=6):
    """Average per-frame cut histogram over an inclusive frame span."""
    cuts = sorted(int(c) for c in cut_frames)
    return cut_histogram_segment(
        [cut_histogram_frame(cuts, f, n_bins) for f in range(start_frame, end_frame + 1)])


@dataclass(frozen=True, eq=False)
class TpeHistogram:
    bins_a1: np.ndarray
    bins_a4: np.ndarray
    step: float

    def as_vector(self):
        return np.concatenate([self.bins_a1, self.bins_a4])


def tpe_bin(value: float, n_bins: int, step: float) -> int:
    """0-based bin of one translation value; the top bin is open-ended."""
    with np.errstate(divide="ignore"):
        energy = np.log(value * value)
    if energy < step:
        return 0
    return int(min(np.floor(energy / step), n_bins - 1))


def tpe_histogram(motions, n_bins: int = 6, step: float = 1.0) -> TpeHistogram:
    """Log-energy histograms of the translation parameters a1 and a4.

    Each histogram is normalised by the number of frames.
    """
    if len(motions) == 0:
        raise EmptySegment("no motions in segment")
    if n_bins < 2 or step <= 0:
        raise ValueError("need n_bins >= 2 and step > 0")
    a = np.array([[m.a1, m.a4] for m in motions], dtype=float)
    with np.errstate(divide="ignore"):
        energy = np.log(a * a)
    idx = np.where(energy < step, 0, np.floor(energy / step))
    idx = np.clip(idx, 0, n_bins - 1).astype(int)
    n = len(a)
    h1 = np.bincount(idx[:, 0], minlength=n_bins) / n
    h4 = np.bincount(idx[:, 1], minlength=n_bins) / n
    return TpeHistogram(h1.astype(float), h4.astype(float), float(step))


@dataclass(frozen=True, eq=False)
class ColorLayout:
    y_coeffs: np.ndarray
    cb_coeffs: np.ndarray
    cr_coeffs: np.ndarray

    def as_vector(self):
        return np.concatenate([self.y_coeffs, self.cb_coeffs, self.cr_coeffs])


def block_edges(size, n=8):
    step = size // n
    return [i * step for i in range(n)] + [size]


def block_average(image, n=8):
    """Mean of each cell of an n x n grid; remainder pixels go to the last row/column."""
    h, w = image.shape[:2]
    ye, xe = block_edges(h, n), block_edges(w, n)
    out = np.empty((n, n) + image.shape[2:])
    for i in range(n):
        for j in range(n):
            out[i, j] = image[ye[i]:ye[i + 1], xe[j]:xe[j + 1]].mean(axis=(0, 1))
    return out


def rgb_to_ycbcr(rgb):
    """BT.601 full-range conversion on the last axis."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def _low_freq(plane, count):
    # DC from the plain sum, AC from the mean-free plane: constant input
    # then gives exactly zero AC terms
    mean = plane.mean()
    coeffs = dctn(plane - mean, type=2, norm="ortho")
    out = np.array([coeffs[r, c] for r, c in ZIGZAG[:count]])
    out[0] = plane.sum() / plane.shape[0]
    return out


def color_layout(image) -> ColorLayout:
    """Raw (unquantised) colour layout of an RGB image of shape (h, w, 3)."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB image")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ImageTooSmall(f"image {img.shape[1]}x{img.shape[0]} smaller than 8x8")
    ycc = rgb_to_ycbcr(block_average(img))
    return ColorLayout(_low_freq(ycc[..., 0], N_LUMA),
                       _low_freq(ycc[..., 1], N_CHROMA),
                       _low_freq(ycc[..., 2], N_CHROMA))


@dataclass(frozen=True)
class FeatureConfig:
    cut: bool = False
    tpe: bool = False
    cld: bool = False
    loc: bool = False

    def __post_init__(self):
        if not any(getattr(self, f.name) for f in fields(self)):
            raise EmptyConfig("feature configuration selects no descriptor")

    @classmethod
    def parse(cls, text: str) -> "FeatureConfig":
        """Parse ``"cut+loc"`` style names (also accepts commas)."""
        aliases = {"cut": "cut", "hc": "cut", "tpe": "tpe", "htpe": "tpe",
                   "cld": "cld", "loc": "loc", "localization": "loc"}
        names = [t.strip().lower() for t in text.replace(",", "+").split("+") if t.strip()]
        unknown = [n for n in names if n not in aliases]
        if unknown:
            raise ValueError(f"unknown descriptor(s): {unknown}")
        return cls(**{aliases[n]: True for n in names})

    @property
    def selected(self):
        return tuple(name for name in CANONICAL_ORDER if getattr(self, name))

    @property
    def name(self):
        return "+".join(self.selected)


@dataclass(frozen=True, eq=False)
class ObservationVector:
    values: np.ndarray
    layout: tuple  # of (name, offset, length)

    def __len__(self):
        return len(self.values)

    def slice(self, name):
        for n, off, ln in self.layout:
            if n == name:
                return self.values[off:off + ln]
        raise KeyError(name)


def assemble_observation(descriptors: Mapping[str, np.ndarray], config: FeatureConfig) -> ObservationVector:
    """Concatenate the selected descriptors in canonical order (cut, tpe, cld, loc)."""
    if not isinstance(config, FeatureConfig):
        raise EmptyConfig("no feature configuration given")
    parts, layout, offset = [], [], 0
    for name in config.selected:
        if name not in descriptors or descriptors[name] is None:
            raise MissingDescriptor(f"descriptor {name!r} missing for segment")
        v = descriptors[name]
        if hasattr(v, "as_vector"):
            v = v.as_vector()
        v = np.asarray(v, dtype=float).ravel()
        parts.append(v)
        layout.append((name, offset, len(v)))
        offset += len(v)
    return ObservationVector(np.concatenate(parts), tuple(layout))
