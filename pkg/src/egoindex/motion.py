"""Global affine motion estimation and motion-based temporal segmentation.

Each predictive frame carries a field of macroblock displacement vectors.
A six-parameter affine model is fitted to the field, the model is composed
over time to follow the four image corners, and a new segment is started
whenever a corner drifts further than a fixed fraction of the image width.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateField, EmptyInput

TUKEY_C = 4.685
MAD_TO_SIGMA = 1.4826


class BlockMotionVector(NamedTuple):
    cx: float
    cy: float
    dx: float
    dy: float


@dataclass(frozen=True, eq=False)
class BlockMotionField:
    """Displacement vectors of one frame; ``vectors`` is an (n, 4) array of cx, cy, dx, dy."""

    frame_index: int
    width: int
    height: int
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float).reshape(-1, 4)
        object.__setattr__(self, "vectors", v)
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")

    @classmethod
    def from_vectors(cls, frame_index, width, height, vectors: Iterable[BlockMotionVector]):
        rows = [tuple(v) for v in vectors]
        return cls(frame_index, width, height, np.array(rows, dtype=float).reshape(-1, 4))

    def __len__(self):
        return len(self.vectors)

    @property
    def centers(self):
        return self.vectors[:, :2]

    @property
    def displacements(self):
        return self.vectors[:, 2:]


@dataclass(frozen=True)
class AffineMotion:
    """dx = a1 + a2*x + a3*y ;  dy = a4 + a5*x + a6*y"""

    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0
    a5: float = 0.0
    a6: float = 0.0

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in np.asarray(a, dtype=float).ravel()))

    def as_array(self):
        return np.array([self.a1, self.a2, self.a3, self.a4, self.a5, self.a6])

    @property
    def translation(self):
        return np.array([self.a1, self.a4])

    @property
    def linear(self):
        return np.array([[self.a2, self.a3], [self.a5, self.a6]])

    def displacement(self, points):
        """Displacement predicted at ``points`` (an (n, 2) array)."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        return self.translation + p @ self.linear.T

    def inverse(self):
        """Motion undoing this one: maps p + d(p) back to p."""
        m = np.eye(2) + self.linear
        m_inv = np.linalg.inv(m)
        lin = m_inv - np.eye(2)
        t = -m_inv @ self.translation
        return AffineMotion(t[0], lin[0, 0], lin[0, 1], t[1], lin[1, 0], lin[1, 1])


IDENTITY = AffineMotion()


def _weighted_fit(centers, disp, w):
    # the x and y rows share no parameters: solve [1, x, y] p = dx and [1, x, y] q = dy
    wsum = w.sum()
    mean = (w[:, None] * centers).sum(axis=0) / wsum
    xc = centers - mean
    scale = np.sqrt((w[:, None] * xc**2).sum(axis=0) / wsum)
    if np.any(scale == 0.0):
        raise DegenerateField("block centers are collinear")
    xs = xc / scale
    cov = (w[:, None, None] * xs[:, :, None] * xs[:, None, :]).sum(axis=0) / wsum
    sv = np.linalg.eigvalsh(cov)
    if sv[0] <= 1e-10 * sv[-1]:
        raise DegenerateField("block centers are collinear")

    design = np.column_stack([np.ones(len(xs)), xs])
    normal = design.T @ (w[:, None] * design)
    rhs = design.T @ (w[:, None] * disp)
    sol = np.linalg.solve(normal, rhs)  # (3, 2): rows const, x, y; cols dx, dy
    lin = sol[1:] / scale[:, None]
    trans = sol[0] - mean @ lin
    return np.array([trans[0], lin[0, 0], lin[1, 0], trans[1], lin[0, 1], lin[1, 1]])


def _residuals(params, centers, disp):
    return disp - AffineMotion.from_array(params).displacement(centers)


def _tukey_weights(norms, scale):
    c = TUKEY_C * scale
    if c <= 0.0:
        return (norms <= 1e-12).astype(float)
    u = norms / c
    w = (1.0 - u**2) ** 2
    w[u >= 1.0] = 0.0
    return w


def estimate_affine(field: BlockMotionField, robust: bool = False, max_iter: int = 10) -> AffineMotion:
    """Least-squares fit of the affine global motion to a block motion field.

    With ``robust`` set, the plain fit seeds an IRLS loop using Tukey's
    biweight with the cutoff at 4.685 times the MAD-based residual scale.

    Raises DegenerateField when fewer than three vectors are present or all
    block centers lie on a line.
    """
    if len(field) < 3:
        raise DegenerateField(f"frame {field.frame_index}: {len(field)} vectors, need >= 3")
    centers, disp = field.centers, field.displacements
    w = np.ones(len(centers))
    params = _weighted_fit(centers, disp, w)
    if not robust:
        return AffineMotion.from_array(params)

    for _ in range(max_iter):
        r = _residuals(params, centers, disp)
        norms = np.hypot(r[:, 0], r[:, 1])
        # scale from the same per-block norms the weights are applied to
        w = _tukey_weights(norms, MAD_TO_SIGMA * np.median(norms))
        if np.count_nonzero(w) < 3:
            break
        try:
            new = _weighted_fit(centers, disp, w)
        except DegenerateField:
            break
        converged = np.max(np.abs(new - params)) <= 1e-13 * (1.0 + np.max(np.abs(params)))
        params = new
        if converged:
            break
    return AffineMotion.from_array(params)


def estimate_motions(fields: Sequence[BlockMotionField], robust: bool = False):
    """Fit every field; degenerate frames inherit the previous frame's motion.

    Returns ``(motions, degenerate_frames)``.
    """
    motions, degenerate = [], []
    prev = IDENTITY
    for field in fields:
        try:
            prev = estimate_affine(field, robust=robust)
        except DegenerateField:
            degenerate.append(field.frame_index)
        motions.append(prev)
    return motions, degenerate


def image_corners(width, height):
    return np.array([[0.0, 0.0], [width, 0.0], [0.0, height], [width, height]])


@dataclass(frozen=True, eq=False)
class CornerState:
    """Absolute corner positions plus the positions they had at segment start."""

    reference: np.ndarray
    positions: np.ndarray

    @classmethod
    def at_rest(cls, width, height):
        c = image_corners(width, height)
        return cls(c, c.copy())

    @property
    def displacement(self):
        return self.positions - self.reference

    def max_displacement(self):
        d = self.displacement
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def mean_displacement(self):
        d = self.displacement
        return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


def advance_corners(state: CornerState, motion: AffineMotion) -> CornerState:
    p = state.positions
    return CornerState(state.reference, p + motion.displacement(p))


@dataclass(frozen=True)
class Segment:
    start_frame: int
    end_frame: int

    @property
    def length(self):
        return self.end_frame - self.start_frame + 1

    @property
    def key_frame(self):
        return key_frame(self)

    def frames(self):
        return range(self.start_frame, self.end_frame + 1)


def key_frame(segment: Segment) -> int:
    return (segment.start_frame + segment.end_frame) // 2


def cut_threshold(width, threshold_ratio=0.2):
    return threshold_ratio * width


def detect_cuts(motions: Sequence[AffineMotion], width, height=None, threshold_ratio=0.2,
                aggregate="max"):
    """Frames at which a corner trajectory leaves the threshold disk.

    Returns ``(cuts, displacement)`` where ``displacement[k]`` is the largest
    corner displacement after applying frame ``k``'s motion, measured before
    any reset.  ``aggregate="mean"`` averages the four corners instead.
    """
    if len(motions) == 0:
        raise EmptyInput("no motions to segment")
    if aggregate not in ("max", "mean"):
        raise ValueError(f"aggregate must be 'max' or 'mean', got {aggregate!r}")
    if height is None:
        height = 0.75 * width
    t = cut_threshold(width, threshold_ratio)
    state = CornerState.at_rest(width, height)
    cuts = []
    disp = np.empty(len(motions))
    for k, motion in enumerate(motions):
        state = advance_corners(state, motion)
        disp[k] = state.max_displacement() if aggregate == "max" else state.mean_displacement()
        if disp[k] > t:
            cuts.append(k)
            state = CornerState.at_rest(width, height)
    return np.array(cuts, dtype=int), disp


def merge_short(bounds, n_frames, min_len=5):
    """Merge raw segments shorter than ``min_len`` into their successor.

    ``bounds`` are the raw segment end frames in ascending order (the last
    one being ``n_frames - 1``).  A short trailing segment merges backward.
    """
    segments = []
    start = 0
    pending = None
    for end in bounds:
        seg_start = pending if pending is not None else start
        if end - seg_start + 1 >= min_len:
            segments.append(Segment(seg_start, int(end)))
            pending = None
        else:
            pending = seg_start
        start = int(end) + 1
    if pending is not None:
        if segments:
            last = segments.pop()
            segments.append(Segment(last.start_frame, n_frames - 1))
        else:
            segments.append(Segment(0, n_frames - 1))
    return segments


def segment_video(motions: Sequence[AffineMotion], width, height=None,
                  threshold_ratio=0.2, min_len=5, aggregate="max") -> list[Segment]:
    """Cut the frame sequence into segments of stable viewpoint.

    Every frame belongs to exactly one segment.  If the whole sequence is
    shorter than ``min_len`` a single short segment is returned.
    """
    cuts, _ = detect_cuts(motions, width, height, threshold_ratio, aggregate)
    n = len(motions)
    bounds = [int(c) for c in cuts if c < n - 1] + [n - 1]
    return merge_short(bounds, n, min_len)
