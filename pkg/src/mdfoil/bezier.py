"""Cubic Bezier segments, segmented least-squares fitting and self-intersection checks.

A :class:`SegmentedCurve` stores its control polygon as a single ``(3N + 1, 2)``
array, so neighbouring segments share the joint control point by construction
and C0 continuity holds bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, PartitionError, SelfIntersectionError

__all__ = [
    "CubicBezierSegment",
    "SegmentedCurve",
    "Intersection",
    "bernstein",
    "bernstein_matrix",
    "evaluate",
    "derivative",
    "fit_segmented",
    "fit_residuals",
    "has_self_intersection",
    "global_evaluate",
    "global_derivative",
    "curve_to_json",
    "curve_from_json",
]

MAX_DEGREE = 20


def _check_unit(t):
    arr = np.asarray(t, dtype=float)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise DomainError(f"parameter outside [0, 1]: {t!r}")
    return arr


def bernstein(i: int, n: int, t: float) -> float:
    """Bernstein basis polynomial ``C(n, i) t**i (1 - t)**(n - i)``."""
    if not (0 <= i <= n):
        raise DomainError(f"basis index {i} outside [0, {n}]")
    if n > MAX_DEGREE:
        raise DomainError(f"degree {n} exceeds {MAX_DEGREE}")
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"parameter {t!r} outside [0, 1]")
    return math.comb(n, i) * t**i * (1.0 - t) ** (n - i)


def bernstein_matrix(t, n: int = 3) -> np.ndarray:
    """All degree-``n`` basis values at each parameter, shape ``(len(t), n + 1)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
    i = np.arange(n + 1)
    coef = np.array([math.comb(n, k) for k in i], dtype=float)
    return coef * t**i * (1.0 - t) ** (n - i)


def _as_control(points) -> np.ndarray:
    arr = np.array(points, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CubicBezierSegment:
    """Four control points ``P0..P3``."""

    control_points: np.ndarray

    def __post_init__(self):
        cp = _as_control(self.control_points)
        if cp.shape != (4, 2):
            raise ValueError(f"expected 4 control points of shape (4, 2), got {cp.shape}")
        if not np.all(np.isfinite(cp)):
            raise ValueError("control points must be finite")
        object.__setattr__(self, "control_points", cp)

    def __eq__(self, other):
        if not isinstance(other, CubicBezierSegment):
            return NotImplemented
        return np.array_equal(self.control_points, other.control_points)

    __hash__ = None


def _eval_control(cp: np.ndarray, t: np.ndarray) -> np.ndarray:
    return bernstein_matrix(t, 3) @ cp


def _deriv_control(cp: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 3.0 * (bernstein_matrix(t, 2) @ np.diff(cp, axis=0))


def evaluate(seg: CubicBezierSegment, t):
    """Point on the segment at ``t``; vectorised over array ``t``."""
    arr = _check_unit(t)
    out = _eval_control(seg.control_points, arr)
    return out[0] if arr.ndim == 0 else out


def derivative(seg: CubicBezierSegment, t):
    """Tangent ``dr/dt`` of the segment at ``t``; vectorised over array ``t``."""
    arr = _check_unit(t)
    out = _deriv_control(seg.control_points, arr)
    return out[0] if arr.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class SegmentedCurve:
    """Chain of ``N`` cubic segments sharing joint control points.

    ``control_points`` has shape ``(3N + 1, 2)``; segment ``i`` uses rows
    ``3i .. 3i + 3``. ``fit_params`` holds, for curves produced by
    :func:`fit_segmented`, the global parameter assigned to every data point.
    """

    control_points: np.ndarray
    fit_params: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        cp = _as_control(self.control_points)
        if cp.ndim != 2 or cp.shape[1] != 2 or cp.shape[0] < 4 or (cp.shape[0] - 1) % 3:
            raise ValueError(f"control polygon must have shape (3N + 1, 2), got {cp.shape}")
        if not np.all(np.isfinite(cp)):
            raise ValueError("control points must be finite")
        object.__setattr__(self, "control_points", cp)
        if self.fit_params is not None:
            object.__setattr__(self, "fit_params", _as_control(self.fit_params))

    @classmethod
    def from_segments(cls, segments) -> "SegmentedCurve":
        segs = [s if isinstance(s, CubicBezierSegment) else CubicBezierSegment(s) for s in segments]
        if not segs:
            raise ValueError("at least one segment is required")
        rows = [segs[0].control_points]
        for prev, seg in zip(segs, segs[1:]):
            if not np.array_equal(prev.control_points[3], seg.control_points[0]):
                raise ValueError("segments are not C0-connected")
            rows.append(seg.control_points[1:])
        return cls(np.vstack(rows))

    @property
    def num_segments(self) -> int:
        return (self.control_points.shape[0] - 1) // 3

    def segment_control(self, i: int) -> np.ndarray:
        return self.control_points[3 * i : 3 * i + 4]

    @property
    def segments(self) -> list[CubicBezierSegment]:
        return [CubicBezierSegment(self.segment_control(i)) for i in range(self.num_segments)]

    @property
    def start(self) -> np.ndarray:
        return self.control_points[0]

    @property
    def end(self) -> np.ndarray:
        return self.control_points[-1]

    def transformed(self, matrix=None, offset=(0.0, 0.0)) -> "SegmentedCurve":
        """Apply ``p -> matrix @ p + offset`` to every control point."""
        cp = self.control_points
        if matrix is not None:
            cp = cp @ np.asarray(matrix, dtype=float).T
        return SegmentedCurve(cp + np.asarray(offset, dtype=float))


# ---------------------------------------------------------------------------
# global parameterisation


def _locate(n_seg: int, u: np.ndarray, side: str = "right"):
    s = u * n_seg
    idx = np.minimum(np.floor(s), n_seg - 1).astype(int)
    if side == "left":
        joint = np.rint(s)
        at_joint = (np.abs(s - joint) <= 1e-12 * n_seg) & (joint >= 1) & (joint <= n_seg)
        idx = np.where(at_joint, joint.astype(int) - 1, idx)
        t = np.where(at_joint, 1.0, s - idx)
    else:
        t = s - idx
    return idx, np.clip(t, 0.0, 1.0)


def _global_apply(curve: SegmentedCurve, u, kernel, side: str):
    arr = _check_unit(u)
    flat = np.atleast_1d(arr)
    idx, t = _locate(curve.num_segments, flat, side)
    cp = curve.control_points
    out = np.empty((flat.size, 2))
    for seg in np.unique(idx):
        mask = idx == seg
        out[mask] = kernel(cp[3 * seg : 3 * seg + 4], t[mask])
    return out[0] if arr.ndim == 0 else out


def global_evaluate(curve: SegmentedCurve, u):
    """Point at global parameter ``u``; segment ``min(floor(uN), N - 1)``."""
    return _global_apply(curve, u, _eval_control, "right")


def global_derivative(curve: SegmentedCurve, u, side: str = "right"):
    """``dr/du = N * dr/dt`` at global parameter ``u``.

    At a joint the right-hand segment is used unless ``side="left"``.
    """
    n = curve.num_segments
    return n * _global_apply(curve, u, _deriv_control, side)


# ---------------------------------------------------------------------------
# fitting


def _chord_params(q: np.ndarray) -> np.ndarray:
    d = np.hypot(*np.diff(q, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(d)])
    if s[-1] <= 0.0:
        raise PartitionError("run of coincident points cannot be fitted")
    return s / s[-1]


def _solve_inner(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    b = bernstein_matrix(t, 3)
    rhs = q - np.outer(b[:, 0], q[0]) - np.outer(b[:, 3], q[-1])
    inner, *_ = np.linalg.lstsq(b[:, 1:3], rhs, rcond=None)
    return np.vstack([q[0], inner, q[-1]])


def _fit_run(q: np.ndarray, refine: int, tol: float):
    t0 = _chord_params(q)
    cp0 = _solve_inner(q, t0)
    if refine <= 0 or len(q) == 4:
        return cp0, t0
    m = len(q) - 2
    ends = np.vstack([q[0], q[-1]])

    def unpack(z):
        t = np.concatenate([[0.0], z[:m], [1.0]])
        cp = np.vstack([ends[0], z[m:].reshape(2, 2), ends[1]])
        return t, cp

    def resid(z):
        t, cp = unpack(z)
        return (_eval_control(cp, t) - q).ravel()

    def jac(z):
        t, cp = unpack(z)
        b = bernstein_matrix(t, 3)
        d1 = _deriv_control(cp, t)
        j = np.zeros((2 * len(q), m + 4))
        rows = np.arange(1, m + 1)
        j[2 * rows, rows - 1] = d1[1:-1, 0]
        j[2 * rows + 1, rows - 1] = d1[1:-1, 1]
        j[0::2, m] = b[:, 1]
        j[1::2, m + 1] = b[:, 1]
        j[0::2, m + 2] = b[:, 2]
        j[1::2, m + 3] = b[:, 2]
        return j

    z0 = np.concatenate([t0[1:-1], cp0[1:3].ravel()])
    sol = least_squares(
        resid, z0, jac=jac, method="lm", xtol=tol, ftol=tol, gtol=tol, max_nfev=refine * (m + 5)
    )
    t, cp = unpack(sol.x)
    # reject solutions that leave [0, 1] or reorder the samples
    if not np.all(np.diff(t) > 0) or sol.cost > 0.5 * np.sum((_eval_control(cp0, t0) - q) ** 2):
        return cp0, t0
    return _solve_inner(q, t), t


def _partition(n_points: int, num_segments: int) -> np.ndarray:
    if num_segments < 1:
        raise PartitionError("num_segments must be >= 1")
    q, r = divmod(n_points - 1, num_segments)
    if q < 3:
        raise PartitionError(
            f"{n_points} points cannot be split into {num_segments} runs of at least 4 points"
        )
    lengths = np.full(num_segments, q)
    lengths[:r] += 1
    return np.concatenate([[0], np.cumsum(lengths)])


def _make_g1(cp: np.ndarray) -> None:
    n = (cp.shape[0] - 1) // 3
    for i in range(1, n):
        j = 3 * i
        a = cp[j - 1] - cp[j]
        b = cp[j + 1] - cp[j]
        _, _, vt = np.linalg.svd(np.vstack([a, b]))
        d = vt[0]
        cp[j - 1] = cp[j] + (a @ d) * d
        cp[j + 1] = cp[j] + (b @ d) * d


def fit_segmented(
    points,
    num_segments: int,
    continuity: str = "C0",
    *,
    refine: int = 0,
    tol: float = 1e-15,
    check_intersection: bool = True,
) -> SegmentedCurve:
    """Fit a C0 chain of cubic segments to an ordered point set.

    The points are split into ``num_segments`` contiguous runs of (nearly)
    equal size that share their boundary points. Each run gets one cubic whose
    end points are pinned to the run's first and last points; the two inner
    control points solve a linear least-squares problem with parameters set by
    normalised chord length.

    ``refine > 0`` additionally runs a Levenberg-Marquardt solve over the
    parameters and inner control points jointly (at most ``refine`` Jacobian
    evaluations per unknown). It recovers a cubic exactly from samples taken
    at arbitrary parameters, but on sparse data it can let a segment overshoot
    into a loop, so it is off by default.

    With ``continuity="G1"`` the control points on either side of every joint
    are projected onto a common line through the joint.

    Raises
    ------
    PartitionError
        If some run would have fewer than 4 points.
    SelfIntersectionError
        If the fitted curve crosses itself (only when ``check_intersection``).
    """
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    if continuity not in ("C0", "G1"):
        raise ValueError(f"unknown continuity {continuity!r}")
    bounds = _partition(len(pts), num_segments)

    cp = np.empty((3 * num_segments + 1, 2))
    params = np.empty(len(pts))
    for i in range(num_segments):
        lo, hi = bounds[i], bounds[i + 1]
        seg_cp, t = _fit_run(pts[lo : hi + 1], refine, tol)
        cp[3 * i : 3 * i + 4] = seg_cp
        params[lo : hi + 1] = (i + t) / num_segments
    params[-1] = 1.0
    if continuity == "G1":
        _make_g1(cp)

    curve = SegmentedCurve(cp, fit_params=params)
    if check_intersection:
        hit = has_self_intersection(curve)
        if hit is not None:
            raise SelfIntersectionError(hit)
    return curve


def fit_residuals(curve: SegmentedCurve, points) -> np.ndarray:
    """Squared distance of every data point to the curve at its assigned parameter."""
    if curve.fit_params is None:
        raise ValueError("curve carries no fitted parameters")
    pts = np.asarray(getattr(points, "points", points), dtype=float)
    diff = global_evaluate(curve, curve.fit_params) - pts
    return np.einsum("ij,ij->i", diff, diff)


# ---------------------------------------------------------------------------
# self-intersection


class Intersection(NamedTuple):
    segment_a: int
    segment_b: int
    t_a: float
    t_b: float
    point: tuple[float, float]


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (
        b[..., 0] - o[..., 0]
    )


def _candidate_pairs(p0: np.ndarray, p1: np.ndarray):
    """Index pairs ``(a, b)``, ``a < b``, whose bounding boxes overlap."""
    xmin = np.minimum(p0[:, 0], p1[:, 0])
    xmax = np.maximum(p0[:, 0], p1[:, 0])
    order = np.argsort(xmin, kind="stable")
    xs = xmin[order]
    hi = np.searchsorted(xs, xmax[order], side="right")
    pos = np.arange(len(order))
    counts = np.maximum(hi - pos - 1, 0)
    first = np.repeat(pos, counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    second = first + 1 + offsets
    a, b = order[first], order[second]
    a, b = np.minimum(a, b), np.maximum(a, b)
    ymin = np.minimum(p0[:, 1], p1[:, 1])
    ymax = np.maximum(p0[:, 1], p1[:, 1])
    keep = (b - a >= 2) & (ymin[a] <= ymax[b]) & (ymin[b] <= ymax[a])
    return a[keep], b[keep]


def _on_piece(p, q, r):
    """Whether collinear point ``r`` lies within the bounding box of piece ``p``-``q``."""
    return (
        (np.minimum(p[:, 0], q[:, 0]) <= r[:, 0])
        & (r[:, 0] <= np.maximum(p[:, 0], q[:, 0]))
        & (np.minimum(p[:, 1], q[:, 1]) <= r[:, 1])
        & (r[:, 1] <= np.maximum(p[:, 1], q[:, 1]))
    )


def has_self_intersection(curve: SegmentedCurve, samples_per_segment: int = 64) -> Intersection | None:
    """Look for a place where the curve's polyline approximation meets itself.

    Every segment is sampled at ``samples_per_segment + 1`` uniform parameters
    and all pairs of non-adjacent polyline pieces are tested. Crossings,
    touches and collinear overlaps all count; the shared vertex of adjacent
    pieces does not, nor does the closing vertex of a loop whose last point
    equals its first. The first hit in polyline order is returned; ``None``
    means the curve is clean. Features smaller than the sampling resolution
    can be missed.
    """
    if samples_per_segment < 8:
        raise ValueError("samples_per_segment must be >= 8")
    s = samples_per_segment
    n = curve.num_segments
    t = np.linspace(0.0, 1.0, s + 1)
    verts = [_eval_control(curve.segment_control(0), t)]
    for i in range(1, n):
        verts.append(_eval_control(curve.segment_control(i), t)[1:])
    v = np.vstack(verts)
    p0, p1 = v[:-1], v[1:]

    a, b = _candidate_pairs(p0, p1)
    if np.array_equal(v[0], v[-1]):
        closing = (a == 0) & (b == len(p0) - 1)
        a, b = a[~closing], b[~closing]
    if a.size == 0:
        return None
    o1 = _cross(p0[a], p1[a], p0[b])
    o2 = _cross(p0[a], p1[a], p1[b])
    o3 = _cross(p0[b], p1[b], p0[a])
    o4 = _cross(p0[b], p1[b], p1[a])
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    touch = (
        ((o1 == 0) & _on_piece(p0[a], p1[a], p0[b]))
        | ((o2 == 0) & _on_piece(p0[a], p1[a], p1[b]))
        | ((o3 == 0) & _on_piece(p0[b], p1[b], p0[a]))
        | ((o4 == 0) & _on_piece(p0[b], p1[b], p1[a]))
    )
    hit = proper | touch
    if not np.any(hit):
        return None
    idx = np.flatnonzero(hit)
    k = idx[np.lexsort((b[idx], a[idx]))[0]]
    a, b = int(a[k]), int(b[k])

    da = p1[a] - p0[a]
    db = p1[b] - p0[b]
    w = p0[b] - p0[a]
    denom = da[0] * db[1] - da[1] * db[0]
    if denom != 0:
        sa = (w[0] * db[1] - w[1] * db[0]) / denom
        sb = (w[0] * da[1] - w[1] * da[0]) / denom
    else:  # collinear overlap: report the start of piece b, projected on a
        sa = float(np.clip(w @ da / max(da @ da, 1e-300), 0.0, 1.0))
        sb = 0.0
    sa, sb = min(max(sa, 0.0), 1.0), min(max(sb, 0.0), 1.0)
    pt = p0[a] + sa * da
    return Intersection(
        segment_a=a // s,
        segment_b=b // s,
        t_a=float((a % s + sa) / s),
        t_b=float((b % s + sb) / s),
        point=(float(pt[0]), float(pt[1])),
    )


# ---------------------------------------------------------------------------
# serialisation


def curve_to_json(curve: SegmentedCurve, **extra) -> str:
    """Serialise as ``{"segments": [[[x, y] x 4], ...]}``; floats round-trip exactly."""
    segs = [curve.segment_control(i).tolist() for i in range(curve.num_segments)]
    return json.dumps({**extra, "segments": segs})


def curve_from_json(text: str) -> SegmentedCurve:
    data = json.loads(text)
    return SegmentedCurve.from_segments([np.array(s, dtype=float) for s in data["segments"]])
