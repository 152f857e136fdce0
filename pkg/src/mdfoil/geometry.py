"""Airfoil coordinate files: parsing, canonical ordering and resampling."""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .bezier import SegmentedCurve, global_evaluate
from .errors import IncompleteAirfoilError, InsufficientDataError, InvalidAirfoilError, ParseError

__all__ = [
    "AirfoilCoordinates",
    "parse_coordinate_file",
    "read_coordinate_file",
    "preprocess",
    "resample",
    "DUPLICATE_TOL",
]

DUPLICATE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AirfoilCoordinates:
    """A named, ordered ``(M, 2)`` array of chord-fraction coordinates.

    The array is stored read-only. Parsing and preprocessing enforce the
    4-point minimum; resampling may produce as few as 2 points.
    """

    name: str
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must have shape (M, 2), got {pts.shape}")
        if len(pts) < 2:
            raise InsufficientDataError("an airfoil needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, AirfoilCoordinates):
            return NotImplemented
        return self.name == other.name and np.array_equal(self.points, other.points)

    __hash__ = None

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def leading_edge_index(self) -> int:
        return int(np.argmin(self.points[:, 0]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,y\n")
        for x, y in self.points:
            buf.write(f"{x!r},{y!r}\n")
        return buf.getvalue()


def _read_text(raw) -> str:
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, (bytes, bytearray)):
        return raw.decode("utf-8", errors="replace")
    return str(raw)


def parse_coordinate_file(raw, name: str | None = None) -> AirfoilCoordinates:
    """Parse a UIUC-style coordinate file.

    The first non-empty line is the airfoil name; every following non-empty
    line must hold two numbers. Points are returned in file order. Lednicer
    files, whose first data line gives the upper and lower point counts, are
    decoded into a single trailing-edge to trailing-edge loop.
    """
    text = _read_text(raw)
    rows: list[tuple[int, float, float]] = []
    header = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if header is None:
            header = line.strip()
            continue
        if len(tokens) != 2:
            raise ParseError(f"expected two numbers, got {line.strip()!r}", lineno)
        try:
            x, y = float(tokens[0]), float(tokens[1])
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {line.strip()!r}", lineno) from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError(f"non-finite coordinate in {line.strip()!r}", lineno)
        rows.append((lineno, x, y))

    if rows and _is_lednicer_counts(rows[0][1], rows[0][2]):
        n_up, n_lo = int(rows[0][1]), int(rows[0][2])
        data = np.array([(x, y) for _, x, y in rows[1:]])
        if len(data) != n_up + n_lo:
            raise ParseError(
                f"Lednicer header announces {n_up} + {n_lo} points, found {len(data)}", rows[0][0]
            )
        pts = np.vstack([data[:n_up][::-1], data[n_up:]])
    else:
        pts = np.array([(x, y) for _, x, y in rows]).reshape(-1, 2)

    if len(pts) < 4:
        raise InsufficientDataError(f"need at least 4 coordinate points, found {len(pts)}")
    label = name if name is not None else (header or "")
    return AirfoilCoordinates(label, pts)


def _is_lednicer_counts(a: float, b: float) -> bool:
    return a >= 2 and b >= 2 and a == int(a) and b == int(b)


def read_coordinate_file(path) -> AirfoilCoordinates:
    with open(path, "rb") as fh:
        foil = parse_coordinate_file(fh)
    if not foil.name:
        foil = AirfoilCoordinates(os.path.splitext(os.path.basename(path))[0], foil.points)
    return foil


def _drop_duplicates(pts: np.ndarray, tol: float) -> np.ndarray:
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > tol:
            keep.append(i)
    return pts[keep]


def _mean_height(branch: np.ndarray, grid: np.ndarray) -> float:
    order = np.argsort(branch[:, 0], kind="stable")
    return float(np.mean(np.interp(grid, branch[order, 0], branch[order, 1])))


def preprocess(raw: AirfoilCoordinates) -> AirfoilCoordinates:
    """Normalise chord and reorder to trailing edge, upper surface, leading edge, lower surface.

    x is shifted so the leading edge sits at 0 and both axes are divided by
    the chord (max x - min x). Consecutive points closer than
    ``DUPLICATE_TOL`` are merged. The leading edge is the point of minimum x;
    the surface with the larger mean height over the common chord range is
    taken as the upper one.

    Raises
    ------
    IncompleteAirfoilError
        If the points run monotonically from one edge to the other, i.e. only
        one surface is present.
    """
    pts = np.array(raw.points, dtype=float)
    x = pts[:, 0]
    xmin, xmax = x.min(), x.max()
    chord = xmax - xmin
    if chord <= 0:
        raise InvalidAirfoilError(f"{raw.name!r}: zero chord")
    pts[:, 0] = (x - xmin) / chord
    pts[:, 1] = pts[:, 1] / chord
    pts = _drop_duplicates(pts, DUPLICATE_TOL)
    if len(pts) < 4:
        raise InsufficientDataError(f"{raw.name!r}: fewer than 4 distinct points")

    x = pts[:, 0]
    if abs(x[0] - x[-1]) > 0.5:
        raise IncompleteAirfoilError(f"{raw.name!r}: points run from one edge to the other")
    if 0.5 * (x[0] + x[-1]) >= 0.5:
        k = int(np.argmin(x))
        first, second = pts[: k + 1], pts[k:][::-1]
    else:
        k = int(np.argmax(x))
        first, second = pts[: k + 1][::-1], pts[k:]
    if len(first) < 2 or len(second) < 2:
        raise IncompleteAirfoilError(f"{raw.name!r}: only one surface found")

    lo = max(first[:, 0].min(), second[:, 0].min())
    hi = min(first[:, 0].max(), second[:, 0].max())
    if hi > lo:
        grid = np.linspace(lo, hi, 101)
        h1, h2 = _mean_height(first, grid), _mean_height(second, grid)
    else:
        h1, h2 = first[:, 1].mean(), second[:, 1].mean()
    upper, lower = (first, second) if h1 >= h2 else (second, first)

    lower = lower[::-1]
    if np.hypot(*(upper[-1] - lower[0])) <= DUPLICATE_TOL:
        lower = lower[1:]
    return AirfoilCoordinates(raw.name, np.vstack([upper, lower]))


def resample(curve: SegmentedCurve, m: int, name: str = "") -> AirfoilCoordinates:
    """Evaluate ``m`` points at uniformly spaced global parameters ``0 .. 1``."""
    if m < 2:
        raise ValueError("m must be >= 2")
    u = np.linspace(0.0, 1.0, m)
    return AirfoilCoordinates(name, global_evaluate(curve, u))
