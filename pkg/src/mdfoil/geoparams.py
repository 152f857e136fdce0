"""The seven classical airfoil shape parameters.

Camber and thickness use the vertical convention: both surfaces are
interpolated onto a shared cosine-spaced x grid and combined pointwise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import InvalidAirfoilError
from .geometry import AirfoilCoordinates

__all__ = ["GeometricParameters", "compute_params", "params_to_csv", "PARAM_NAMES"]

GRID_POINTS = 200
LE_WINDOW = 0.02
LE_MIN_POINTS = 5
CROSSING_TOL = 1e-6


@dataclass(frozen=True)
class GeometricParameters:
    chord: float
    max_camber: float
    max_camber_pos: float
    max_thickness: float
    max_thickness_pos: float
    le_radius: float
    te_thickness: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


PARAM_NAMES = tuple(f.name for f in fields(GeometricParameters))


def _surface_on_grid(surface: np.ndarray, grid: np.ndarray, upper: bool) -> np.ndarray:
    # at a repeated x (a blunt leading edge) the upper surface keeps its highest
    # point and the lower surface its lowest
    key = -surface[:, 1] if upper else surface[:, 1]
    order = np.lexsort((key, surface[:, 0]))
    xs, ys = surface[order, 0], surface[order, 1]
    first = np.concatenate([[True], np.diff(xs) > 0])
    return np.interp(grid, xs[first], ys[first])


def _circle_lstsq(pts: np.ndarray) -> float:
    # algebraic (Kasa) fit: x^2 + y^2 + D x + E y + F = 0
    a = np.column_stack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
    rhs = -(pts[:, 0] ** 2 + pts[:, 1] ** 2)
    (d, e, f), *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return float(np.sqrt(max(0.25 * (d * d + e * e) - f, 0.0)))


def _circumradius(p: np.ndarray, q: np.ndarray, r: np.ndarray) -> float:
    a = np.hypot(*(q - r))
    b = np.hypot(*(p - r))
    c = np.hypot(*(p - q))
    area2 = abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    return float("inf") if area2 == 0 else float(a * b * c / (2.0 * area2))


def _le_radius(pts: np.ndarray, le: int) -> float:
    x0 = pts[le, 0]
    window = pts[pts[:, 0] <= x0 + LE_WINDOW]
    if len(window) >= LE_MIN_POINTS:
        return _circle_lstsq(window)
    lo, hi = max(le - 1, 0), min(le + 1, len(pts) - 1)
    return _circumradius(pts[lo], pts[le], pts[hi])


def compute_params(airfoil: AirfoilCoordinates) -> GeometricParameters:
    """Shape parameters of a canonical (preprocessed) airfoil.

    Raises
    ------
    InvalidAirfoilError
        If the upper surface dips below the lower one by more than 1e-6 chord.
    """
    pts = np.asarray(airfoil.points, dtype=float)
    le = int(np.argmin(pts[:, 0]))
    if le == 0 or le == len(pts) - 1:
        raise InvalidAirfoilError(f"{airfoil.name!r}: leading edge at an end of the point list")
    upper = pts[: le + 1]
    lower = pts[le:]
    x0, x1 = pts[:, 0].min(), pts[:, 0].max()
    chord = x1 - x0

    k = np.arange(GRID_POINTS)
    grid = x0 + chord * 0.5 * (1.0 - np.cos(np.pi * k / (GRID_POINTS - 1)))
    yu = _surface_on_grid(upper, grid, upper=True)
    yl = _surface_on_grid(lower, grid, upper=False)
    camber = 0.5 * (yu + yl)
    thickness = yu - yl
    if thickness.min() < -CROSSING_TOL:
        i = int(np.argmin(thickness))
        raise InvalidAirfoilError(f"{airfoil.name!r}: surfaces cross near x = {grid[i]:.4f}")

    ic = int(np.argmax(np.abs(camber)))
    it = int(np.argmax(thickness))
    return GeometricParameters(
        chord=float(chord),
        max_camber=float(camber[ic]),
        max_camber_pos=float((grid[ic] - x0) / chord),
        max_thickness=float(thickness[it]),
        max_thickness_pos=float((grid[it] - x0) / chord),
        le_radius=_le_radius(pts, le),
        te_thickness=float(max(thickness[-1], 0.0)),
    )


def params_to_csv(rows) -> str:
    """CSV with a ``name`` column and the seven parameter columns."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(("name",) + PARAM_NAMES)
    for name, params in rows:
        out.writerow([name, *astuple(params)])
    return buf.getvalue()
