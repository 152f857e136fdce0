"""Riemannian metric of a fitted airfoil curve.

For a plane curve ``r(u)`` the metric is one-dimensional and reduces to the
first fundamental form ``g(u) = <r'(u), r'(u)> = x'(u)**2 + y'(u)**2``. The
derivative is taken with respect to the global parameter of the segmented
curve, so it carries the ``N**2`` chain-rule factor.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bezier import SegmentedCurve, global_derivative

__all__ = ["MetricVector", "metric_at", "metric_vector", "metrics_to_csv", "DEFAULT_FEATURE_LEN"]

DEFAULT_FEATURE_LEN = 271


@dataclass(frozen=True, eq=False)
class MetricVector:
    values: np.ndarray
    sample_params: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        u = np.array(self.sample_params, dtype=float)
        if v.ndim != 1 or v.shape != u.shape or v.size < 1:
            raise ValueError("values and sample_params must be equal-length 1-d arrays")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("metric values must be finite and non-negative")
        if np.any(np.diff(u) <= 0) or u[0] < 0 or u[-1] > 1:
            raise ValueError("sample parameters must increase strictly within [0, 1]")
        v.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sample_params", u)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _metric(curve: SegmentedCurve, u: np.ndarray) -> np.ndarray:
    d = global_derivative(curve, u, side="left")
    return np.einsum("ij,ij->i", d, d)


def metric_at(curve: SegmentedCurve, u: float) -> float:
    """``|dr/du|**2`` at global parameter ``u``.

    At a joint between two segments the left segment's derivative is used.
    """
    return float(_metric(curve, np.atleast_1d(np.asarray(u, dtype=float)))[0])


def metric_vector(curve: SegmentedCurve, f: int = DEFAULT_FEATURE_LEN) -> MetricVector:
    """Metric sampled at ``f`` uniformly spaced parameters ``k / (f - 1)``."""
    if f < 2:
        raise ValueError("f must be >= 2")
    u = np.arange(f) / (f - 1)
    return MetricVector(_metric(curve, u), u)


def metrics_to_csv(rows) -> str:
    """CSV with header ``name,g_0,...,g_{F-1}``; ``rows`` yields ``(name, MetricVector)``."""
    rows = list(rows)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    width = len(rows[0][1]) if rows else 0
    out.writerow(["name"] + [f"g_{k}" for k in range(width)])
    for name, vec in rows:
        out.writerow([name] + [float(v) for v in np.asarray(vec)])
    return buf.getvalue()
