"""End-to-end geometric feature extraction for one airfoil.

raw file -> canonical ordering -> smoothing fit -> uniform resample ->
segmented fit -> sampled metric.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .bezier import SegmentedCurve, fit_residuals, fit_segmented
from .geometry import AirfoilCoordinates, preprocess, read_coordinate_file, resample
from .manifold import MetricVector, metric_vector

__all__ = ["PipelineConfig", "AirfoilFeatures", "extract_features", "extract_many", "smoothing_segments"]


@dataclass(frozen=True)
class PipelineConfig:
    """Geometry settings shared by the CLI and the experiment harness."""

    num_segments: int = 40
    feature_len: int = 271
    resample_m: int = 281
    continuity: str = "C0"
    smoothing_run: int = 7

    def __post_init__(self):
        if self.num_segments < 1:
            raise ValueError("num_segments must be >= 1")
        if self.feature_len < 2:
            raise ValueError("feature_len must be >= 2")
        if self.resample_m < 4 or (self.resample_m - 1) // self.num_segments < 3:
            raise ValueError("resample_m must leave at least 4 points per segment")
        if self.continuity not in ("C0", "G1"):
            raise ValueError("continuity must be 'C0' or 'G1'")
        if self.smoothing_run < 4:
            raise ValueError("smoothing_run must be >= 4")

    @classmethod
    def from_mapping(cls, data) -> "PipelineConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass(frozen=True, eq=False)
class AirfoilFeatures:
    name: str
    canonical: AirfoilCoordinates
    smoothing_curve: SegmentedCurve
    resampled: AirfoilCoordinates
    curve: SegmentedCurve
    metric: MetricVector

    @property
    def residual(self) -> float:
        """Mean squared distance between the resampled points and ``curve``."""
        return float(np.mean(fit_residuals(self.curve, self.resampled)))


def smoothing_segments(n_points: int, config: PipelineConfig) -> int:
    """Segments used to smooth a raw point set: runs of at least ``smoothing_run`` points."""
    return max(1, min(config.num_segments, (n_points - 1) // (config.smoothing_run - 1)))


def extract_features(raw: AirfoilCoordinates, config: PipelineConfig = PipelineConfig()) -> AirfoilFeatures:
    canonical = preprocess(raw)
    n1 = smoothing_segments(len(canonical), config)
    smooth = fit_segmented(canonical, n1, config.continuity)
    resampled = resample(smooth, config.resample_m, name=raw.name)
    curve = fit_segmented(resampled, config.num_segments, config.continuity)
    return AirfoilFeatures(
        name=raw.name,
        canonical=canonical,
        smoothing_curve=smooth,
        resampled=resampled,
        curve=curve,
        metric=metric_vector(curve, config.feature_len),
    )


def _extract_path(args):
    path, config = args
    return extract_features(read_coordinate_file(path), config)


def extract_many(paths, config: PipelineConfig = PipelineConfig(), jobs: int = 1) -> list[AirfoilFeatures]:
    """Extract features for many files, optionally in worker processes (order preserved)."""
    work = [(p, config) for p in paths]
    if jobs <= 1:
        return [_extract_path(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_extract_path, work))
