"""Airfoil manifold features and gated multi-task regression of lift and drag.

Geometry is fitted with piecewise cubic Bezier curves, the squared speed of
the fitted curve is sampled as a feature vector, and a gated two-branch
network predicts aerodynamic coefficients from it. Everything numerical,
including backpropagation and Adam, is plain numpy.
"""

__version__ = "0.1.0"

from .bezier import (
    CubicBezierSegment,
    SegmentedCurve,
    bernstein,
    fit_segmented,
    global_derivative,
    global_evaluate,
    has_self_intersection,
)
from .errors import MdfoilError
from .features import AirfoilFeatures, PipelineConfig, extract_features, extract_many
from .geometry import AirfoilCoordinates, parse_coordinate_file, preprocess, read_coordinate_file, resample
from .geoparams import GeometricParameters, compute_params
from .harness import (
    ExperimentConfig,
    ExperimentDataset,
    error_reduction_eta,
    kfold_plan,
    metrics,
    run_experiment,
    synthetic_labels,
)
from .manifold import MetricVector, metric_at, metric_vector
from .mtl import (
    AeroLabel,
    FlightCondition,
    MdfModel,
    autoencoder_ae2,
    mdf_forward,
    train_mdf,
)
from .nn import DenseNetwork, TrainConfig

__all__ = [
    "AeroLabel",
    "AirfoilCoordinates",
    "AirfoilFeatures",
    "CubicBezierSegment",
    "DenseNetwork",
    "ExperimentConfig",
    "ExperimentDataset",
    "FlightCondition",
    "GeometricParameters",
    "MdfModel",
    "MdfoilError",
    "MetricVector",
    "PipelineConfig",
    "SegmentedCurve",
    "TrainConfig",
    "autoencoder_ae2",
    "bernstein",
    "compute_params",
    "error_reduction_eta",
    "extract_features",
    "extract_many",
    "fit_segmented",
    "global_derivative",
    "global_evaluate",
    "has_self_intersection",
    "kfold_plan",
    "mdf_forward",
    "metric_at",
    "metric_vector",
    "metrics",
    "parse_coordinate_file",
    "preprocess",
    "read_coordinate_file",
    "resample",
    "run_experiment",
    "synthetic_labels",
    "train_mdf",
]
