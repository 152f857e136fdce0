"""
From coordinate file to metric features
=======================================

Walks one airfoil through the geometry pipeline and prints what each
stage produces. Run with ``python demos/01_airfoil_features.py``.
"""

# %% load a bundled section and put it in canonical order
import numpy as np

from mdfoil.bezier import fit_residuals, fit_segmented, has_self_intersection
from mdfoil.data import bundled_names, load_bundled
from mdfoil.features import extract_features
from mdfoil.geometry import preprocess
from mdfoil.geoparams import PARAM_NAMES, compute_params
from mdfoil.manifold import metric_at

raw = load_bundled("naca2412")
foil = preprocess(raw)
print(raw.name, "-", len(raw), "points as read,", len(foil), "after preprocessing")
print("first point (trailing edge):", foil.points[0], " leading edge x:", foil.x.min())

# %% the full pipeline: smoothing fit, 281 evenly spaced points, 40-segment fit, metric samples
feat = extract_features(raw)
print("resampled points:", feat.resampled.points.shape, " segments:", feat.curve.num_segments)
print("final fit residual:", f"{feat.residual:.2e}")
print("self-intersection:", has_self_intersection(feat.curve))

# %% fewer segments fit the resampled points less closely
for n in (10, 20, 40):
    curve = fit_segmented(feat.resampled, n)
    print(f"{n:3d} segments: mean squared residual {np.mean(fit_residuals(curve, feat.resampled)):.2e}")

# %% the metric is the squared speed of the curve in the global parameter
g = feat.metric.values
print("metric vector length:", len(g))
print("near the trailing edge:", g[:3].round(4), " near the leading edge:", g[132:138].round(4))
print("pointwise check at u=0.25:", metric_at(feat.curve, 0.25))

# %% the seven-number shape description, for comparison
params = compute_params(feat.resampled)
for name, value in zip(PARAM_NAMES, params.as_array()):
    print(f"  {name:18s} {value: .5f}")

# %% the first ten bundled sections
rows = []
for name in bundled_names()[:10]:
    f = extract_features(load_bundled(name))
    rows.append((name, f.metric.values.max(), f.residual))
for name, peak, res in rows:
    print(f"{name:12s} peak metric {peak:8.3f}   residual {res:.1e}")
