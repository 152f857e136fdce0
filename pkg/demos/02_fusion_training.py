"""
Fusion model versus a plain MLP on synthetic labels
===================================================

Builds a small labelled set from the bundled airfoils with the synthetic
lift/drag formula, then runs a few-epoch cross-validation of the fusion
model (metric features) against a fully connected baseline (resampled
coordinates). Widths and epochs are cut down so the script finishes in
about a minute on one core; pass real labels through the CLI for anything
serious.
"""

# %% features for every bundled airfoil
import numpy as np

from mdfoil.data import bundled_paths
from mdfoil.features import extract_many
from mdfoil.geoparams import compute_params
from mdfoil.harness import (
    ExperimentConfig,
    build_dataset,
    compare_reports,
    feature_table,
    generate_synthetic,
    run_experiment,
)
from mdfoil.nn import TrainConfig

feats = extract_many(bundled_paths())
print(len(feats), "airfoils")

# %% synthetic labels: thin-airfoil lift with a compressibility factor, parabolic drag polar
params = {f.name: compute_params(f.resampled) for f in feats}
rows = generate_synthetic(300, seed=0, params=params)
print(rows[0])

# %% the two datasets share labels and differ only in the airfoil input
mdf_data = build_dataset(rows, feature_table(feats, "manifold"), "manifold")
mlp_data = build_dataset(rows, feature_table(feats, "coordinates"), "coordinates")
print("fusion input", mdf_data.x1.shape, " baseline input", mlp_data.x1.shape)

# %% 10-fold cross-validation, one round
train = TrainConfig(epochs=60)
mdf = run_experiment(mdf_data, ExperimentConfig("mdf", train=train, sizes=((64,) * 3, (16,) * 3, (32,) * 3)))
mlp = run_experiment(mlp_data, ExperimentConfig("mlp", train=train, sizes=(64,) * 3))

for rep in (mdf, mlp):
    avg, base = rep["average"], rep["mean_predictor"]
    print(f"{rep['model']:4s} test mse {avg['mse']:.3e}  (cl {avg['mse_cl']:.2e}, cd {avg['mse_cd']:.2e})"
          f"   mean predictor {base['mse']:.3e}")

# %% error reduction of the fusion model relative to the baseline, per metric
comparison = compare_reports(mlp, mdf)
for key, change in comparison["change"].items():
    print(f"  {key:8s} {change:+7.1f}%")

# %% the same runs without batch normalisation
# batch norm fits the training rows well (eval mode on them matches the training
# loss) but the fusion model then generalises poorly on some folds
plain = {}
for name, data, sizes in (("mdf", mdf_data, ((64,) * 3, (16,) * 3, (32,) * 3)), ("mlp", mlp_data, (64,) * 3)):
    plain[name] = run_experiment(data, ExperimentConfig(name, train=train, sizes=sizes, batchnorm=False))
    print(f"{name:4s} test mse {plain[name]['average']['mse']:.3e}")
print("mse change:", f"{compare_reports(plain['mlp'], plain['mdf'])['change']['mse']:+.1f}%")

# %% loss traces, as plotted per fold
for label, rep in (("with batch norm", mdf), ("without", plain["mdf"])):
    trace = np.array(rep["folds"][0]["train_loss"])
    print(f"fold 0 fusion training loss {label}, every 10th epoch:", trace[::10].round(5))
