"""Datasets, cross-validation and reporting for the aerodynamic regressors."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DataError, DomainError, ShapeError, SizeError
from .features import AirfoilFeatures
from .geoparams import GeometricParameters, compute_params
from .mtl import (
    AE2_HIDDEN,
    MDF_SIZES,
    MLP_HIDDEN,
    MTL_G_SIZES,
    AeroLabel,
    FlightCondition,
    MdfModel,
    build_autoencoder,
    build_mlp,
    mdf_predict,
    train_autoencoder,
    train_mdf,
    train_mlp,
)
from .nn import TrainConfig, fit_normalizer, predict

__all__ = [
    "LabelRow",
    "ExperimentDataset",
    "FoldPlan",
    "ExperimentConfig",
    "feature_table",
    "build_dataset",
    "read_labels_csv",
    "labels_to_csv",
    "synthetic_labels",
    "generate_synthetic",
    "kfold_plan",
    "metrics",
    "error_reduction_eta",
    "run_experiment",
    "run_autoencoder_experiment",
    "compare_reports",
    "write_report",
    "OUTPUT_NAMES",
]

OUTPUT_NAMES = ("cl", "cd")
FEATURE_KINDS = ("manifold", "coordinates", "geoparams")
DEFAULT_FEATURE_KIND = {"mdf": "manifold", "mlp": "coordinates", "mtl_g": "geoparams"}


class LabelRow(NamedTuple):
    name: str
    mach: float
    alpha: float
    cl: float
    cd: float


@dataclass(eq=False)
class ExperimentDataset:
    """Rows of (airfoil, features ``x1``, flight condition ``x2``, labels ``y``)."""

    names: list[str]
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    feature_kind: str

    def __post_init__(self):
        self.x1 = np.asarray(self.x1, dtype=float)
        self.x2 = np.asarray(self.x2, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n = len(self.names)
        if not (self.x1.shape[0] == self.x2.shape[0] == self.y.shape[0] == n):
            raise ShapeError("names, x1, x2 and y must have the same number of rows")
        if self.x1.ndim != 2 or self.x2.ndim != 2 or self.y.ndim != 2:
            raise ShapeError("x1, x2 and y must be 2-d")
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        keys = {(name, *map(float, cond)) for name, cond in zip(self.names, self.x2)}
        if len(keys) != n:
            raise DataError("duplicate (airfoil, flight condition) rows")

    def __len__(self):
        return len(self.names)

    def subset(self, idx) -> "ExperimentDataset":
        idx = np.asarray(idx, dtype=int)
        return ExperimentDataset(
            [self.names[i] for i in idx], self.x1[idx], self.x2[idx], self.y[idx], self.feature_kind
        )


def feature_table(features, kind: str) -> dict[str, np.ndarray]:
    """Per-airfoil input vectors of the requested kind, keyed by airfoil name."""
    if kind not in FEATURE_KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    table = {}
    for feat in features:
        if kind == "manifold":
            vec = np.asarray(feat.metric.values)
        elif kind == "coordinates":
            vec = np.asarray(feat.resampled.points).ravel()
        else:
            vec = compute_params(feat.resampled).as_array()
        table[feat.name] = vec
    return table


def build_dataset(labels, table: dict[str, np.ndarray], kind: str) -> ExperimentDataset:
    labels = list(labels)
    missing = sorted({r.name for r in labels} - table.keys())
    if missing:
        raise DataError(f"no features for airfoils: {', '.join(missing[:5])}")
    return ExperimentDataset(
        names=[r.name for r in labels],
        x1=np.array([table[r.name] for r in labels]),
        x2=np.array([(r.mach, r.alpha) for r in labels]),
        y=np.array([(r.cl, r.cd) for r in labels]),
        feature_kind=kind,
    )


def read_labels_csv(source) -> list[LabelRow]:
    """Parse ``name,mach,alpha,cl,cd`` rows from a path or an open text stream."""
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, newline="") as fh:
            return read_labels_csv(fh)
    reader = csv.DictReader(source)
    expected = ["name", "mach", "alpha", "cl", "cd"]
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
        raise DataError(f"label CSV header must be {','.join(expected)}")
    rows = []
    for line, rec in enumerate(reader, start=2):
        try:
            rows.append(
                LabelRow(rec["name"], float(rec["mach"]), float(rec["alpha"]), float(rec["cl"]), float(rec["cd"]))
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"line {line}: {exc}") from None
    return rows


def labels_to_csv(rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(LabelRow._fields)
    out.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# synthetic labels


def synthetic_labels(params: GeometricParameters, cond: FlightCondition) -> AeroLabel:
    """Smooth stand-in for measured coefficients; for end-to-end testing only.

    Thin-airfoil lift with camber shift and a Prandtl-Glauert factor, plus a
    parabolic drag polar::

        cl = 2 pi (alpha_rad + 2 max_camber) / sqrt(1 - Ma^2)
        cd = 0.006 + 0.02 max_thickness + 0.05 cl^2
    """
    if not (0 <= cond.mach < 1):
        raise DomainError(f"synthetic labels need 0 <= Ma < 1, got {cond.mach}")
    alpha = math.radians(cond.alpha)
    cl = 2.0 * math.pi * (alpha + 2.0 * params.max_camber) / math.sqrt(1.0 - cond.mach**2)
    cd = 0.006 + 0.02 * params.max_thickness + 0.05 * cl**2
    return AeroLabel(cl, cd)


def generate_synthetic(
    n: int,
    seed: int,
    params: dict[str, GeometricParameters],
    mach_range=(0.1, 0.7),
    alpha_range=(-4.0, 10.0),
) -> list[LabelRow]:
    """``n`` labelled rows: random airfoil and flight condition, synthetic coefficients."""
    if n < 1:
        raise SizeError("n must be >= 1")
    rng = np.random.default_rng(seed)
    names = sorted(params)
    rows, seen = [], set()
    while len(rows) < n:
        name = names[int(rng.integers(len(names)))]
        mach = round(float(rng.uniform(*mach_range)), 4)
        alpha = round(float(rng.uniform(*alpha_range)), 3)
        if (name, mach, alpha) in seen:
            continue
        seen.add((name, mach, alpha))
        lab = synthetic_labels(params[name], FlightCondition(mach, alpha))
        rows.append(LabelRow(name, mach, alpha, lab.cl, lab.cd))
    return rows


# ---------------------------------------------------------------------------
# cross-validation plan


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """``k`` disjoint subsets; fold ``i`` tests on subset ``i`` and validates on subset ``i + 1``."""

    seed: int
    subsets: tuple

    @property
    def k(self) -> int:
        return len(self.subsets)

    def fold(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(train, validation, test)`` index arrays for fold ``i``."""
        test = self.subsets[i]
        val = self.subsets[(i + 1) % self.k]
        train = np.concatenate([s for j, s in enumerate(self.subsets) if j not in (i, (i + 1) % self.k)])
        return np.sort(train), val, test


def kfold_plan(n: int, seed: int, k: int = 10) -> FoldPlan:
    if n < k:
        raise SizeError(f"need at least {k} rows for {k}-fold cross-validation, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return FoldPlan(seed, tuple(np.sort(s) for s in np.array_split(perm, k)))


# ---------------------------------------------------------------------------
# metrics


def metrics(pred, truth) -> dict:
    """MSE and MAE, averaged over outputs then rows, plus per-output values."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.ndim == 1:
        pred, truth = pred[:, None], truth[:, None]
    err = pred - truth
    return {
        "mse": float(np.mean(np.mean(err**2, axis=1))),
        "mae": float(np.mean(np.mean(np.abs(err), axis=1))),
        "mse_per_output": np.mean(err**2, axis=0).tolist(),
        "mae_per_output": np.mean(np.abs(err), axis=0).tolist(),
    }


def error_reduction_eta(sigma_ref: float, sigma_new: float) -> float:
    """Relative error change ``|ref - new| / |ref|`` in percent."""
    if sigma_ref == 0:
        raise ZeroDivisionError("reference error is zero")
    return abs(sigma_ref - sigma_new) / abs(sigma_ref) * 100.0


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "mdf"
    rounds: int = 1
    folds: int = 10
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    sizes: tuple | None = None
    batchnorm: bool = True
    jobs: int = 1
    keep_predictions: bool = True

    def __post_init__(self):
        if self.model not in DEFAULT_FEATURE_KIND:
            raise ValueError(f"unknown model {self.model!r}")
        if self.rounds < 1 or self.folds < 2:
            raise ValueError("rounds must be >= 1 and folds >= 2")

    def layer_sizes(self):
        if self.sizes is not None:
            return self.sizes
        return {"mdf": MDF_SIZES, "mtl_g": MTL_G_SIZES, "mlp": MLP_HIDDEN}[self.model]


def _fold_seed(seed: int, rnd: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, rnd, fold]).generate_state(1)[0])


def _summary(pred, truth) -> dict:
    m = metrics(pred, truth)
    out = {"mse": m["mse"], "mae": m["mae"]}
    for name, mse, mae in zip(OUTPUT_NAMES, m["mse_per_output"], m["mae_per_output"]):
        out[f"mse_{name}"] = mse
        out[f"mae_{name}"] = mae
    return out


def _train_fold(args) -> dict:
    dataset, config, rnd, fold, train_idx, val_idx, test_idx = args
    seed = _fold_seed(config.seed, rnd, fold)
    tc = replace(config.train, seed=seed)
    tr, va, te = dataset.subset(train_idx), dataset.subset(val_idx), dataset.subset(test_idx)

    n1, n2, ny = fit_normalizer(tr.x1), fit_normalizer(tr.x2), fit_normalizer(tr.y)
    x1 = {s: n1.apply(d.x1) for s, d in (("tr", tr), ("va", va), ("te", te))}
    x2 = {s: n2.apply(d.x2) for s, d in (("tr", tr), ("va", va), ("te", te))}
    y_tr, y_va = ny.apply(tr.y), ny.apply(va.y)

    if config.model == "mlp":
        net = build_mlp(x1["tr"].shape[1] + 2, 2, config.layer_sizes(), seed=seed, batchnorm=config.batchnorm)
        joint = {s: np.hstack([x1[s], x2[s]]) for s in x1}
        hist = train_mlp(net, joint["tr"], y_tr, tc, val=(joint["va"], y_va))
        pred = predict(net, joint["te"])
    else:
        model = MdfModel.build(
            x1["tr"].shape[1], 2, 2, config.layer_sizes(), seed=seed, batchnorm=config.batchnorm
        )
        hist = train_mdf(model, x1["tr"], x2["tr"], y_tr, tc, val=(x1["va"], x2["va"], y_va))
        pred = mdf_predict(model, x1["te"], x2["te"])
    pred = ny.invert(pred)
    mean_pred = np.broadcast_to(tr.y.mean(axis=0), te.y.shape)

    result = {
        "round": rnd,
        "fold": fold,
        "n_train": len(tr),
        "n_val": len(va),
        "n_test": len(te),
        "test": _summary(pred, te.y),
        "mean_predictor": _summary(mean_pred, te.y),
        "train_loss": hist.train_loss,
        "val_loss": hist.val_loss,
    }
    if config.keep_predictions:
        result["predictions"] = [
            [name, *map(float, cond), *map(float, truth), *map(float, p)]
            for name, cond, truth, p in zip(te.names, te.x2, te.y, pred)
        ]
    return result


def _mean_rows(rows: list[dict]) -> dict:
    return {key: float(np.mean([r[key] for r in rows])) for key in rows[0]}


def run_experiment(dataset: ExperimentDataset, config: ExperimentConfig) -> dict:
    """Repeated k-fold cross-validation of one model kind.

    Round ``r`` draws its fold plan from seed ``config.seed + r``. Inputs and
    targets are min-max normalised on each training split; reported errors
    are in the targets' physical units. Each fold also scores a predictor that
    always returns the training-set mean.
    """
    tasks = []
    for rnd in range(config.rounds):
        plan = kfold_plan(len(dataset), config.seed + rnd, config.folds)
        for fold in range(config.folds):
            tasks.append((dataset, config, rnd, fold, *plan.fold(fold)))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            folds = list(pool.map(_train_fold, tasks))
    else:
        folds = [_train_fold(t) for t in tasks]

    rounds = []
    for rnd in range(config.rounds):
        mine = [f for f in folds if f["round"] == rnd]
        rounds.append({"round": rnd, **_mean_rows([f["test"] for f in mine])})
    metric_rows = [{k: v for k, v in r.items() if k != "round"} for r in rounds]
    keys = list(metric_rows[0])
    return {
        "model": config.model,
        "feature_kind": dataset.feature_kind,
        "n_rows": len(dataset),
        "config": {
            **{k: v for k, v in asdict(config).items() if k != "train"},
            "train": asdict(config.train),
            "sizes": [list(s) if isinstance(s, tuple) else s for s in config.layer_sizes()],
        },
        "folds": folds,
        "rounds": rounds,
        "average": _mean_rows(metric_rows),
        "min": {k: float(min(r[k] for r in metric_rows)) for k in keys},
        "max": {k: float(max(r[k] for r in metric_rows)) for k in keys},
        "mean_predictor": _mean_rows([f["mean_predictor"] for f in folds]),
    }


def run_autoencoder_experiment(
    features, config: TrainConfig = TrainConfig(), folds: int = 10, seed: int = 0, hidden=AE2_HIDDEN,
    batchnorm: bool = True,
) -> dict:
    """k-fold reconstruction error of the metric-to-coordinates autoencoder.

    Inputs are min-max normalised on each training split; targets are the
    resampled chord-unit coordinates, so the reported MSE is in chord units
    squared.
    """
    features = list(features)
    metric = np.array([np.asarray(f.metric.values) for f in features])
    coords = np.array([np.asarray(f.resampled.points) for f in features])
    plan = kfold_plan(len(features), seed, folds)
    rows = []
    for fold in range(folds):
        tr, va, te = plan.fold(fold)
        fold_seed = _fold_seed(seed, 0, fold)
        norm = fit_normalizer(metric[tr])
        net = build_autoencoder(metric.shape[1], coords.shape[1], hidden, seed=fold_seed, batchnorm=batchnorm)
        hist = train_autoencoder(
            net, norm.apply(metric[tr]), coords[tr], replace(config, seed=fold_seed),
            val=(norm.apply(metric[va]), coords[va]),
        )
        recon = predict(net, norm.apply(metric[te])).reshape(coords[te].shape)
        rows.append({
            "fold": fold,
            "test_mse": float(np.mean((recon - coords[te]) ** 2)),
            "per_airfoil_mse": {features[i].name: float(np.mean((r - coords[i]) ** 2)) for i, r in zip(te, recon)},
            "train_loss": hist.train_loss,
            "val_loss": hist.val_loss,
        })
    return {"folds": rows, "mean_test_mse": float(np.mean([r["test_mse"] for r in rows]))}


def compare_reports(reference: dict, candidate: dict) -> dict:
    """Error reduction of ``candidate`` relative to ``reference`` for every averaged metric.

    ``eta`` is the unsigned percentage; ``change`` carries the sign (positive
    when the candidate's error is lower).
    """
    out = {"reference": reference["model"], "candidate": candidate["model"], "eta": {}, "change": {}}
    for key, ref in reference["average"].items():
        new = candidate["average"][key]
        out["eta"][key] = error_reduction_eta(ref, new)
        out["change"][key] = (ref - new) / abs(ref) * 100.0
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def write_report(report: dict, outdir, prefix: str | None = None) -> list[str]:
    """Write the JSON report and plot-ready CSV tables; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    stem = prefix or report["model"]
    paths = []

    def target(name):
        path = os.path.join(outdir, f"{stem}_{name}")
        paths.append(path)
        return path

    with open(target("report.json"), "w") as fh:
        json.dump(report, fh, indent=1)

    keys = list(report["average"])
    rows = [[r["round"], *(r[k] for k in keys)] for r in report["rounds"]]
    for label in ("average", "min", "max"):
        rows.append([label, *(report[label][k] for k in keys)])
    _write_csv(target("rounds.csv"), ["round", *keys], rows)

    _write_csv(
        target("folds.csv"),
        ["round", "fold", *keys, *(f"mean_predictor_{k}" for k in keys)],
        [
            [f["round"], f["fold"], *(f["test"][k] for k in keys), *(f["mean_predictor"][k] for k in keys)]
            for f in report["folds"]
        ],
    )
    _write_csv(
        target("loss.csv"),
        ["round", "fold", "epoch", "train_loss", "val_loss"],
        [
            [f["round"], f["fold"], e + 1, tl, f["val_loss"][e] if e < len(f["val_loss"]) else ""]
            for f in report["folds"]
            for e, tl in enumerate(f["train_loss"])
        ],
    )
    if all("predictions" in f for f in report["folds"]):
        _write_csv(
            target("predictions.csv"),
            ["round", "fold", "name", "mach", "alpha", "cl_true", "cd_true", "cl_pred", "cd_pred"],
            [[f["round"], f["fold"], *p] for f in report["folds"] for p in f["predictions"]],
        )
    return paths
