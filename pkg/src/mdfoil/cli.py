"""``mdfoil`` command line: fit, features, params, gen-synthetic, train, eval, experiment."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bezier import curve_from_json, curve_to_json, fit_residuals, fit_segmented
from .errors import MdfoilError, SelfIntersectionError
from .features import PipelineConfig, extract_features
from .geometry import AirfoilCoordinates, preprocess, read_coordinate_file
from .geoparams import compute_params, params_to_csv
from .harness import (
    DEFAULT_FEATURE_KIND,
    ExperimentConfig,
    build_dataset,
    compare_reports,
    feature_table,
    generate_synthetic,
    labels_to_csv,
    metrics,
    read_labels_csv,
    run_experiment,
    write_report,
)
from .manifold import metric_vector, metrics_to_csv
from .mtl import (
    AE2_HIDDEN,
    MDF_SIZES,
    MLP_HIDDEN,
    MTL_G_SIZES,
    MdfModel,
    autoencoder_ae2,
    build_autoencoder,
    build_mlp,
    load_model,
    mdf_predict,
    save_model,
    train_autoencoder,
    train_mdf,
    train_mlp,
)
from .nn import TrainConfig, fit_normalizer, predict

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

TRAINING_DEFAULTS = """\
training defaults (hyper-parameters of the deep learning models):
  optimization algorithm                 Adam(Beta1=0.9,Beta2=0.999)
  Data normalization                     max-min normalization
  active function                        Relu
  batch normalization                    Yes
  batch size                             128
  learning rate                          0.001
  epoch                                  2000
  validation                             10-fold cross validation
  traing set: validation set: test set   8: 1: 1
"""


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# io helpers


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _expand(inputs, suffixes=(".dat", ".txt", ".json")) -> list[Path]:
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.suffix.lower() in suffixes))
        else:
            paths.append(p)
    return paths


def _airfoil_paths(args) -> list[Path]:
    if args.airfoils:
        return _expand(args.airfoils, (".dat", ".txt"))
    from .data import bundled_paths

    return bundled_paths()


def _load(path: Path) -> AirfoilCoordinates:
    # airfoils are keyed by file stem so label files can refer to them
    foil = read_coordinate_file(path)
    return AirfoilCoordinates(path.stem, foil.points)


def _report_error(path, exc) -> None:
    print(f"error: {path}: {exc}", file=sys.stderr)


def _pipeline(args) -> PipelineConfig:
    return PipelineConfig(
        num_segments=args.segments,
        feature_len=args.feature_len,
        resample_m=args.resample_m,
        continuity=args.continuity,
    )


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        beta1=args.beta1,
        beta2=args.beta2,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )


def _parse_sizes(text: str | None, kind: str):
    """``"64x3/16x3/32x3"`` for fusion models, ``"64x3"`` or ``"128,32,128"`` for single networks."""
    if text is None:
        return {"mdf": MDF_SIZES, "mtl_g": MTL_G_SIZES, "mlp": MLP_HIDDEN, "ae2": AE2_HIDDEN}[kind]

    def one(part):
        out = []
        for tok in part.split(","):
            width, _, reps = tok.strip().partition("x")
            out.extend([int(width)] * (int(reps) if reps else 1))
        return tuple(out)

    parts = [one(p) for p in text.split("/")]
    if kind in ("mdf", "mtl_g"):
        if len(parts) != 3:
            raise UsageError("fusion models need three layer groups: f1/f2/context")
        return tuple(parts)
    if len(parts) != 1:
        raise UsageError(f"{kind} takes a single layer group")
    return parts[0]


def _features_for(paths, config, jobs):
    """Feature table and the per-airfoil failures for ``paths``."""
    from concurrent.futures import ProcessPoolExecutor

    work = [(p, config) for p in paths]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_extract, work))
    else:
        results = [_safe_extract(w) for w in work]
    feats, failed = [], []
    for path, res in zip(paths, results):
        if isinstance(res, Exception):
            _report_error(path, res)
            failed.append(path)
        else:
            feats.append(res)
    return feats, failed


def _safe_extract(args):
    path, config = args
    try:
        return extract_features(_load(path), config)
    except (MdfoilError, OSError) as exc:
        return exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    """Fit each airfoil; by default the same two-stage curve the features are sampled from."""
    config = _pipeline(args)
    failed, worst = 0, 0.0
    outdir = Path(args.out)
    for path in _expand(args.files, (".dat", ".txt")):
        try:
            if args.direct:
                target = preprocess(_load(path))
                curve = fit_segmented(target, config.num_segments, config.continuity)
            else:
                feats = extract_features(_load(path), config)
                target, curve = feats.resampled, feats.curve
        except SelfIntersectionError as exc:
            _report_error(path, f"self-intersecting fit skipped ({exc})")
            failed += 1
            continue
        except (MdfoilError, OSError) as exc:
            _report_error(path, exc)
            failed += 1
            continue
        residual = float(np.mean(fit_residuals(curve, target)))
        worst = max(worst, residual)
        atomic_write(outdir / f"{path.stem}.json", curve_to_json(curve, name=path.stem, residual=residual))
        print(f"{path.stem}\t{residual:.3e}")
    print(f"# max residual {worst:.3e}, {failed} failed")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_features(args) -> int:
    config = _pipeline(args)
    rows, failed = [], 0
    for path in _expand(args.files):
        try:
            if path.suffix.lower() == ".json":
                curve = curve_from_json(path.read_text())
                rows.append((path.stem, metric_vector(curve, config.feature_len)))
            else:
                rows.append((path.stem, extract_features(_load(path), config).metric))
        except (MdfoilError, OSError, ValueError, KeyError) as exc:
            _report_error(path, exc)
            failed += 1
    _emit(metrics_to_csv(rows), args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_params(args) -> int:
    rows, failed = [], 0
    for path in _expand(args.files, (".dat", ".txt")):
        try:
            rows.append((path.stem, compute_params(preprocess(_load(path)))))
        except (MdfoilError, OSError) as exc:
            _report_error(path, exc)
            failed += 1
    _emit(params_to_csv(rows), args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_gen_synthetic(args) -> int:
    failed = 0
    params = {}
    for path in _airfoil_paths(args):
        try:
            params[path.stem] = compute_params(preprocess(_load(path)))
        except (MdfoilError, OSError) as exc:
            _report_error(path, exc)
            failed += 1
    if not params:
        raise UsageError("no usable airfoils")
    rows = generate_synthetic(args.n, args.seed, params)
    _emit(labels_to_csv(rows), args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def _dataset(args, kind_of_features):
    feats, failed = _features_for(_airfoil_paths(args), _pipeline(args), args.jobs)
    labels = read_labels_csv(args.labels)
    table = feature_table(feats, kind_of_features)
    known = [r for r in labels if r.name in table]
    if len(known) < len(labels):
        print(f"warning: {len(labels) - len(known)} label rows refer to airfoils without features", file=sys.stderr)
    return build_dataset(known, table, kind_of_features), feats, failed


def cmd_train(args) -> int:
    kind = args.kind
    config = _train_config(args)
    sizes = _parse_sizes(args.sizes, kind)
    pipeline = _pipeline(args)
    batchnorm = not args.no_batchnorm
    meta = {"pipeline": asdict(pipeline), "train": asdict(config), "batchnorm": batchnorm}

    if kind == "ae2":
        feats, failed = _features_for(_airfoil_paths(args), pipeline, args.jobs)
        metric = np.array([f.metric.values for f in feats])
        coords = np.array([f.resampled.points for f in feats])
        norm = fit_normalizer(metric)
        net = build_autoencoder(metric.shape[1], coords.shape[1], sizes, seed=args.seed, batchnorm=batchnorm)
        hist = train_autoencoder(net, norm.apply(metric), coords, config)
        save_model(args.out, kind, net, {"x1": norm}, meta, {"train_loss": hist.train_loss})
        print(f"trained {kind} on {len(feats)} airfoils")
        return EXIT_PARTIAL if failed else EXIT_OK

    fkind = args.feature_kind or DEFAULT_FEATURE_KIND[kind]
    ds, _, failed = _dataset(args, fkind)
    meta["feature_kind"] = fkind
    n1, n2, ny = fit_normalizer(ds.x1), fit_normalizer(ds.x2), fit_normalizer(ds.y)
    x1, x2, y = n1.apply(ds.x1), n2.apply(ds.x2), ny.apply(ds.y)
    if kind == "mlp":
        model = build_mlp(x1.shape[1] + x2.shape[1], y.shape[1], sizes, seed=args.seed, batchnorm=batchnorm)
        hist = train_mlp(model, np.hstack([x1, x2]), y, config)
    else:
        model = MdfModel.build(x1.shape[1], x2.shape[1], y.shape[1], sizes, seed=args.seed, batchnorm=batchnorm)
        hist = train_mdf(model, x1, x2, y, config)
    save_model(args.out, kind, model, {"x1": n1, "x2": n2, "y": ny}, meta, {"train_loss": hist.train_loss})
    print(f"trained {kind} on {len(ds)} rows")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_eval(args) -> int:
    saved = load_model(args.model)
    meta = saved.feature_config
    args.segments = meta["pipeline"]["num_segments"]
    args.feature_len = meta["pipeline"]["feature_len"]
    args.resample_m = meta["pipeline"]["resample_m"]
    args.continuity = meta["pipeline"]["continuity"]
    norm = saved.normalizers

    if saved.kind == "ae2":
        feats, failed = _features_for(_airfoil_paths(args), _pipeline(args), args.jobs)
        metric = norm["x1"].apply(np.array([f.metric.values for f in feats]))
        recon = autoencoder_ae2(saved.model, metric)
        per = {f.name: float(np.mean((r - f.resampled.points) ** 2)) for f, r in zip(feats, recon)}
        report = {"kind": "ae2", "n": len(feats), "mse": float(np.mean(list(per.values()))), "per_airfoil_mse": per}
    else:
        if not args.labels:
            raise UsageError("eval of a regression model needs --labels")
        ds, _, failed = _dataset(args, meta["feature_kind"])
        x1, x2 = norm["x1"].apply(ds.x1), norm["x2"].apply(ds.x2)
        if saved.kind == "mlp":
            pred = predict(saved.model, np.hstack([x1, x2]))
        else:
            pred = mdf_predict(saved.model, x1, x2)
        pred = norm["y"].invert(pred)
        m = metrics(pred, ds.y)
        report = {
            "kind": saved.kind,
            "n": len(ds),
            **m,
            "predictions": [
                [n, *map(float, c), *map(float, t), *map(float, p)] for n, c, t, p in zip(ds.names, ds.x2, ds.y, pred)
            ],
        }
    _emit(json.dumps(report, indent=1) + "\n", args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def _experiment_sizes(items, kind):
    """Per-model widths from ``KIND=SPEC`` items; models without an item keep their defaults."""
    chosen = None
    for item in items or []:
        name, sep, spec = item.partition("=")
        if not sep:
            raise UsageError(f"expected KIND=SPEC, got {item!r}")
        if name == kind:
            chosen = _parse_sizes(spec, kind)
    return chosen


def cmd_experiment(args) -> int:
    config = _train_config(args)
    reports, failed = {}, []
    for kind in args.models:
        fkind = args.feature_kind or DEFAULT_FEATURE_KIND[kind]
        ds, _, failed = _dataset(args, fkind)
        exp = ExperimentConfig(
            model=kind,
            rounds=args.rounds,
            folds=args.folds,
            seed=args.seed,
            train=config,
            sizes=_experiment_sizes(args.sizes, kind),
            batchnorm=not args.no_batchnorm,
            jobs=args.jobs,
        )
        reports[kind] = run_experiment(ds, exp)
        for path in write_report(reports[kind], args.out):
            print(path)
        avg = reports[kind]["average"]
        print(f"{kind}: mse {avg['mse']:.4e} mae {avg['mae']:.4e}")
    if args.reference and args.reference in reports:
        rows = [compare_reports(reports[args.reference], r) for k, r in reports.items() if k != args.reference]
        path = Path(args.out) / "comparison.json"
        atomic_write(path, json.dumps(rows, indent=1))
        print(path)
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_pipeline(p) -> None:
    d = PipelineConfig()
    g = p.add_argument_group("geometry")
    g.add_argument("--segments", type=int, default=d.num_segments, help="Bezier segments (default %(default)s)")
    g.add_argument("--feature-len", type=int, default=d.feature_len, help="metric samples (default %(default)s)")
    g.add_argument("--resample-m", type=int, default=d.resample_m, help="resampled points (default %(default)s)")
    g.add_argument("--continuity", choices=("C0", "G1"), default=d.continuity)


def _add_training(p) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=d.epochs, help="default %(default)s")
    g.add_argument("--learning-rate", "--lr", type=float, default=d.learning_rate, help="default %(default)s")
    g.add_argument("--beta1", type=float, default=d.beta1, help="default %(default)s")
    g.add_argument("--beta2", type=float, default=d.beta2, help="default %(default)s")
    g.add_argument("--batch-size", type=int, default=d.batch_size, help="default %(default)s")
    g.add_argument("--sizes", help="hidden widths, e.g. 1024x3/16x3/512x3 (fusion) or 1024x3")
    g.add_argument("--no-batchnorm", action="store_true", help="disable batch normalization")
    g.add_argument("--feature-kind", choices=("manifold", "coordinates", "geoparams"))


def _add_common(p) -> None:
    p.add_argument("--config", help="TOML file of option defaults; explicit flags win")
    p.add_argument("--seed", type=int, default=0, help="random seed (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdfoil",
        description="Airfoil manifold features and multi-task aerodynamic regression.",
        epilog=TRAINING_DEFAULTS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = {"formatter_class": argparse.RawDescriptionHelpFormatter}

    p = sub.add_parser("fit", help="fit segmented Bezier curves", **fmt)
    p.add_argument("files", nargs="+", help="coordinate files or directories")
    p.add_argument("--out", default=".", help="directory for curve JSON files")
    p.add_argument("--direct", action="store_true", help="fit the preprocessed points directly, no resampling")
    _add_pipeline(p)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("features", help="metric feature CSV from coordinate or curve files", **fmt)
    p.add_argument("files", nargs="+")
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_pipeline(p)
    _add_common(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("params", help="seven-parameter shape CSV", **fmt)
    p.add_argument("files", nargs="+")
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gen-synthetic", help="synthetic lift/drag labels for testing", **fmt)
    p.add_argument("--n", type=int, default=500, help="rows (default %(default)s)")
    p.add_argument("--airfoils", nargs="*", help="coordinate files or directories (default: bundled samples)")
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train one model on all label rows", epilog=TRAINING_DEFAULTS, **fmt)
    p.add_argument("kind", choices=("mdf", "mlp", "mtl_g", "ae2"))
    p.add_argument("--labels", help="name,mach,alpha,cl,cd CSV (not used by ae2)")
    p.add_argument("--airfoils", nargs="*")
    p.add_argument("--out", required=True, help="model file")
    _add_pipeline(p)
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model", **fmt)
    p.add_argument("model")
    p.add_argument("--labels")
    p.add_argument("--airfoils", nargs="*")
    p.add_argument("--out", help="report JSON (default stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="repeated k-fold comparison", epilog=TRAINING_DEFAULTS, **fmt)
    p.add_argument("--models", nargs="+", choices=("mdf", "mlp", "mtl_g"), default=["mdf", "mlp"])
    p.add_argument("--reference", default="mlp", help="model the others are compared against")
    p.add_argument("--labels", required=True)
    p.add_argument("--airfoils", nargs="*")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", required=True, help="report directory")
    _add_pipeline(p)
    _add_training(p)
    p.set_defaults(sizes=None)
    for action in p._actions:
        if action.dest == "sizes":
            action.nargs = "+"
            action.help = "per-model widths, e.g. mdf=64x3/16x3/32x3 mlp=64x3"
    _add_common(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def _config_defaults(path) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):  # [train], [geometry] ... tables are flattened
            flat.update(value)
        else:
            flat[key] = value
    return {k.replace("-", "_"): v for k, v in flat.items()}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if getattr(args, "config", None):
            sub = parser._subparsers._group_actions[0].choices[args.command]
            known = {a.dest for a in sub._actions}
            defaults = _config_defaults(args.config)
            unknown = sorted(set(defaults) - known)
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")
            sub.set_defaults(**defaults)
            args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, FileNotFoundError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"mdfoil: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MdfoilError as exc:
        print(f"mdfoil: error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
