"""Multi-task fusion model (MDF), its baselines and the metric-to-shape autoencoder.

An :class:`MdfModel` combines two function networks and one context network:
``f1`` sees the airfoil features, ``f2`` the flight condition and ``c`` their
concatenation. For output ``i`` (of ``K``)::

    y_i = f1(x1)_i * c([x1, x2])_i + f2(x2)_i * c([x1, x2])_{K+i}

The gates are raw context outputs, no squashing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .nn import (
    AdamState,
    DenseNetwork,
    Normalizer,
    TrainConfig,
    TrainHistory,
    adam_step,
    backward,
    forward,
    minibatches,
    mse_grad,
    mse_loss,
    network_from_dict,
    network_to_dict,
    predict,
    train_network,
    update_running_stats,
    _finite_or_raise,
)

__all__ = [
    "FlightCondition",
    "AeroLabel",
    "MdfModel",
    "fuse",
    "mdf_forward",
    "mdf_predict",
    "mdf_backward",
    "train_mdf",
    "build_mlp",
    "mlp_baseline",
    "train_mlp",
    "build_mtl_g",
    "mtl_g_baseline",
    "build_autoencoder",
    "autoencoder_ae2",
    "train_autoencoder",
    "save_model",
    "load_model",
    "SavedModel",
    "MDF_SIZES",
    "MTL_G_SIZES",
    "MLP_HIDDEN",
    "AE2_HIDDEN",
]

# hidden widths: function net 1, function net 2, context net
MDF_SIZES = ((1024,) * 3, (16,) * 3, (512,) * 3)
MTL_G_SIZES = ((32,) * 3, (8,) * 3, (32,) * 3)
MLP_HIDDEN = (1024,) * 3
AE2_HIDDEN = (128, 32, 128)
MODEL_KINDS = ("mdf", "mlp", "mtl_g", "ae2")


@dataclass(frozen=True)
class FlightCondition:
    mach: float
    alpha: float
    roll: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.mach) and math.isfinite(self.alpha)):
            raise ValueError("mach and alpha must be finite")
        if self.mach < 0:
            raise ValueError("mach must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.mach, self.alpha], dtype=float)


@dataclass(frozen=True)
class AeroLabel:
    cl: float
    cd: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cl, self.cd], dtype=float)


def _rows(x) -> np.ndarray:
    if isinstance(x, FlightCondition):
        x = x.as_array()
    elif hasattr(x, "as_array"):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


@dataclass(eq=False)
class MdfModel:
    f1: DenseNetwork
    f2: DenseNetwork
    c: DenseNetwork

    def __post_init__(self):
        k = self.f1.out_features
        if self.f2.out_features != k:
            raise ShapeError("function networks must have the same output width")
        if self.c.out_features != 2 * k:
            raise ShapeError("context network must output 2K gates")
        if self.c.in_features != self.f1.in_features + self.f2.in_features:
            raise ShapeError("context input must be the concatenation of both inputs")

    @classmethod
    def build(
        cls,
        n_x1: int,
        n_x2: int = 2,
        k: int = 2,
        sizes=MDF_SIZES,
        *,
        seed=0,
        batchnorm: bool = True,
    ) -> "MdfModel":
        f1_hidden, f2_hidden, c_hidden = sizes
        rng = np.random.default_rng(seed)
        return cls(
            f1=DenseNetwork.build([n_x1, *f1_hidden, k], seed=rng, batchnorm=batchnorm),
            f2=DenseNetwork.build([n_x2, *f2_hidden, k], seed=rng, batchnorm=batchnorm),
            c=DenseNetwork.build([n_x1 + n_x2, *c_hidden, 2 * k], seed=rng, batchnorm=batchnorm),
        )

    @property
    def k(self) -> int:
        return self.f1.out_features

    @property
    def networks(self) -> dict[str, DenseNetwork]:
        return {"f1": self.f1, "f2": self.f2, "c": self.c}

    def copy(self) -> "MdfModel":
        return MdfModel(self.f1.copy(), self.f2.copy(), self.c.copy())


def fuse(f1_out, f2_out, c_out) -> np.ndarray:
    """Gate each function-network output with its own context output and add."""
    k = f1_out.shape[1]
    return f1_out * c_out[:, :k] + f2_out * c_out[:, k : 2 * k]


@dataclass
class _MdfCache:
    x1: np.ndarray
    x2: np.ndarray
    out: dict
    caches: dict


def mdf_forward(model: MdfModel, x1, x2, mode: str = "eval"):
    """Fused prediction for a batch; returns ``(y, cache)`` like :func:`mdfoil.nn.forward`."""
    x1 = _rows(x1)
    x2 = _rows(x2)
    if len(x1) != len(x2):
        raise ShapeError("x1 and x2 differ in row count")
    joint = np.hstack([x1, x2])
    out, caches = {}, {}
    for name, net, inp in (("f1", model.f1, x1), ("f2", model.f2, x2), ("c", model.c, joint)):
        out[name], caches[name] = forward(net, inp, mode)
    y = fuse(out["f1"], out["f2"], out["c"])
    cache = _MdfCache(x1, x2, out, caches) if mode == "train" else None
    return y, cache


def mdf_predict(model: MdfModel, x1, x2) -> np.ndarray:
    return mdf_forward(model, x1, x2, "eval")[0]


def _function_grads(model, cache, dy):
    k = model.k
    gate = cache.out["c"]
    return {
        "f1": backward(model.f1, cache.caches["f1"], dy * gate[:, :k]),
        "f2": backward(model.f2, cache.caches["f2"], dy * gate[:, k : 2 * k]),
    }


def _context_grads(model, cache, dy, f1_out, f2_out):
    dc = np.hstack([dy * f1_out, dy * f2_out])
    return {"c": backward(model.c, cache.caches["c"], dc)}


def mdf_backward(model: MdfModel, cache: _MdfCache, dy, part: str = "all") -> dict:
    """Parameter gradients through the fusion product.

    ``part`` selects ``"function"`` (f1, f2), ``"context"`` (c) or ``"all"``.
    """
    grads = {}
    if part in ("function", "all"):
        grads.update(_function_grads(model, cache, dy))
    if part in ("context", "all"):
        grads.update(_context_grads(model, cache, dy, cache.out["f1"], cache.out["f2"]))
    if not grads:
        raise ValueError(f"unknown part {part!r}")
    return grads


def train_mdf(
    model: MdfModel,
    x1,
    x2,
    y,
    config: TrainConfig,
    val=None,
    *,
    update_function: bool = True,
    update_context: bool = True,
) -> TrainHistory:
    """Alternating training of the function and context networks.

    For every minibatch: forward pass and loss; Adam step on both function
    networks with the context network held fixed; fresh forward pass of the
    function networks; Adam step on the context network with the function
    networks held fixed. A frozen part is left untouched, batch-norm running
    statistics included.

    ``val`` is an optional ``(x1, x2, y)`` triple scored in eval mode after
    each epoch.
    """
    x1 = _rows(x1)
    x2 = _rows(x2)
    y = _rows(y)
    if len(x1) == 0:
        raise DataError("empty training set")
    if not (len(x1) == len(x2) == len(y)):
        raise ShapeError("x1, x2 and y differ in row count")
    rng = np.random.default_rng(config.seed)
    states = {name: AdamState.zeros_like(net) for name, net in model.networks.items()}
    history = TrainHistory()

    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for idx in minibatches(len(x1), config.batch_size, rng):
            yb = y[idx]
            pred, cache = mdf_forward(model, x1[idx], x2[idx], "train")
            total += mse_loss(pred, yb) * len(idx)

            if update_function:
                grads = _function_grads(model, cache, mse_grad(pred, yb))
                t = states["f1"].t + 1
                for name in ("f1", "f2"):
                    net = model.networks[name]
                    update_running_stats(net, cache.caches[name])
                    adam_step(net, grads[name], states[name], config, t)

            if update_context:
                update_running_stats(model.c, cache.caches["c"])
                if update_function:
                    f1_out, _ = forward(model.f1, cache.x1, "train")
                    f2_out, _ = forward(model.f2, cache.x2, "train")
                else:
                    f1_out, f2_out = cache.out["f1"], cache.out["f2"]
                pred = fuse(f1_out, f2_out, cache.out["c"])
                grads = _context_grads(model, cache, mse_grad(pred, yb), f1_out, f2_out)
                adam_step(model.c, grads["c"], states["c"], config)

        loss = total / len(x1)
        _finite_or_raise(loss, epoch)
        history.train_loss.append(loss)
        if val is not None:
            history.val_loss.append(mse_loss(mdf_predict(model, val[0], val[1]), _rows(val[2])))
    return history


# ---------------------------------------------------------------------------
# baselines


def build_mlp(n_in: int, k: int = 2, hidden=MLP_HIDDEN, *, seed=0, batchnorm: bool = True) -> DenseNetwork:
    """Plain fully connected regressor on the concatenated inputs."""
    return DenseNetwork.build([n_in, *hidden, k], seed=seed, batchnorm=batchnorm)


def mlp_baseline(net: DenseNetwork, x) -> np.ndarray:
    return predict(net, _rows(x))


def train_mlp(net: DenseNetwork, x, y, config: TrainConfig, val=None) -> TrainHistory:
    return train_network(net, _rows(x), _rows(y), config, val)


def build_mtl_g(n_params: int = 7, n_x2: int = 2, k: int = 2, *, seed=0, batchnorm: bool = True) -> MdfModel:
    """Fusion model on the seven shape parameters, with the small layer widths."""
    return MdfModel.build(n_params, n_x2, k, MTL_G_SIZES, seed=seed, batchnorm=batchnorm)


def mtl_g_baseline(model: MdfModel, params, cond) -> np.ndarray:
    return mdf_predict(model, params, cond)


# ---------------------------------------------------------------------------
# autoencoder


def build_autoencoder(
    feature_len: int = 271, n_points: int = 281, hidden=AE2_HIDDEN, *, seed=0, batchnorm: bool = True
) -> DenseNetwork:
    """Dense map from a metric vector to ``n_points`` (x, y) coordinates."""
    return DenseNetwork.build([feature_len, *hidden, 2 * n_points], seed=seed, batchnorm=batchnorm)


def autoencoder_ae2(net: DenseNetwork, metric) -> np.ndarray:
    """Reconstructed coordinates, shape ``(M, 2)`` for one vector or ``(B, M, 2)``."""
    single = np.ndim(np.asarray(metric)) == 1
    out = predict(net, _rows(np.asarray(metric)))
    out = out.reshape(len(out), -1, 2)
    return out[0] if single else out


def train_autoencoder(net: DenseNetwork, metrics, coords, config: TrainConfig, val=None) -> TrainHistory:
    """Fit ``net`` so that metric vectors reproduce their ``(M, 2)`` coordinate sets."""
    coords = np.asarray(coords, dtype=float)
    flat_val = None
    if val is not None:
        flat_val = (val[0], np.asarray(val[1], dtype=float).reshape(len(val[1]), -1))
    return train_network(net, metrics, coords.reshape(len(coords), -1), config, flat_val)


# ---------------------------------------------------------------------------
# model files


@dataclass
class SavedModel:
    kind: str
    model: object
    normalizers: dict[str, Normalizer] = field(default_factory=dict)
    feature_config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _model_networks(kind, model) -> dict:
    if kind in ("mdf", "mtl_g"):
        return {name: network_to_dict(net) for name, net in model.networks.items()}
    return {"net": network_to_dict(model)}


def save_model(path, kind: str, model, normalizers=None, feature_config=None, extra=None) -> None:
    """Write a single-file JSON model with a header naming its kind and preprocessing."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    doc = {
        "format": "mdfoil-model",
        "version": 1,
        "kind": kind,
        "feature_config": dict(feature_config or {}),
        "normalizers": {k: v.to_dict() for k, v in (normalizers or {}).items()},
        "extra": dict(extra or {}),
        "networks": _model_networks(kind, model),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> SavedModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "mdfoil-model":
        raise ValueError(f"{path}: not an mdfoil model file")
    kind = doc["kind"]
    nets = {name: network_from_dict(d) for name, d in doc["networks"].items()}
    model = MdfModel(nets["f1"], nets["f2"], nets["c"]) if kind in ("mdf", "mtl_g") else nets["net"]
    return SavedModel(
        kind=kind,
        model=model,
        normalizers={k: Normalizer.from_dict(v) for k, v in doc["normalizers"].items()},
        feature_config=doc.get("feature_config", {}),
        extra=doc.get("extra", {}),
    )
