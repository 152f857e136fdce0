"""A small dense-network engine in numpy.

Layers are ``affine -> batch norm (optional) -> activation``. Everything runs
in float64 so analytic gradients can be checked tightly against finite
differences. Forward passes never mutate the network; running batch-norm
statistics are folded in explicitly with :func:`update_running_stats`.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateBatchError, DivergenceError, ShapeError, StateError

__all__ = [
    "Layer",
    "DenseNetwork",
    "TrainConfig",
    "AdamState",
    "Normalizer",
    "TrainHistory",
    "forward",
    "predict",
    "backward",
    "update_running_stats",
    "mse_loss",
    "mse_grad",
    "adam_step",
    "fit_normalizer",
    "minibatches",
    "train_network",
    "network_to_dict",
    "network_from_dict",
]

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ACTIVATIONS = ("relu", "identity")
_version_counter = itertools.count()


@dataclass(eq=False)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError("bias length must match the weight matrix's row count")

    @property
    def batchnorm(self) -> bool:
        return self.gamma is not None

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        params = [self.weight, self.bias]
        if self.batchnorm:
            params += [self.gamma, self.beta]
        return params


@dataclass(eq=False)
class DenseNetwork:
    """Stack of :class:`Layer` objects.

    ``bn_momentum`` is the weight given to the current batch when updating the
    running statistics, ``running = (1 - m) * running + m * batch``.
    """

    layers: list[Layer]
    bn_momentum: float = BN_MOMENTUM
    bn_eps: float = BN_EPS
    version: int = field(default_factory=lambda: next(_version_counter))

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_features != b.in_features:
                raise ShapeError(f"layer widths disagree: {a.out_features} -> {b.in_features}")

    @classmethod
    def build(
        cls,
        sizes,
        *,
        seed=0,
        batchnorm: bool = True,
        hidden_activation: str = "relu",
        bn_momentum: float = BN_MOMENTUM,
    ) -> "DenseNetwork":
        """Glorot-uniform initialised network with widths ``sizes``.

        Hidden layers get batch norm (if enabled) and ``hidden_activation``;
        the last layer is affine with identity activation.
        """
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            last = i == len(sizes) - 2
            bn = batchnorm and not last
            layers.append(
                Layer(
                    weight=w,
                    bias=np.zeros(n_out),
                    activation="identity" if last else hidden_activation,
                    gamma=np.ones(n_out) if bn else None,
                    beta=np.zeros(n_out) if bn else None,
                    running_mean=np.zeros(n_out) if bn else None,
                    running_var=np.ones(n_out) if bn else None,
                )
            )
        return cls(layers, bn_momentum=bn_momentum)

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    @property
    def out_features(self) -> int:
        return self.layers[-1].out_features

    @property
    def sizes(self) -> list[int]:
        return [self.in_features] + [layer.out_features for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def touch(self) -> None:
        """Mark parameters as changed so older forward caches become stale."""
        self.version = next(_version_counter)

    def copy(self) -> "DenseNetwork":
        dup = copy.deepcopy(self)
        dup.touch()
        return dup


@dataclass
class _Cache:
    net_version: int
    inputs: list
    xhat: list
    inv_std: list
    batch_mean: list
    batch_var: list
    pre_act: list


def _check_input(net: DenseNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_features:
        raise ShapeError(f"expected input of width {net.in_features}, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ShapeError("empty batch")
    return x


def forward(net: DenseNetwork, batch, mode: str = "eval"):
    """Run the network on a ``(B, in)`` batch.

    Returns ``(output, cache)``. ``cache`` is ``None`` in eval mode; in train
    mode it holds what :func:`backward` and :func:`update_running_stats` need.
    Train mode normalises with batch statistics and requires ``B >= 2`` when
    any layer has batch norm.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', not {mode!r}")
    h = _check_input(net, batch)
    train = mode == "train"
    if train and h.shape[0] < 2 and any(layer.batchnorm for layer in net.layers):
        raise DegenerateBatchError("train-mode batch norm needs at least 2 rows")

    cache = _Cache(net.version, [], [], [], [], [], []) if train else None
    for layer in net.layers:
        z = h @ layer.weight.T + layer.bias
        if train:
            cache.inputs.append(h)
        if layer.batchnorm:
            if train:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mean, var = layer.running_mean, layer.running_var
            inv = 1.0 / np.sqrt(var + net.bn_eps)
            xhat = (z - mean) * inv
            a = layer.gamma * xhat + layer.beta
            if train:
                cache.xhat.append(xhat)
                cache.inv_std.append(inv)
                cache.batch_mean.append(mean)
                cache.batch_var.append(var)
        else:
            a = z
            if train:
                cache.xhat.append(None)
                cache.inv_std.append(None)
                cache.batch_mean.append(None)
                cache.batch_var.append(None)
        if train:
            cache.pre_act.append(a)
        h = np.maximum(a, 0.0) if layer.activation == "relu" else a
    return h, cache


def predict(net: DenseNetwork, batch) -> np.ndarray:
    return forward(net, batch, "eval")[0]


def backward(net: DenseNetwork, cache, loss_grad, need_input_grad: bool = False):
    """Gradients of a loss with respect to every parameter.

    ``loss_grad`` is dLoss/dOutput for the batch used in the train-mode
    :func:`forward` that produced ``cache``. Returns a list aligned with
    ``net.parameters()``, plus dLoss/dInput when ``need_input_grad``.
    """
    if cache is None:
        raise StateError("backward needs the cache of a train-mode forward pass")
    if cache.net_version != net.version:
        raise StateError("cache is stale: parameters changed since the forward pass")
    g = np.asarray(loss_grad, dtype=float)
    grads: list[np.ndarray] = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (cache.pre_act[i] > 0)
        if layer.batchnorm:
            xhat, inv = cache.xhat[i], cache.inv_std[i]
            d_gamma = np.sum(g * xhat, axis=0)
            d_beta = np.sum(g, axis=0)
            dxhat = g * layer.gamma
            b = g.shape[0]
            g = (inv / b) * (
                b * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0)
            )
            layer_grads = [None, None, d_gamma, d_beta]
        else:
            layer_grads = [None, None]
        x_in = cache.inputs[i]
        layer_grads[0] = g.T @ x_in
        layer_grads[1] = g.sum(axis=0)
        grads[:0] = layer_grads
        if i > 0 or need_input_grad:
            g = g @ layer.weight
    return (grads, g) if need_input_grad else grads


def update_running_stats(net: DenseNetwork, cache) -> None:
    """Blend the batch statistics recorded in ``cache`` into the running ones."""
    m = net.bn_momentum
    for layer, mean, var in zip(net.layers, cache.batch_mean, cache.batch_var):
        if layer.batchnorm:
            layer.running_mean = (1.0 - m) * layer.running_mean + m * mean
            layer.running_var = (1.0 - m) * layer.running_var + m * var


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    return pred, target


def mse_loss(pred, target) -> float:
    """Mean over rows of the mean squared error over outputs."""
    pred, target = _check_pair(pred, target)
    return float(np.mean(np.mean((pred - target) ** 2, axis=1)))


def mse_grad(pred, target) -> np.ndarray:
    pred, target = _check_pair(pred, target)
    return 2.0 * (pred - target) / pred.size


# ---------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser and schedule settings (defaults follow the reference setup)."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 128
    epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        params = params.parameters() if isinstance(params, DenseNetwork) else params
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, config: TrainConfig, t: int | None = None):
    """One bias-corrected Adam update, applied in place.

    ``params`` is a :class:`DenseNetwork` or a list of arrays. ``t`` defaults
    to ``state.t + 1``. Returns ``(params, state)``.
    """
    net = params if isinstance(params, DenseNetwork) else None
    arrays = net.parameters() if net is not None else params
    if t is None:
        t = state.t + 1
    if t < 1:
        raise ValueError("step index t must be >= 1")
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ShapeError("params, grads and optimiser state differ in length")
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    state.t = t
    if net is not None:
        net.touch()
    return params, state


# ---------------------------------------------------------------------------
# normalisation


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-feature min-max scaling; constant features map to 0."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.array(self.minimum, dtype=float)
        hi = np.array(self.maximum, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("maximum must be >= minimum elementwise")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @property
    def _span(self) -> np.ndarray:
        span = self.maximum - self.minimum
        return np.where(span > 0, span, 1.0)

    def apply(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        out = (data - self.minimum) / self._span
        return np.where(self.maximum > self.minimum, out, 0.0)

    def invert(self, data) -> np.ndarray:
        return np.asarray(data, dtype=float) * self._span + self.minimum

    def to_dict(self) -> dict:
        return {"min": _encode(self.minimum), "max": _encode(self.maximum)}

    @classmethod
    def from_dict(cls, data) -> "Normalizer":
        return cls(_decode(data["min"]), _decode(data["max"]))


def fit_normalizer(data) -> Normalizer:
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise DataError("cannot fit a normaliser to empty data")
    if data.ndim == 1:
        data = data[:, None]
    return Normalizer(data.min(axis=0), data.max(axis=0))


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing single row joins the previous batch."""
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _finite_or_raise(loss: float, epoch: int) -> None:
    if not np.isfinite(loss):
        raise DivergenceError(epoch, loss)


def train_network(net: DenseNetwork, x, y, config: TrainConfig, val=None) -> TrainHistory:
    """Minimise the MSE of ``net`` on ``(x, y)`` with minibatch Adam.

    ``val`` is an optional ``(x_val, y_val)`` pair scored in eval mode after
    every epoch. Returns per-epoch training loss (size-weighted mean of the
    batch losses) and validation loss.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise DataError("empty training set")
    if len(x) != len(y):
        raise ShapeError("x and y differ in row count")
    rng = np.random.default_rng(config.seed)
    state = AdamState.zeros_like(net)
    history = TrainHistory()
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for idx in minibatches(len(x), config.batch_size, rng):
            out, cache = forward(net, x[idx], "train")
            total += mse_loss(out, y[idx]) * len(idx)
            grads = backward(net, cache, mse_grad(out, y[idx]))
            update_running_stats(net, cache)
            adam_step(net, grads, state, config)
        loss = total / len(x)
        _finite_or_raise(loss, epoch)
        history.train_loss.append(loss)
        if val is not None:
            history.val_loss.append(mse_loss(predict(net, val[0]), val[1]))
    return history


# ---------------------------------------------------------------------------
# persistence


def _encode(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "hex": arr.tobytes().hex()}


def _decode(data: dict) -> np.ndarray:
    flat = np.frombuffer(bytes.fromhex(data["hex"]), dtype="<f8").astype(float)
    return flat.reshape(data["shape"])


def network_to_dict(net: DenseNetwork) -> dict:
    """JSON-ready description; doubles are stored as little-endian hex, bit-exact."""
    layers = []
    for layer in net.layers:
        entry = {
            "in": layer.in_features,
            "out": layer.out_features,
            "activation": layer.activation,
            "batchnorm": layer.batchnorm,
            "weight": _encode(layer.weight),
            "bias": _encode(layer.bias),
        }
        if layer.batchnorm:
            for name in ("gamma", "beta", "running_mean", "running_var"):
                entry[name] = _encode(getattr(layer, name))
        layers.append(entry)
    return {
        "bn_momentum": net.bn_momentum.hex(),
        "bn_eps": net.bn_eps.hex(),
        "layers": layers,
    }


def network_from_dict(data: dict) -> DenseNetwork:
    layers = []
    for entry in data["layers"]:
        bn = entry["batchnorm"]
        layers.append(
            Layer(
                weight=_decode(entry["weight"]),
                bias=_decode(entry["bias"]),
                activation=entry["activation"],
                gamma=_decode(entry["gamma"]) if bn else None,
                beta=_decode(entry["beta"]) if bn else None,
                running_mean=_decode(entry["running_mean"]) if bn else None,
                running_var=_decode(entry["running_var"]) if bn else None,
            )
        )
    return DenseNetwork(
        layers,
        bn_momentum=float.fromhex(data["bn_momentum"]),
        bn_eps=float.fromhex(data["bn_eps"]),
    )
