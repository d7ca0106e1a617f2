"""CNN layer descriptions, parameter containers, forward and backward passes."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import store
from . import layers as L

CNN_KINDS = {
    "cnn1d_spv": (42, 1),
    "cnn1d_csp": (6, 1),
    "cnn1d_raw": (640, 14),
    "cnn2d": (32, 32, 3),
    "cnn3d": (5, 32, 32, 3),
}
CONV_FILTERS = (16, 32, 32)
DENSE_UNITS = 128


class NetworkError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str            # conv | avgpool | act | flatten | batchnorm | dense | dropout | softmax
    name: str = ""
    activation: str = ""
    filters: int = 0
    kernel: int = 3
    stride: int = 1
    size: int = 2
    units: int = 0
    rate: float = 0.0


@dataclass(frozen=True)
class NetworkSpec:
    kind: str
    input_shape: tuple
    n_classes: int
    layers: tuple

    def output_shapes(self) -> list[tuple]:
        """Per-layer output shape (batch axis omitted), checking the chain."""
        shape = tuple(self.input_shape)
        shapes = []
        for ly in self.layers:
            if ly.kind == "conv":
                shape = L.conv_output_shape(shape[:-1], ly.kernel, ly.stride) + (ly.filters,)
            elif ly.kind == "avgpool":
                shape = L.pool_output_shape(shape[:-1], ly.size) + (shape[-1],)
            elif ly.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif ly.kind == "dense":
                if len(shape) != 1:
                    raise NetworkError(f"{ly.name}: dense layer needs flat input, got {shape}")
                shape = (ly.units,)
            elif ly.kind == "batchnorm" and len(shape) != 1:
                raise NetworkError(f"{ly.name}: batch norm expects flattened features")
            shapes.append(shape)
        if shapes[-1] != (self.n_classes,):
            raise NetworkError(f"final width {shapes[-1]} != {self.n_classes} classes")
        return shapes

    def table_rows(self) -> list[tuple[str, tuple]]:
        """Named layers (conv, pool, flatten, batch norm, dense, softmax) with their shapes."""
        out, shapes = [], self.output_shapes()
        for i, (ly, sh) in enumerate(zip(self.layers, shapes)):
            if ly.kind in ("act", "dropout"):
                continue
            if ly.kind == "dense" and i + 1 < len(self.layers) and self.layers[i + 1].kind == "softmax":
                continue
            out.append((ly.name, sh))
        return out

    def with_dropout(self, rate: float) -> "NetworkSpec":
        return replace(self, layers=tuple(replace(ly, rate=rate) if ly.kind == "dropout" else ly
                                          for ly in self.layers))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "input_shape": list(self.input_shape),
                "n_classes": self.n_classes, "layers": [asdict(ly) for ly in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(d["kind"], tuple(d["input_shape"]), d["n_classes"],
                   tuple(LayerSpec(**ly) for ly in d["layers"]))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def build_cnn(kind: str, n_classes: int, dropout: float = 0.25, stride: int = 1,
              activation: str = "tanh") -> NetworkSpec:
    """Three conv/activation/avg-pool stages, flatten, batch norm, dense-128, dropout, softmax.

    ``stride=3`` convolves with stride 3; its shapes no longer follow the
    reference dimension table.
    """
    if kind not in CNN_KINDS:
        raise NetworkError(f"unknown network kind {kind!r}; choose from {sorted(CNN_KINDS)}")
    if n_classes < 2:
        raise NetworkError("need at least 2 classes")
    if activation not in L.ACTIVATIONS:
        raise NetworkError(f"unknown activation {activation!r}")
    layers = []
    for i, f in enumerate(CONV_FILTERS, start=1):
        layers += [LayerSpec("conv", f"conv{i}", filters=f, kernel=3, stride=stride),
                   LayerSpec("act", f"act{i}", activation=activation),
                   LayerSpec("avgpool", f"pool{i}", size=2)]
    layers += [LayerSpec("flatten", "flatten"),
               LayerSpec("batchnorm", "bn"),
               LayerSpec("dense", "fc", units=DENSE_UNITS),
               LayerSpec("act", "act_fc", activation=activation),
               LayerSpec("dropout", "dropout", rate=dropout),
               LayerSpec("dense", "out", units=n_classes),
               LayerSpec("softmax", "softmax")]
    spec = NetworkSpec(kind, CNN_KINDS[kind], n_classes, tuple(layers))
    spec.output_shapes()
    return spec


@dataclass
class Network:
    spec: NetworkSpec
    params: dict
    state: dict                      # batch-norm running statistics
    dtype: np.dtype = field(default_factory=lambda: np.dtype(np.float32))

    def astype(self, dtype) -> "Network":
        dt = np.dtype(dtype)
        return Network(self.spec, {k: v.astype(dt) for k, v in self.params.items()},
                       {k: v.astype(dt) for k, v in self.state.items()}, dt)

    def copy(self) -> "Network":
        return self.astype(self.dtype)

    def to_bytes(self, log: list | None = None) -> bytes:
        tensors = {f"param/{k}": v for k, v in sorted(self.params.items())}
        tensors.update({f"state/{k}": v for k, v in sorted(self.state.items())})
        meta = {"spec_digest": self.spec.digest(), "spec": self.spec.to_dict(),
                "dtype": self.dtype.name, "log": log or []}
        return store.pack("network", tensors, meta)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Network":
        kind, tensors, meta = store.unpack(data)
        if kind != "network":
            raise store.StoreError(f"expected network container, got {kind}")
        spec = NetworkSpec.from_dict(meta["spec"])
        params = {k[6:]: v for k, v in tensors.items() if k.startswith("param/")}
        state = {k[6:]: v for k, v in tensors.items() if k.startswith("state/")}
        return cls(spec, params, state, np.dtype(meta["dtype"]))


def _fan_in_gain(spec: NetworkSpec) -> float:
    # He scaling for rectifiers, LeCun scaling for saturating or exponential units
    acts = {ly.activation for ly in spec.layers if ly.kind == "act"}
    return 6.0 if acts == {"relu"} else 3.0


def init_network(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> Network:
    """Fan-in scaled uniform weights, zero biases, batch-norm scale 1 / shift 0."""
    rng = np.random.default_rng(seed)
    gain = _fan_in_gain(spec)
    dt = np.dtype(dtype)
    params, state = {}, {}
    shape = tuple(spec.input_shape)
    for ly, out in zip(spec.layers, spec.output_shapes()):
        if ly.kind == "conv":
            rank = len(shape) - 1
            c_in = shape[-1]
            fan_in = ly.kernel ** rank * c_in
            lim = np.sqrt(gain / fan_in)
            params[f"{ly.name}.W"] = rng.uniform(-lim, lim, (ly.kernel,) * rank + (c_in, ly.filters))
            params[f"{ly.name}.b"] = np.zeros(ly.filters)
        elif ly.kind == "dense":
            lim = np.sqrt(gain / shape[0])
            params[f"{ly.name}.W"] = rng.uniform(-lim, lim, (shape[0], ly.units))
            params[f"{ly.name}.b"] = np.zeros(ly.units)
        elif ly.kind == "batchnorm":
            params[f"{ly.name}.gamma"] = np.ones(shape[0])
            params[f"{ly.name}.beta"] = np.zeros(shape[0])
            state[f"{ly.name}.mean"] = np.zeros(shape[0])
            state[f"{ly.name}.var"] = np.ones(shape[0])
        shape = out
    return Network(spec, {k: v.astype(dt) for k, v in params.items()},
                   {k: v.astype(dt) for k, v in state.items()}, dt)


BN_MOMENTUM = 0.9


def forward(net: Network, batch: np.ndarray, mode: str = "infer",
            rng: np.random.Generator | None = None, update_running: bool = False):
    """Return (class probabilities, cache). `mode` is 'train' or 'infer'."""
    if mode not in ("train", "infer"):
        raise NetworkError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(batch, dtype=net.dtype)
    if x.shape[1:] != tuple(net.spec.input_shape):
        raise NetworkError(f"batch shape {x.shape[1:]} != network input {net.spec.input_shape}")
    train = mode == "train"
    if train and rng is None:
        rng = np.random.default_rng(0)
    caches = []
    p = net.params
    for ly in net.spec.layers:
        if ly.kind == "conv":
            x, c = L.conv_forward(x, p[f"{ly.name}.W"], p[f"{ly.name}.b"], ly.stride)
        elif ly.kind == "act":
            x, c = L.activation_forward(x, ly.activation)
        elif ly.kind == "avgpool":
            x, c = L.avgpool_forward(x, ly.size)
        elif ly.kind == "flatten":
            c = x.shape
            x = x.reshape(x.shape[0], -1)
        elif ly.kind == "batchnorm":
            x, c = L.batchnorm_forward(x, p[f"{ly.name}.gamma"], p[f"{ly.name}.beta"],
                                       net.state[f"{ly.name}.mean"], net.state[f"{ly.name}.var"],
                                       train)
            if train and update_running:
                m = net.dtype.type(BN_MOMENTUM)
                net.state[f"{ly.name}.mean"] = m * net.state[f"{ly.name}.mean"] + (1 - m) * c[3]
                net.state[f"{ly.name}.var"] = m * net.state[f"{ly.name}.var"] + (1 - m) * c[4]
        elif ly.kind == "dense":
            x, c = L.dense_forward(x, p[f"{ly.name}.W"], p[f"{ly.name}.b"])
        elif ly.kind == "dropout":
            if train and ly.rate > 0:
                c = L.dropout_mask(x.shape, ly.rate, rng, x.dtype)
                x = x * c
            else:
                c = None
        elif ly.kind == "softmax":
            x, c = L.softmax(x), None
        else:
            raise NetworkError(f"unknown layer kind {ly.kind!r}")
        caches.append(c)
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite activations in forward pass")
    return x, {"layers": caches, "probs": x, "mode": mode}


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean categorical cross-entropy; targets are one-hot rows."""
    tiny = np.finfo(probs.dtype).tiny
    return float(-(targets * np.log(np.maximum(probs, tiny))).sum() / len(probs))


def backward(net: Network, cache: dict, targets: np.ndarray) -> dict:
    """Gradients of the mean cross-entropy w.r.t. every parameter."""
    probs = cache["probs"]
    targets = np.asarray(targets, dtype=probs.dtype)
    dx = (probs - targets) / probs.dtype.type(len(probs))
    grads = {}
    p = net.params
    layer_list = net.spec.layers
    for ly, c in zip(reversed(layer_list), reversed(cache["layers"])):
        if ly.kind == "softmax":
            continue                          # folded into (probs - targets)
        if ly.kind == "dense":
            dx, grads[f"{ly.name}.W"], grads[f"{ly.name}.b"] = L.dense_backward(dx, c, p[f"{ly.name}.W"])
        elif ly.kind == "dropout":
            if c is not None:
                dx = dx * c
        elif ly.kind == "batchnorm":
            dx, grads[f"{ly.name}.gamma"], grads[f"{ly.name}.beta"] = L.batchnorm_backward(dx, c)
        elif ly.kind == "flatten":
            dx = dx.reshape(c)
        elif ly.kind == "avgpool":
            dx = L.avgpool_backward(dx, c)
        elif ly.kind == "act":
            dx = L.activation_backward(dx, c)
        elif ly.kind == "conv":
            dx, grads[f"{ly.name}.W"], grads[f"{ly.name}.b"] = L.conv_backward(dx, c)
    return grads


def loss_fn(net: Network, X: np.ndarray, Y: np.ndarray, seed: int = 0) -> float:
    """Train-mode loss with a fixed dropout mask (same seed -> same mask)."""
    probs, _ = forward(net, X, "train", rng=np.random.default_rng(seed))
    return cross_entropy(probs, Y)


def predict_proba(net: Network, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
    X = np.asarray(X)
    if len(X) == 0:
        return np.zeros((0, net.spec.n_classes))
    return np.concatenate([forward(net, X[s:s + batch_size], "infer")[0]
                           for s in range(0, len(X), batch_size)])
