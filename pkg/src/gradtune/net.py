"""Feed-forward multi-head network: forward pass, loss, regularisers, gradients.

Layer k holds a weight matrix of shape (width[k-1], width[k]) and a bias of
length width[k]; every head maps the last hidden layer to its own class
count.  Hidden activations are ReLU, head outputs are softmax, and all
parameters are float64.

Weight initialisation is Glorot-style uniform over
[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))] with zero biases.
Dropout is inverted dropout on hidden-layer outputs (never on the input):
surviving activations are scaled by 1/(1-rate) at train time so eval mode
needs no rescaling.  The default rates drop 20% of the first hidden layer
and 50% of every later one.  L1 regularisation penalises weights only,
never biases.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng

CHECKPOINT_MAGIC = b"GTCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"invalid architecture: input={self.input_dim} hidden={self.hidden}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (int(self.input_dim),) + self.hidden


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray


@dataclass
class Head:
    W: np.ndarray
    b: np.ndarray
    classes: int


@dataclass
class Network:
    arch: Architecture
    layers: list[Layer]
    heads: dict[int, Head] = field(default_factory=dict)

    @property
    def last_width(self) -> int:
        return self.arch.hidden[-1]


@dataclass(frozen=True)
class RegConfig:
    """Regularisation switch: kind is one of none / l1 / dropout."""

    kind: str = "none"
    l1_lambda: float = 0.0
    drop_rates: tuple[float, ...] | None = None  # per hidden layer; None = default policy

    def __post_init__(self):
        if self.kind not in ("none", "l1", "dropout"):
            raise ValueError(f"unknown regularisation kind {self.kind!r}")

    @staticmethod
    def none() -> "RegConfig":
        return RegConfig("none")

    @staticmethod
    def l1(lambda1: float = 1e-4) -> "RegConfig":
        return RegConfig("l1", l1_lambda=lambda1)

    @staticmethod
    def dropout(rates: tuple[float, ...] | None = None) -> "RegConfig":
        return RegConfig("dropout", drop_rates=tuple(rates) if rates is not None else None)

    def rates_for(self, n_hidden: int) -> tuple[float, ...]:
        if self.kind != "dropout":
            return (0.0,) * n_hidden
        if self.drop_rates is not None:
            if len(self.drop_rates) != n_hidden:
                raise ValueError(
                    f"{len(self.drop_rates)} dropout rates for {n_hidden} hidden layers"
                )
            return self.drop_rates
        return (0.2,) + (0.5,) * (n_hidden - 1)


@dataclass
class ForwardCache:
    """Backprop bookkeeping for one forward call."""

    head: int
    mode: str
    inputs: np.ndarray
    pre: list[np.ndarray]          # per layer, before ReLU
    act: list[np.ndarray]          # per layer, after ReLU and dropout
    masks: list[np.ndarray | None]  # scaled dropout masks (entries 0 or 1/(1-rate))
    logits: np.ndarray
    probs: np.ndarray


@dataclass
class Gradients:
    """(dW, db) per body layer and per head, aligned with the network."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    heads: dict[int, tuple[np.ndarray, np.ndarray]]


def relu(x):
    return np.maximum(0.0, x)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the labelled class."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError(f"expected (n, classes) probs and (n,) labels, got {probs.shape} / {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"label out of range for {probs.shape[1]} classes")
    with np.errstate(divide="ignore"):
        return float(np.mean(-np.log(probs[np.arange(len(labels)), labels])))


def l1_penalty(net: Network, lambda1: float) -> float:
    """lambda1 times the summed |w| over all layer and head weights (no biases)."""
    if lambda1 < 0:
        raise ValueError("lambda1 must be >= 0")
    total = sum(float(np.abs(layer.W).sum()) for layer in net.layers)
    total += sum(float(np.abs(head.W).sum()) for head in net.heads.values())
    return lambda1 * total


def _init_weights(fan_in: int, fan_out: int, rng: SeededRng) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_block(fan_in * fan_out, -limit, limit).reshape(fan_in, fan_out)


def init_network(arch: Architecture, rng: SeededRng) -> Network:
    widths = arch.widths
    layers = [
        Layer(_init_weights(widths[k], widths[k + 1], rng), np.zeros(widths[k + 1]))
        for k in range(len(widths) - 1)
    ]
    return Network(arch, layers, {})


def attach_head(net: Network, classes: int, rng: SeededRng) -> int:
    """Add a fresh softmax head on the last hidden layer; returns its id."""
    if classes < 2:
        raise ValueError(f"a head needs >= 2 classes, got {classes}")
    head_id = len(net.heads)  # heads are never removed
    net.heads[head_id] = Head(
        _init_weights(net.last_width, classes, rng), np.zeros(classes), classes
    )
    return head_id


def forward(
    net: Network,
    head: int,
    batch: np.ndarray,
    mode: str = "eval",
    reg: RegConfig | None = None,
    rng: SeededRng | None = None,
    masks: list[np.ndarray | None] | None = None,
) -> ForwardCache:
    """Run the batch through the body and one head.

    ``masks`` overrides dropout mask sampling with the given scaled masks
    (used to re-evaluate the identical stochastic loss, e.g. for gradient
    checking).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if head not in net.heads:
        raise KeyError(f"unknown head id {head}; have {sorted(net.heads)}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.arch.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match input_dim {net.arch.input_dim}")
    reg = reg or RegConfig.none()
    rates = reg.rates_for(len(net.layers)) if mode == "train" else (0.0,) * len(net.layers)

    h = x
    pre: list[np.ndarray] = []
    act: list[np.ndarray] = []
    used: list[np.ndarray | None] = []
    for k, layer in enumerate(net.layers):
        z = h @ layer.W + layer.b
        r = np.maximum(0.0, z)
        m = None
        if rates[k] > 0.0:
            if masks is not None:
                m = masks[k]
            else:
                if rng is None:
                    raise ValueError("train-mode dropout needs an rng")
                keep = rng.uniform_block(r.size).reshape(r.shape) >= rates[k]
                m = keep.astype(np.float64) / (1.0 - rates[k])
            r = r * m
        pre.append(z)
        act.append(r)
        used.append(m)
        h = r
    hd = net.heads[head]
    logits = h @ hd.W + hd.b
    return ForwardCache(head, mode, x, pre, act, used, logits, softmax(logits))


def backward(
    net: Network,
    head: int,
    cache: ForwardCache,
    labels,
    reg: RegConfig | None = None,
    trainable=None,
) -> Gradients:
    """Gradients of (cross entropy + L1 penalty if enabled) for every parameter.

    ``trainable`` is a FreezeMask-like object (``layers`` flags, ``heads``
    id set); parameters outside it get exactly-zero gradient blocks.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = cache.probs.shape[0]
    if head != cache.head:
        raise ValueError(f"cache was built for head {cache.head}, not {head}")
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch of {n}")
    reg = reg or RegConfig.none()
    lam = reg.l1_lambda if reg.kind == "l1" else 0.0

    def layer_on(k: int) -> bool:
        return trainable is None or trainable.layers[k]

    def head_on(h: int) -> bool:
        return trainable is None or h in trainable.heads

    delta = cache.probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    head_grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for hid, hd in net.heads.items():
        if not head_on(hid):
            head_grads[hid] = (np.zeros_like(hd.W), np.zeros_like(hd.b))
            continue
        if hid == head:
            dW = cache.act[-1].T @ delta
            db = delta.sum(axis=0)
        else:
            dW = np.zeros_like(hd.W)
            db = np.zeros_like(hd.b)
        if lam:
            dW = dW + lam * np.sign(hd.W)
        head_grads[hid] = (dW, db)

    layer_grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(net.layers)
    lowest = next((k for k in range(len(net.layers)) if layer_on(k)), None)
    if lowest is not None:
        up = delta @ net.heads[head].W.T  # d loss / d act[-1]
        for k in range(len(net.layers) - 1, lowest - 1, -1):
            d = up * cache.masks[k] if cache.masks[k] is not None else up
            dz = d * (cache.pre[k] > 0.0)
            if layer_on(k):
                prev = cache.act[k - 1] if k > 0 else cache.inputs
                dW = prev.T @ dz
                if lam:
                    dW = dW + lam * np.sign(net.layers[k].W)
                layer_grads[k] = (dW, dz.sum(axis=0))
            if k > lowest:
                up = dz @ net.layers[k].W.T
    for k, layer in enumerate(net.layers):
        if layer_grads[k] is None:
            layer_grads[k] = (np.zeros_like(layer.W), np.zeros_like(layer.b))
    return Gradients(layer_grads, head_grads)


# --- checkpoint container ("GTCK") -----------------------------------------
#
# magic "GTCK" | u16 version | u32 ndims | ndims x u32 (input, hidden...)
# | u32 nheads | nheads x u32 class counts | parameters as little-endian
# float64: per layer W row-major then b, then per head (ascending id) W then
# b.  Round-trips are bit-exact.


def checkpoint_bytes(net: Network) -> bytes:
    dims = net.arch.widths
    head_ids = sorted(net.heads)
    out = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION)]
    out.append(struct.pack(f"<I{len(dims)}I", len(dims), *dims))
    out.append(struct.pack(f"<I{len(head_ids)}I" if head_ids else "<I",
                           len(head_ids), *(net.heads[h].classes for h in head_ids)))
    for layer in net.layers:
        out.append(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    for hid in head_ids:
        out.append(np.ascontiguousarray(net.heads[hid].W, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(net.heads[hid].b, dtype="<f8").tobytes())
    return b"".join(out)


def _read_checkpoint_header(data: bytes):
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (ndims,) = struct.unpack_from("<I", data, 6)
    dims = struct.unpack_from(f"<{ndims}I", data, 10)
    off = 10 + 4 * ndims
    (nheads,) = struct.unpack_from("<I", data, off)
    off += 4
    classes = struct.unpack_from(f"<{nheads}I", data, off)
    off += 4 * nheads
    return dims, classes, off


def network_from_checkpoint(data: bytes) -> Network:
    dims, classes, off = _read_checkpoint_header(data)

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
        off += 8 * count
        return arr.reshape(shape).copy()

    arch = Architecture(dims[0], tuple(dims[1:]))
    layers = [Layer(take((dims[k], dims[k + 1])), take((dims[k + 1],)))
              for k in range(len(dims) - 1)]
    heads = {i: Head(take((dims[-1], c)), take((c,)), c) for i, c in enumerate(classes)}
    if off != len(data):
        raise ValueError(f"checkpoint has {len(data) - off} trailing bytes")
    return Network(arch, layers, heads)


def restore_checkpoint_into(net: Network, data: bytes) -> None:
    """Copy checkpoint parameters into an existing network of the same shape."""
    src = network_from_checkpoint(data)
    if src.arch != net.arch or sorted(src.heads) != sorted(net.heads):
        raise ValueError("checkpoint does not match the network structure")
    for dst_layer, src_layer in zip(net.layers, src.layers):
        dst_layer.W[...] = src_layer.W
        dst_layer.b[...] = src_layer.b
    for hid, src_head in src.heads.items():
        net.heads[hid].W[...] = src_head.W
        net.heads[hid].b[...] = src_head.b


def save_checkpoint(net: Network, path) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(net))


def load_checkpoint(path) -> Network:
    with open(path, "rb") as f:
        return network_from_checkpoint(f.read())
