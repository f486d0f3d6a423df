"""Feedforward networks and their sign-split bracketing twins.

A network maps ``eta_0`` to ``eta_L`` through ``eta_l = phi_l(W_l eta_{l-1} + b_l)``.
Splitting every ``W_l`` into its negative part ``W_neg`` and nonnegative part
``W_pos`` gives two coupled recursions whose outputs enclose the network's
output for every input inside a box, as long as each activation is
monotone non-decreasing.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._backend import kernels


class Activation(enum.Enum):
    PURELIN = "purelin"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"

    @property
    def lipschitz_alpha(self) -> float:
        return 0.25 if self is Activation.SIGMOID else 1.0

    @property
    def code(self) -> int:
        return _CODES[self]

    def __call__(self, z):
        z = np.asarray(z, dtype=np.float64)
        if self is Activation.TANH:
            return np.tanh(z)
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.SIGMOID:
            return 1.0 / (1.0 + np.exp(-z))
        return z


_CODES = {Activation.PURELIN: 0, Activation.RELU: 1, Activation.TANH: 2, Activation.SIGMOID: 3}


class NetworkError(ValueError):
    """Malformed network or input of the wrong shape."""


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        w = _frozen(self.weight)
        b = _frozen(self.bias).reshape(-1)
        if w.ndim != 2:
            raise NetworkError(f"weight must be a matrix, got shape {w.shape}")
        if w.shape[0] != b.shape[0]:
            raise NetworkError(f"weight has {w.shape[0]} rows but bias has {b.shape[0]} entries")
        act = self.activation
        if not isinstance(act, Activation):
            try:
                act = Activation(act)
            except ValueError:
                raise NetworkError(f"unknown activation {act!r}") from None
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", act)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True, eq=False)
class IntervalVector:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(self.lower).reshape(-1)
        hi = _frozen(self.upper).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("interval bounds must have the same length")
        if np.any(lo > hi):
            raise ValueError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __len__(self):
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, slack: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(self.lower - slack <= x) and np.all(x <= self.upper + slack))


@dataclass(frozen=True, eq=False)
class NeuralNetwork:
    layers: tuple[Layer, ...]
    _packed: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise NetworkError("a network needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].in_dim != layers[k - 1].out_dim:
                raise NetworkError(
                    f"layer {k + 1} expects {layers[k].in_dim} inputs but layer {k} "
                    f"produces {layers[k - 1].out_dim}"
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "_packed", _pack(layers))

    @classmethod
    def from_arrays(cls, weights: Sequence, biases: Sequence, activations: Sequence) -> "NeuralNetwork":
        if not (len(weights) == len(biases) == len(activations)):
            raise NetworkError("weights, biases and activations must have equal length")
        return cls(tuple(Layer(w, b, a) for w, b, a in zip(weights, biases, activations)))

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)

    def with_output_layer(self, weight, activation=Activation.PURELIN) -> "NeuralNetwork":
        """Append a bias-free layer, e.g. to embed the output into state channels."""
        weight = np.asarray(weight, dtype=np.float64)
        return NeuralNetwork(self.layers + (Layer(weight, np.zeros(weight.shape[0]), activation),))


def _pack(layers):
    packed = []
    for layer in layers:
        wn, wp = split_weights(layer.weight)
        packed.append((layer.weight, wn, wp, layer.bias, layer.activation.code))
    return packed


def _check_input(nn: NeuralNetwork, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != nn.input_dim:
        raise NetworkError(f"network expects {nn.input_dim} inputs, got {x.shape[0]}")
    return x


def forward(nn: NeuralNetwork, x) -> np.ndarray:
    return kernels.forward(nn._packed, _check_input(nn, x))


def forward_batch(nn: NeuralNetwork, xs) -> np.ndarray:
    """Evaluate on a ``(n_samples, n_0)`` array, one output row per sample."""
    cur = np.asarray(xs, dtype=np.float64)
    if cur.ndim != 2 or cur.shape[1] != nn.input_dim:
        raise NetworkError(f"expected an (n, {nn.input_dim}) batch, got shape {cur.shape}")
    for layer in nn.layers:
        cur = layer.activation(cur @ layer.weight.T + layer.bias)
    return cur


def split_weights(w) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(W_neg, W_pos)``; zeros land in ``W_pos`` and the sum is exact."""
    w = np.asarray(w, dtype=np.float64)
    neg = _frozen(np.where(w < 0, w, 0.0))
    pos = _frozen(np.where(w >= 0, w, 0.0))
    return neg, pos


@dataclass(frozen=True, eq=False)
class SplitLayer:
    w_lower: np.ndarray
    w_upper: np.ndarray
    bias: np.ndarray
    activation: Activation


@dataclass(frozen=True, eq=False)
class AuxiliaryPair:
    """The lower/upper bracketing networks built from one source network."""

    source: NeuralNetwork
    split_layers: tuple[SplitLayer, ...]

    @property
    def input_dim(self) -> int:
        return self.source.input_dim

    @property
    def output_dim(self) -> int:
        return self.source.output_dim


def make_auxiliary_pair(nn: NeuralNetwork) -> AuxiliaryPair:
    split = tuple(
        SplitLayer(wn, wp, b, layer.activation)
        for layer, (_, wn, wp, b, _) in zip(nn.layers, nn._packed)
    )
    return AuxiliaryPair(nn, split)


def interval_forward(pair: AuxiliaryPair, box: IntervalVector) -> IntervalVector:
    if len(box) != pair.input_dim:
        raise NetworkError(f"network expects {pair.input_dim} inputs, got a box of length {len(box)}")
    lo, hi = kernels.interval_forward(pair.source._packed, box.lower, box.upper)
    return IntervalVector(lo, hi)


def interval_forward_raw(pair: AuxiliaryPair, lo: np.ndarray, hi: np.ndarray):
    """Unchecked ``(lower, upper)`` arrays variant used inside integrators."""
    return kernels.interval_forward(pair.source._packed, lo, hi)


def lipschitz_bound(nn: NeuralNetwork) -> float:
    return max(layer.activation.lipschitz_alpha for layer in nn.layers)


# -- network documents --------------------------------------------------------

def _matrix(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise NetworkError(f"{where}: weights must be a non-empty list of rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise NetworkError(f"{where}: ragged weight array (row lengths {sorted(widths)})")
    try:
        return np.array(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"{where}: non-numeric weight entry") from exc


def network_from_dict(doc: dict) -> NeuralNetwork:
    if not isinstance(doc, dict) or set(doc) != {"layers"}:
        raise NetworkError('network document must be an object with exactly the key "layers"')
    layers = []
    for k, entry in enumerate(doc["layers"]):
        where = f"layers[{k}]"
        if not isinstance(entry, dict) or set(entry) != {"activation", "weights", "bias"}:
            raise NetworkError(f'{where}: expected keys "activation", "weights", "bias"')
        w = _matrix(entry["weights"], where)
        bias = entry["bias"]
        if not isinstance(bias, list) or any(isinstance(b, list) for b in bias):
            raise NetworkError(f"{where}: bias must be a flat list")
        layers.append(Layer(w, np.array(bias, dtype=np.float64), entry["activation"]))
    return NeuralNetwork(tuple(layers))


def network_to_dict(nn: NeuralNetwork) -> dict:
    return {
        "layers": [
            {
                "activation": layer.activation.value,
                "weights": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in nn.layers
        ]
    }


def load_network(path) -> NeuralNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))


def save_network(nn: NeuralNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(nn), indent=2))
