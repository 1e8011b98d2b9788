"""Network assembly from a JSON-serializable layer description.

A netspec is a plain dict::

    {"input_channels": 1, "input_len": 2,
     "layers": [
        {"type": "conv", "filters": 32, "kernel": 3, "activation": "leaky_relu"},
        {"type": "dropout", "rate": 0.2},
        {"type": "flatten"},
        {"type": "dense", "width": 64, "activation": "leaky_relu"},
        {"type": "dense", "width": 2, "activation": "relu"},
     ]}

The two monitor architectures are produced by :func:`build_classifier_spec`
(classification head: final dense with a nonnegative activation whose two
outputs are normalized to class likelihoods by softmax downstream) and
:func:`build_estimator_spec` (sequence-regression head: final convolution
with tanh so reconstructed states stay in the scaled range [-1, 1]).
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .layers import Conv1D, Dense, Dropout, Flatten

_ACTIVATIONS = ("linear", "relu", "leaky_relu", "tanh")


def validate_netspec(spec: dict):
    """Check layer chaining and parameter ranges; raises ``ValueError``."""
    if "input_channels" not in spec or "input_len" not in spec:
        raise ValueError("netspec needs input_channels and input_len")
    shape = ("seq", spec["input_channels"], spec["input_len"])
    for i, layer in enumerate(spec["layers"]):
        kind = layer.get("type")
        if kind == "conv":
            if shape[0] != "seq":
                raise ValueError(f"layer {i}: conv after flatten")
            if layer["kernel"] % 2 == 0 or layer["kernel"] < 1:
                raise ValueError(f"layer {i}: kernel must be odd and positive")
            if layer.get("activation", "linear") not in _ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation")
            shape = ("seq", layer["filters"], shape[2])
        elif kind == "dense":
            if shape[0] != "flat":
                raise ValueError(f"layer {i}: dense requires flattened input")
            if layer.get("activation", "linear") not in _ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation")
            shape = ("flat", layer["width"])
        elif kind == "dropout":
            if not 0.0 <= layer["rate"] < 1.0:
                raise ValueError(f"layer {i}: dropout rate must be in [0, 1)")
        elif kind == "flatten":
            if shape[0] != "seq":
                raise ValueError(f"layer {i}: flatten after flatten")
            shape = ("flat", shape[1] * shape[2])
        else:
            raise ValueError(f"layer {i}: unknown layer type {kind!r}")
    return shape


class Network:
    """Feed-forward network with explicit reverse-mode gradients."""

    def __init__(self, spec: dict, seed: int = 0, dtype=np.float64):
        validate_netspec(spec)
        self.spec = spec
        self.dtype = dtype
        rng = np.random.default_rng([seed, 0x4E45])
        self.layers = []
        channels, length = spec["input_channels"], spec["input_len"]
        flat = None
        for layer in spec["layers"]:
            kind = layer["type"]
            if kind == "conv":
                self.layers.append(Conv1D(channels, layer["filters"],
                                          layer["kernel"],
                                          layer.get("activation", "linear"),
                                          rng, dtype))
                channels = layer["filters"]
            elif kind == "dense":
                self.layers.append(Dense(flat, layer["width"],
                                         layer.get("activation", "linear"),
                                         rng, dtype,
                                         bias_init=layer.get("bias_init", 0.0)))
                flat = layer["width"]
            elif kind == "dropout":
                self.layers.append(Dropout(layer["rate"]))
            elif kind == "flatten":
                self.layers.append(Flatten())
                flat = channels * length

    def forward(self, x, train: bool = False, rng=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] != self.spec["input_channels"] \
                or x.shape[2] != self.spec["input_len"]:
            raise ShapeError(
                f"input shape {x.shape} does not match netspec "
                f"(B, {self.spec['input_channels']}, {self.spec['input_len']})")
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def get_weights(self):
        return [p.copy() for p in self.params]

    def set_weights(self, weights):
        for p, w in zip(self.params, weights, strict=True):
            if p.shape != w.shape:
                raise ShapeError("weight shape mismatch")
            p[...] = w

    def n_params(self):
        return sum(p.size for p in self.params)


def build_classifier_spec(in_channels: int, length: int, profile: str = "desk",
                          seed_spec: dict | None = None) -> dict:
    """Safety-label classifier over a window of ``in_channels`` x ``length``."""
    if profile == "paper":
        convs, filters, kernel, dense_width = 4, 128, 3, 100
    elif profile == "desk":
        convs, filters, kernel, dense_width = 2, 32, 3, 64
    else:
        raise ValueError(f"unknown profile {profile!r}")
    layers = []
    for _ in range(convs):
        layers.append({"type": "conv", "filters": filters, "kernel": kernel,
                       "activation": "leaky_relu"})
        layers.append({"type": "dropout", "rate": 0.2})
    layers.append({"type": "flatten"})
    layers.append({"type": "dense", "width": dense_width, "activation": "leaky_relu"})
    # Nonnegative two-output head; small positive bias keeps both score
    # channels initially active under the relu clamp.
    layers.append({"type": "dense", "width": 2, "activation": "relu",
                   "bias_init": 0.1})
    return {"input_channels": in_channels, "input_len": length, "layers": layers}


def build_estimator_spec(in_channels: int, out_channels: int, length: int,
                         profile: str = "desk") -> dict:
    """State-sequence regressor (observation window -> state window)."""
    if profile == "paper":
        convs, filters, kernel = 4, 128, 5
    elif profile == "desk":
        convs, filters, kernel = 2, 32, 5
    else:
        raise ValueError(f"unknown profile {profile!r}")
    layers = []
    for _ in range(convs):
        layers.append({"type": "conv", "filters": filters, "kernel": kernel,
                       "activation": "leaky_relu"})
        layers.append({"type": "dropout", "rate": 0.2})
    layers.append({"type": "conv", "filters": out_channels, "kernel": kernel,
                   "activation": "tanh"})
    return {"input_channels": in_channels, "input_len": length, "layers": layers}
