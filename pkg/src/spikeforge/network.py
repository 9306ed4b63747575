"""Network description shared by the ANN reference path and the spiking engines."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .quantize import BatchNormParams, VRConfig, clamp, fold_batchnorm, quantize
from .tensor import (
    KIND_CONV,
    KIND_DENSE,
    LayerGeometry,
    Tensor,
    avgpool_forward,
    conv2d_forward,
    dense_forward,
)

__all__ = ["MODE_ANN", "MODE_SNN", "Layer", "NetworkSpec", "linear_forward", "fold_network", "ann_forward"]

MODE_ANN = "ann"
MODE_SNN = "snn"


@dataclass
class Layer:
    """One layer of a network: geometry plus whatever parameters its kind needs.

    Conv and dense layers carry weights and bias; pooling carries neither.
    ``thresholds`` and ``step_constant`` are per-output-channel vectors that
    exist only on converted (spiking) layers: the firing threshold and the
    additive term applied once per time step.
    """

    geometry: LayerGeometry
    weights: Tensor | None = None
    bias: np.ndarray | None = None
    bn: BatchNormParams | None = None
    thresholds: np.ndarray | None = None
    step_constant: np.ndarray | None = None

    def __post_init__(self) -> None:
        kind = self.geometry.kind
        if kind in (KIND_CONV, KIND_DENSE):
            if self.weights is None or self.bias is None:
                raise ValueError(f"{kind} layer requires weights and bias")
            self.bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
            if self.bias.shape != (self.geometry.out_channels,):
                raise ValueError(
                    f"bias length {self.bias.size} does not match out_channels "
                    f"{self.geometry.out_channels}"
                )
        else:
            if self.weights is not None or self.bias is not None:
                raise ValueError("pooling layers take no weights or bias")
            if self.bn is not None:
                raise ValueError("pooling layers take no batch norm")
        for name in ("thresholds", "step_constant"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = np.ascontiguousarray(np.asarray(vec, dtype=np.float64))
            if vec.shape != (self.geometry.out_channels,):
                raise ValueError(
                    f"{name} length {vec.size} does not match out_channels "
                    f"{self.geometry.out_channels}"
                )
            setattr(self, name, vec)
        if self.thresholds is not None and np.any(self.thresholds <= 0):
            raise ValueError("thresholds must be strictly positive")

    @property
    def out_channels(self) -> int:
        return self.geometry.out_channels


@dataclass
class NetworkSpec:
    """Ordered layers plus the quantization window and a mode flag.

    The final layer is the classifier: it is never clamped or quantized in ANN
    mode and never fires in SNN mode (it accumulates potential instead). ANN
    networks may carry no cfg until one is chosen at conversion time.
    """

    layers: list[Layer]
    cfg: VRConfig | None
    mode: str = MODE_ANN

    def validate(self) -> None:
        if self.mode not in (MODE_ANN, MODE_SNN):
            raise ValueError(f"unknown network mode {self.mode!r}")
        if not self.layers:
            raise ValueError("network has no layers")
        if self.mode == MODE_SNN:
            if self.cfg is None:
                raise ValueError("SNN network requires a quantization cfg")
            for idx, layer in enumerate(self.layers[:-1]):
                if layer.thresholds is None or layer.step_constant is None:
                    raise ValueError(
                        f"spiking layer {idx} is missing thresholds or step constants"
                    )
            if self.layers[-1].step_constant is None:
                raise ValueError("classifier layer is missing its step constant")

    @property
    def classifier(self) -> Layer:
        return self.layers[-1]


def linear_forward(layer: Layer, x: Tensor) -> Tensor:
    """Apply the layer's linear operation (no activation, no batch norm)."""
    kind = layer.geometry.kind
    if kind == KIND_CONV:
        return conv2d_forward(x, layer.weights, layer.bias, layer.geometry)
    if kind == KIND_DENSE:
        return dense_forward(x, layer.weights, layer.bias)
    return avgpool_forward(x, layer.geometry.kernel, layer.geometry.stride)


def fold_network(net: NetworkSpec) -> NetworkSpec:
    """Return a copy of the network with every batch norm folded away."""
    folded = []
    for idx, layer in enumerate(net.layers):
        if layer.bn is None:
            folded.append(replace(layer))
            continue
        if layer.weights is None:
            raise ValueError(f"layer {idx} has batch norm but no weights to fold into")
        w, b = fold_batchnorm(layer.weights, layer.bias, layer.bn)
        folded.append(replace(layer, weights=w, bias=b, bn=None))
    return NetworkSpec(layers=folded, cfg=net.cfg, mode=net.mode)


def _vr_linear(layer: Layer, x: Tensor, cfg: VRConfig) -> Tensor:
    """Layer's linear op on the value-range grid.

    Convolution padding carries the grid's resting value t_min/t_q (what zero
    spikes decode to) rather than literal zero; the two coincide whenever
    t_min is 0. Padding with the rail is computed by shifting the input down
    by the rail, zero-padding, and folding the shift into the bias.
    """
    g = layer.geometry
    if g.kind == KIND_CONV and g.padding > 0 and cfg.t_min > 0:
        shifted = Tensor(x.data - cfg.lower)
        rail_bias = layer.bias + cfg.lower * layer.weights.data.sum(axis=(1, 2, 3))
        return conv2d_forward(shifted, layer.weights, rail_bias, g)
    return linear_forward(layer, x)


def ann_forward(net: NetworkSpec, input: Tensor, cfg: VRConfig) -> Tensor:
    """Evaluate the quantized reference network on a grid input.

    Every hidden layer runs linear op, clamp, then quantize, so hidden
    activations stay on the grid exactly. The classifier's output is returned
    raw (no clamp or quantize), ready for argmax.
    """
    net.validate()
    x = input
    last = len(net.layers) - 1
    for idx, layer in enumerate(net.layers):
        if layer.bn is not None:
            raise ValueError(f"layer {idx} still has raw batch norm; fold it first")
        x = _vr_linear(layer, x, cfg)
        if idx != last:
            x = quantize(clamp(x, cfg), cfg)
    return x
