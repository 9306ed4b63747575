"""ANN-to-SNN conversion: weight rescaling, bias correction, thresholds.

A trained (and already batch-norm-folded) reference network becomes a spiking
network by scaling every weight with t/t_q, correcting each bias for the
window's lower rail, and giving every hidden layer the uniform firing
threshold t/t_q. The lower-rail subtraction is realized as a per-time-step
additive constant stored next to the bias.

Decoding maps a spike count back to its grid value: count/t_q + t_min/t_q.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .network import MODE_ANN, MODE_SNN, Layer, NetworkSpec
from .quantize import VRConfig
from .tensor import KIND_AVGPOOL, Tensor

__all__ = [
    "convert_weights",
    "convert_bias",
    "layer_threshold",
    "step_constant",
    "convert_network",
    "decode_spike_counts",
]


def convert_weights(w: Tensor, cfg: VRConfig) -> Tensor:
    """Scale every weight by t/t_q."""
    return Tensor(w.data * (cfg.t / cfg.t_q))


def convert_bias(b, w: Tensor, cfg: VRConfig) -> np.ndarray:
    """Correct the bias for the window's lower rail.

    ``w`` must be the original, unscaled weight tensor: each output channel's
    bias gains t_min/t_q times the sum of all weights feeding that channel.
    """
    b = np.asarray(b, dtype=np.float64)
    channel_sums = w.data.sum(axis=(1, 2, 3))
    if b.shape != channel_sums.shape:
        raise ValueError(
            f"bias length {b.size} does not match weight out_channels {channel_sums.size}"
        )
    return b + cfg.lower * channel_sums


def layer_threshold(cfg: VRConfig) -> float:
    """Uniform firing threshold (t_max - t_min)/t_q assigned at conversion."""
    return cfg.theta


def step_constant(b_hat, cfg: VRConfig) -> np.ndarray:
    """Per-time-step additive term: corrected bias minus the lower rail."""
    return np.asarray(b_hat, dtype=np.float64) - cfg.lower


def convert_network(ann: NetworkSpec) -> NetworkSpec:
    """Transform an ANN-mode network into its spiking twin.

    Hidden layers get scaled weights, corrected biases, the uniform threshold
    and a per-step constant. The classifier keeps no threshold: it accumulates
    real-valued potential over the window instead of firing. Average-pooling
    layers have no stored weights; their taps pick up the same t/t_q rescale
    inside the engine, and their weight sum of one makes the bias correction
    cancel the rail subtraction exactly (step constant zero).
    """
    ann.validate()
    if ann.mode != MODE_ANN:
        raise ValueError(f"expected an ANN-mode network, got mode {ann.mode!r}")
    if ann.cfg is None:
        raise ValueError("network has no quantization cfg; attach one before converting")
    cfg = ann.cfg
    theta = layer_threshold(cfg)
    last = len(ann.layers) - 1
    converted: list[Layer] = []
    for idx, layer in enumerate(ann.layers):
        if layer.bn is not None:
            raise ValueError(f"layer {idx} still has raw batch norm; fold before converting")
        thresholds = np.full(layer.out_channels, theta) if idx != last else None
        if layer.geometry.kind == KIND_AVGPOOL:
            new = replace(
                layer,
                thresholds=thresholds,
                step_constant=np.zeros(layer.out_channels),
            )
        else:
            w_hat = convert_weights(layer.weights, cfg)
            b_hat = convert_bias(layer.bias, layer.weights, cfg)
            new = replace(
                layer,
                weights=w_hat,
                bias=b_hat,
                thresholds=thresholds,
                step_constant=step_constant(b_hat, cfg),
            )
        converted.append(new)
    return NetworkSpec(layers=converted, cfg=cfg, mode=MODE_SNN)


def decode_spike_counts(counts, cfg: VRConfig) -> np.ndarray:
    """Map window spike counts back onto the activation grid."""
    return np.asarray(counts, dtype=np.float64) / cfg.t_q + cfg.lower
