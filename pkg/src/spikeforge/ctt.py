"""Channel-wise threshold training for the standard IF model.

The averaging model needs the whole window buffered before it fires, which
deployment targets may not afford. Threshold training narrows the gap the
cheap way: per output channel, nudge the standard IF threshold until the
layer's window spike count tracks what the averaging oracle produces on the
same inputs.

Layers are trained greedily front to back. Each layer's training inputs are
the spike trains produced by the standard IF pass through the layers already
trained, which is exactly what the layer will see at deployment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import asg_layer, encode_input, if_layer_train
from .network import MODE_SNN, Layer, NetworkSpec
from .quantize import VRConfig
from .tensor import SpikeTrain, Tensor

__all__ = ["THETA_FLOOR", "CttConfig", "ThresholdMap", "ctt_loss", "ctt_update", "ctt_train"]

# Thresholds never drop below this during updates.
THETA_FLOOR = 1e-6


@dataclass(frozen=True)
class CttConfig:
    """Training hyper-parameters.

    ``lr`` is interpreted per site: updates divide by the number of
    calibration items times the layer's spatial size, so the step taken for a
    given per-site count gap does not depend on batch or feature-map size.
    ``batch`` caps how many calibration inputs are used (None means all),
    and ``init_theta`` overrides the starting thresholds (None resumes from
    the layer's current ones, t/t_q on a freshly converted network).
    """

    lr: float = 1e-3
    epochs: int = 50
    batch: int | None = None
    init_theta: float | None = None

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not isinstance(self.epochs, (int, np.integer)) or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs!r}")
        if self.batch is not None and self.batch < 1:
            raise ValueError(f"batch must be positive when given, got {self.batch}")
        if self.init_theta is not None and not self.init_theta > 0:
            raise ValueError(f"init_theta must be positive, got {self.init_theta}")


@dataclass
class ThresholdMap:
    """Trained per-layer, per-channel thresholds plus the loss trajectory.

    ``loss_history[i]`` holds the mean absolute per-channel count gap for
    layer i at each evaluation, first entry before any update and last entry
    after the final one.
    """

    thresholds: dict[int, np.ndarray] = field(default_factory=dict)
    loss_history: dict[int, list[float]] = field(default_factory=dict)

    def initial_mean_abs_loss(self) -> float:
        history = [h[0] for h in self.loss_history.values() if h]
        return float(np.mean(history)) if history else 0.0

    def final_mean_abs_loss(self) -> float:
        history = [h[-1] for h in self.loss_history.values() if h]
        return float(np.mean(history)) if history else 0.0


def ctt_loss(
    layer_input: SpikeTrain, layer: Layer, theta_if, cfg: VRConfig
) -> np.ndarray:
    """Per-channel count gap between the averaging oracle and standard IF.

    Both models consume the same input train; the oracle fires at the
    converted threshold t/t_q while IF fires at ``theta_if``. The result is
    the integer-valued difference of window spike totals, summed over batch
    and spatial sites, one entry per output channel.
    """
    theta_if = np.asarray(theta_if, dtype=np.float64)
    if theta_if.shape != (layer.out_channels,):
        raise ValueError(
            f"theta_if length {theta_if.size} does not match layer channels "
            f"{layer.out_channels}"
        )
    oracle = asg_layer(
        layer_input,
        layer.weights,
        layer.step_constant,
        cfg.theta,
        layer.geometry,
    )
    actual = if_layer_train(layer_input, layer, cfg, theta_if)
    per_channel_axes = (0, 1, 3, 4)  # sum over window, batch and space
    oracle_counts = oracle.bits.sum(axis=per_channel_axes, dtype=np.int64)
    actual_counts = actual.bits.sum(axis=per_channel_axes, dtype=np.int64)
    return oracle_counts - actual_counts


def ctt_update(theta, loss, cfg: CttConfig) -> np.ndarray:
    """One gradient-style step: theta' = max(floor, theta - lr * loss)."""
    theta = np.asarray(theta, dtype=np.float64)
    loss = np.asarray(loss, dtype=np.float64)
    return np.maximum(THETA_FLOOR, theta - cfg.lr * loss)


def ctt_train(net: NetworkSpec, calib: list[Tensor], cfg: CttConfig) -> ThresholdMap:
    """Train per-channel IF thresholds against the averaging oracle.

    Calibration inputs must lie on the network's quantization grid. Layers are
    trained one at a time, front to back; within a layer, one synchronized
    update per epoch is applied after a full pass over the calibration batch,
    with early exit once every channel's gap is zero. Trained thresholds are
    written back into the network and returned.
    """
    net.validate()
    if net.mode != MODE_SNN:
        raise ValueError(f"threshold training needs an SNN-mode network, got {net.mode!r}")
    if not calib:
        raise ValueError("calibration set is empty")
    vr = net.cfg
    batch = np.concatenate([t.data for t in calib], axis=0)
    if cfg.batch is not None:
        batch = batch[: cfg.batch]
    if batch.shape[0] == 0:
        raise ValueError("calibration set is empty")
    train = encode_input(Tensor(batch), vr)

    result = ThresholdMap()
    for idx, layer in enumerate(net.layers[:-1]):
        spatial = int(np.prod(_layer_output_shape(layer, train.shape)))
        site_scale = cfg.lr / (batch.shape[0] * spatial)
        per_site_cfg = CttConfig(lr=site_scale, epochs=cfg.epochs)
        if cfg.init_theta is not None:
            theta = np.full(layer.out_channels, float(cfg.init_theta))
        else:
            theta = layer.thresholds.copy()
        history: list[float] = []
        for _ in range(cfg.epochs):
            loss = ctt_loss(train, layer, theta, vr)
            history.append(float(np.mean(np.abs(loss))))
            if not loss.any():
                break
            theta = ctt_update(theta, loss, per_site_cfg)
        else:
            # record the state reached by the final update
            loss = ctt_loss(train, layer, theta, vr)
            history.append(float(np.mean(np.abs(loss))))
        layer.thresholds = theta
        result.thresholds[idx] = theta
        result.loss_history[idx] = history
        train = if_layer_train(train, layer, vr, theta)
    return result


def _layer_output_shape(layer: Layer, input_shape) -> tuple[int, int]:
    """Spatial (H, W) of the layer's output given its input plane shape."""
    _, _, h, w = input_shape
    g = layer.geometry
    if g.kind == "dense":
        return (1, 1)
    k, s, p = g.kernel, g.stride, g.padding
    if g.kind == "conv":
        return ((h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
    return ((h - k) // s + 1, (w - k) // s + 1)
