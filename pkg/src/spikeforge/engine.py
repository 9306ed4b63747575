"""Temporal simulation under two neuron models, plus encoding and accounting.

Two firing rules share one integrate-and-fire core:

* the standard model integrates each step's raw membrane contribution and
  fires whenever the accumulated potential reaches the threshold (reset by
  subtraction);
* the averaging model first sums all per-step contributions over the window,
  divides by the window size, and then runs integrate-and-fire on that
  constant average. Its spikes come out evenly distributed, which is what
  makes short windows survive truncation.

The averaging model is an offline oracle: it needs the whole window before it
can emit anything, trading memory for robustness. The standard model is
strictly causal.

Firing comparisons snap to the threshold within a relative tolerance that
mirrors the grid snap in :mod:`spikeforge.quantize`; a potential that should
equal the threshold in exact arithmetic fires even if float rounding left it
a few ulps short. Summation over the window happens on integer spike counts
before any weighting, so the averaging model's output depends only on how
many spikes arrived, never on when.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MODE_SNN, Layer, NetworkSpec
from .quantize import VRConfig, grid_levels
from .tensor import (
    KIND_CONV,
    KIND_DENSE,
    SpikeTrain,
    Tensor,
    avgpool_forward,
    conv2d_forward,
    dense_forward,
)

__all__ = [
    "FIRE_SNAP",
    "NeuronState",
    "LayerStats",
    "SpikeStats",
    "encode_input",
    "if_layer_step",
    "if_layer_train",
    "asg_layer",
    "if_network_forward",
    "asg_network_forward",
    "spike_report",
]

# Relative snap applied at the firing comparison, scaled by max(1, theta).
FIRE_SNAP = 1e-9


@dataclass
class NeuronState:
    """Mutable-per-step state of one layer's neurons.

    ``membrane`` is the running potential U. The averaging model additionally
    keeps the full buffer of per-step contributions and their average.
    """

    membrane: np.ndarray
    potentials: np.ndarray | None = None
    average: np.ndarray | None = None


@dataclass(frozen=True)
class LayerStats:
    label: str
    fired: int
    slots: int

    @property
    def ratio(self) -> float:
        return self.fired / self.slots if self.slots else 0.0


class SpikeStats:
    """Per-layer fired/slot counts for energy accounting."""

    def __init__(self) -> None:
        self.layers: list[LayerStats] = []

    def add(self, label: str, train: SpikeTrain) -> None:
        self.layers.append(LayerStats(label, train.fired(), train.slots()))

    @property
    def total_fired(self) -> int:
        return sum(s.fired for s in self.layers)

    @property
    def total_slots(self) -> int:
        return sum(s.slots for s in self.layers)

    @property
    def ratio(self) -> float:
        slots = self.total_slots
        return self.total_fired / slots if slots else 0.0


def _theta_grid(theta, channels: int) -> np.ndarray:
    th = np.asarray(theta, dtype=np.float64)
    if th.ndim == 0:
        th = th.reshape(1, 1, 1, 1)
    elif th.shape == (channels,):
        th = th.reshape(1, channels, 1, 1)
    else:
        raise ValueError(
            f"threshold must be a scalar or a vector of length {channels}, "
            f"got shape {th.shape}"
        )
    if np.any(th <= 0):
        raise ValueError("thresholds must be strictly positive")
    return th


def _fire_update(u: np.ndarray, th: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Snap potentials sitting within tolerance of the threshold onto it, then
    # fire with >= and reset by subtraction. Exact-threshold hits reset to 0.
    tol = FIRE_SNAP * np.maximum(1.0, th)
    u = np.where(np.abs(u - th) <= tol, th, u)
    fired = u >= th
    u = np.where(fired, u - th, u)
    return fired.astype(np.uint8), u


def _fire_constant(average: np.ndarray, theta, steps: int) -> np.ndarray:
    """Run IF on a constant per-step input for ``steps`` steps; returns bit-planes."""
    th = _theta_grid(theta, average.shape[1])
    u = np.zeros_like(average)
    planes = np.empty((steps,) + average.shape, dtype=np.uint8)
    for t in range(steps):
        u = u + average
        planes[t], u = _fire_update(u, th)
    return planes


def encode_input(x_quantized: Tensor, cfg: VRConfig) -> SpikeTrain:
    """Rate-encode a grid tensor into a spike train of window t_max - t_min.

    The constant x - t_min/t_q is fed into an IF neuron with threshold t/t_q
    for t steps. A grid value m/t_q yields exactly m - t_min spikes, placed
    where floor(step * count / window) increments (evenly distributed).
    """
    grid_levels(x_quantized.data, cfg)  # raises when off-grid or out of window
    average = x_quantized.data - cfg.lower
    return SpikeTrain(_fire_constant(average, cfg.theta, cfg.t))


def if_layer_step(
    state: NeuronState, input_potential: Tensor, theta
) -> tuple[np.ndarray, NeuronState]:
    """Advance standard IF by one step: integrate, fire at >= theta, subtract.

    Returns the emitted bit-plane and the successor state; the input state is
    not modified.
    """
    th = _theta_grid(theta, input_potential.shape[1])
    u = state.membrane + input_potential.data
    plane, u = _fire_update(u, th)
    return plane, NeuronState(membrane=u)


def _step_potential(plane: np.ndarray, layer: Layer, pool_scale: float) -> Tensor:
    """Membrane contribution of one incoming spike plane, step constant included."""
    x = Tensor(plane.astype(np.float64))
    kind = layer.geometry.kind
    if kind == KIND_CONV:
        return conv2d_forward(x, layer.weights, layer.step_constant, layer.geometry)
    if kind == KIND_DENSE:
        return dense_forward(x, layer.weights, layer.step_constant)
    # Pooling taps carry the same t/t_q rescale as converted weights.
    pooled = avgpool_forward(x, layer.geometry.kernel, layer.geometry.stride)
    return Tensor(pool_scale * pooled.data + layer.step_constant[None, :, None, None])


def if_layer_train(inputs: SpikeTrain, layer: Layer, cfg: VRConfig, theta) -> SpikeTrain:
    """Run one layer under standard IF for the whole window.

    Plane t of the output depends only on input planes up to t, so composing
    layers train-by-train reproduces the strictly causal per-step pipeline.
    """
    state: NeuronState | None = None
    planes = []
    for t in range(inputs.window):
        potential = _step_potential(inputs.bits[t], layer, cfg.theta)
        if state is None:
            state = NeuronState(membrane=np.zeros(potential.shape))
        plane, state = if_layer_step(state, potential, theta)
        planes.append(plane)
    return SpikeTrain(np.stack(planes))


def _window_total(
    inputs: SpikeTrain, layer: Layer, pool_scale: float, merged_scaling: bool
) -> np.ndarray:
    """Sum of per-step membrane contributions over the window.

    Spike planes are summed into integer counts first, so the result depends
    only on counts (exactly, not just up to rounding). With ``merged_scaling``
    the division by the window is folded into the weights and step constants
    instead of applied afterwards.
    """
    steps = inputs.window
    counts = Tensor(inputs.counts().astype(np.float64))
    kind = layer.geometry.kind
    scale = 1.0 / steps if merged_scaling else 1.0
    step_total = layer.step_constant * (1.0 if merged_scaling else float(steps))
    if kind == KIND_CONV:
        w = Tensor(layer.weights.data * scale) if merged_scaling else layer.weights
        return conv2d_forward(counts, w, step_total, layer.geometry).data
    if kind == KIND_DENSE:
        w = Tensor(layer.weights.data * scale) if merged_scaling else layer.weights
        return dense_forward(counts, w, step_total).data
    pooled = avgpool_forward(counts, layer.geometry.kernel, layer.geometry.stride)
    return (pool_scale * scale) * pooled.data + step_total[None, :, None, None]


def asg_layer(
    inputs: SpikeTrain,
    weights: Tensor | None,
    step_const,
    theta: float,
    geometry,
    merged_scaling: bool = False,
) -> SpikeTrain:
    """Averaging spike generation for one layer.

    Computes each step's membrane contribution, averages them over the window,
    and runs IF on the constant average for the full window. For pooling
    geometry (``weights`` is None) the taps carry the same rescale as converted
    weights, which for a converted network equals the firing threshold.
    """
    layer = Layer(
        geometry=geometry,
        weights=weights,
        bias=None if weights is None else np.zeros(geometry.out_channels),
        step_constant=np.asarray(step_const, dtype=np.float64),
    )
    total = _window_total(inputs, layer, float(theta), merged_scaling)
    average = total if merged_scaling else total / inputs.window
    return SpikeTrain(_fire_constant(average, float(theta), inputs.window))


def _check_snn_input(net: NetworkSpec, input: SpikeTrain) -> None:
    net.validate()
    if net.mode != MODE_SNN:
        raise ValueError(f"expected an SNN-mode network, got mode {net.mode!r}")
    if input.window != net.cfg.t:
        raise ValueError(
            f"input window {input.window} does not match configured window {net.cfg.t}"
        )


def _classifier_logits(net: NetworkSpec, train: SpikeTrain, causal: bool) -> Tensor:
    """Accumulate the classifier's potential over the window and decode it.

    Decoding divides by the window and adds back the lower rail, so the result
    is directly comparable to the reference network's raw logits.
    """
    layer = net.classifier
    cfg = net.cfg
    if causal:
        total = None
        for t in range(train.window):
            v = _step_potential(train.bits[t], layer, cfg.theta).data
            total = v if total is None else total + v
    else:
        total = _window_total(train, layer, cfg.theta, merged_scaling=False)
    return Tensor(total / train.window + cfg.lower)


def if_network_forward(
    net: NetworkSpec, input: SpikeTrain, return_trains: bool = False
):
    """Evaluate the spiking network under the standard IF rule.

    Layers consume the previous layer's planes step by step with no lookahead;
    the classifier accumulates potential without firing. Returns decoded
    logits and spike statistics (input train included).
    """
    _check_snn_input(net, input)
    stats = SpikeStats()
    stats.add("input", input)
    train = input
    trains = []
    for idx, layer in enumerate(net.layers[:-1]):
        train = if_layer_train(train, layer, net.cfg, layer.thresholds)
        stats.add(f"layer{idx}", train)
        if return_trains:
            trains.append(train)
    logits = _classifier_logits(net, train, causal=True)
    if return_trains:
        return logits, stats, trains
    return logits, stats


def asg_network_forward(
    net: NetworkSpec,
    input: SpikeTrain,
    return_trains: bool = False,
    merged_scaling: bool = False,
):
    """Evaluate the spiking network under the averaging rule, layer by layer.

    This is the offline oracle: every layer sees its whole input window before
    emitting. ``merged_scaling`` folds the per-layer division by the window
    into weights and step constants; the emitted spike trains are identical
    either way.
    """
    _check_snn_input(net, input)
    cfg = net.cfg
    stats = SpikeStats()
    stats.add("input", input)
    train = input
    trains = []
    for idx, layer in enumerate(net.layers[:-1]):
        total = _window_total(train, layer, cfg.theta, merged_scaling)
        average = total if merged_scaling else total / train.window
        theta = float(cfg.theta)
        train = SpikeTrain(_fire_constant(average, theta, train.window))
        stats.add(f"layer{idx}", train)
        if return_trains:
            trains.append(train)
    logits = _classifier_logits(net, train, causal=False)
    if return_trains:
        return logits, stats, trains
    return logits, stats


def spike_report(stats: SpikeStats, unit_cost: float = 1.0) -> dict:
    """Summarize fired/slot counts per layer and overall, with an energy proxy.

    The proxy charges ``unit_cost`` per fired spike; silent slots are free.
    """
    return {
        "layers": [
            {"label": s.label, "fired": s.fired, "slots": s.slots, "ratio": s.ratio}
            for s in stats.layers
        ],
        "fired": stats.total_fired,
        "slots": stats.total_slots,
        "ratio": stats.ratio,
        "unit_cost": float(unit_cost),
        "energy_proxy": stats.total_fired * float(unit_cost),
    }
