"""Value-range activation semantics: clamp, quantize, and batch-norm folding.

Activations live on the grid {t_min/t_q, (t_min+1)/t_q, ..., t_max/t_q}. A
window of t_max - t_min time steps is enough to carry any grid value as a
spike count, which is what makes the converted spiking network exact rather
than approximate.

Flooring near grid boundaries is snapped: a value within ``GRID_SNAP`` of a
grid point is treated as that grid point before the floor is taken. The
spiking engine applies the same snap at its firing threshold, so both paths
resolve boundary cases identically and the exactness tests can demand
equality instead of tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

__all__ = [
    "GRID_SNAP",
    "VRConfig",
    "BatchNormParams",
    "clamp",
    "quantize",
    "fold_batchnorm",
    "grid_levels",
]

# Absolute tolerance, in activation units, for matching a value to a grid point.
GRID_SNAP = 1e-9


@dataclass(frozen=True)
class VRConfig:
    """Quantization window: level count t_q and the integer bounds t_min < t_max.

    The derived quantities are never stored: ``t`` is the simulation window
    (t_max - t_min) and ``theta`` the firing threshold t/t_q.
    """

    t_q: int
    t_min: int
    t_max: int

    def __post_init__(self) -> None:
        for name in ("t_q", "t_min", "t_max"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {value!r}")
        if not (0 <= self.t_min < self.t_max <= self.t_q):
            raise ValueError(
                f"require 0 <= t_min < t_max <= t_q, got "
                f"t_q={self.t_q} t_min={self.t_min} t_max={self.t_max}"
            )

    @property
    def t(self) -> int:
        """Time window size: t_max - t_min."""
        return self.t_max - self.t_min

    @property
    def theta(self) -> float:
        """Firing threshold (t_max - t_min) / t_q."""
        return self.t / self.t_q

    @property
    def lower(self) -> float:
        """Lower clamp rail t_min/t_q."""
        return self.t_min / self.t_q

    @property
    def upper(self) -> float:
        """Upper clamp rail t_max/t_q."""
        return self.t_max / self.t_q


@dataclass
class BatchNormParams:
    """Per-channel batch-norm statistics and affine parameters."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    epsilon: float = field(default=1e-5)

    def __post_init__(self) -> None:
        for name in ("gamma", "beta", "mean", "var"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a 1-D vector")
            arr.flags.writeable = False
            setattr(self, name, arr)
        n = self.gamma.size
        for name in ("beta", "mean", "var"):
            if getattr(self, name).size != n:
                raise ValueError(
                    f"{name} length {getattr(self, name).size} does not match gamma length {n}"
                )
        if np.any(self.var < 0):
            raise ValueError("variance must be non-negative")

    @property
    def channels(self) -> int:
        return self.gamma.size


def _snap_floor(scaled: np.ndarray, tol: float) -> np.ndarray:
    # floor with values within tol below an integer rounded up to it
    return np.floor(scaled + tol)


def clamp(x: Tensor, cfg: VRConfig) -> Tensor:
    """Clip every element into [t_min/t_q, t_max/t_q]."""
    return Tensor(np.clip(x.data, cfg.lower, cfg.upper))


def quantize(x: Tensor, cfg: VRConfig) -> Tensor:
    """Floor every element onto the 1/t_q grid: x -> floor(x*t_q)/t_q.

    Inputs are expected to be clamped already. Values within ``GRID_SNAP`` of
    a grid point are snapped to it before flooring.
    """
    scaled = x.data * cfg.t_q
    return Tensor(_snap_floor(scaled, GRID_SNAP * cfg.t_q) / cfg.t_q)


def grid_levels(values: np.ndarray, cfg: VRConfig) -> np.ndarray:
    """Map grid values m/t_q to their integer levels m, as int64.

    Raises if any element is off-grid by more than ``GRID_SNAP`` or outside
    the window [t_min, t_max].
    """
    scaled = np.asarray(values, dtype=np.float64) * cfg.t_q
    levels = np.rint(scaled)
    err = np.abs(scaled - levels)
    if err.size and float(err.max()) > GRID_SNAP * cfg.t_q:
        worst = float(np.asarray(values).flat[int(np.argmax(err))])
        raise ValueError(
            f"value {worst!r} is off the 1/{cfg.t_q} grid beyond the snap tolerance"
        )
    levels = levels.astype(np.int64)
    if levels.size and (levels.min() < cfg.t_min or levels.max() > cfg.t_max):
        raise ValueError(
            f"grid levels outside window [{cfg.t_min}, {cfg.t_max}]: "
            f"min={levels.min()} max={levels.max()}"
        )
    return levels


def fold_batchnorm(weights: Tensor, bias, bn: BatchNormParams) -> tuple[Tensor, np.ndarray]:
    """Merge batch norm into the preceding layer's weights and bias.

    Per output channel c with scale g = gamma/sqrt(var + eps):
    W' = g * W and b' = g * (b - mean) + beta. The folded layer computes the
    same function as batch norm applied after the original layer.
    """
    out_channels = weights.shape[0]
    if bn.channels != out_channels:
        raise ValueError(
            f"batch norm has {bn.channels} channels but layer has {out_channels} outputs"
        )
    b = np.asarray(bias, dtype=np.float64)
    if b.shape != (out_channels,):
        raise ValueError(f"bias length {b.size} does not match out_channels {out_channels}")
    scale = bn.gamma / np.sqrt(bn.var + bn.epsilon)
    folded_w = Tensor(weights.data * scale[:, None, None, None])
    folded_b = scale * (b - bn.mean) + bn.beta
    return folded_w, folded_b
