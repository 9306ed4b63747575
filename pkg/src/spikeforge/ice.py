"""Input channel expansion: concatenating the input quantized at nearby levels.

At very small windows a single quantization of the input is too coarse; a
zero spike ends up standing for a whole range of values. Expansion quantizes
the raw input at the window size and at its two neighbours, remaps the
neighbour grids back onto the window grid, and concatenates everything along
the channel axis. The first layer of a network consuming expanded input must
be built for 3 * phi * C input channels.

The expansion loop is implemented literally: every iteration produces the same
level triple, so iterations beyond the first duplicate channels verbatim. A
non-literal mode that varies the neighbour levels per iteration is available
behind ``varied_levels``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .quantize import GRID_SNAP, VRConfig
from .tensor import SpikeTrain, Tensor

__all__ = ["IceConfig", "ice_expand", "ice_then_encode"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IceConfig:
    """Expansion factor phi and the base quantization window."""

    phi: int
    window: int

    def __post_init__(self) -> None:
        if not isinstance(self.phi, (int, np.integer)) or self.phi < 1:
            raise ValueError(f"phi must be a positive integer, got {self.phi!r}")
        if not isinstance(self.window, (int, np.integer)) or self.window < 1:
            raise ValueError(f"window must be a positive integer, got {self.window!r}")


def _quantize_branch(x: np.ndarray, level: int, window: int) -> np.ndarray:
    """Quantize at ``level`` and remap the result onto the 1/window grid.

    Integer levels are computed directly from the floor and re-divided by the
    window, which is the exact-arithmetic form of matching values against
    t/(level) for integer t. Levels above the window saturate to 1.
    """
    if level < 1:
        return np.zeros_like(x)
    steps = np.floor(x * level + GRID_SNAP * level)
    steps = np.minimum(steps, window)
    return steps / window


def ice_expand(x: Tensor, cfg: IceConfig, varied_levels: bool = False) -> Tensor:
    """Expand C input channels into 3 * phi * C channels of window-grid values.

    Each iteration quantizes at the window size T and at two neighbour levels
    (T+1 and T-1 literally; T+c and T-c per iteration c when
    ``varied_levels``), remapped so every output value sits on {0, 1/T, .., 1}.
    A neighbour level of zero (window 1) has no defined grid; that branch is
    emitted as all-zeros.
    """
    data = x.data
    if data.size and (data.min() < 0.0 or data.max() > 1.0):
        raise ValueError("expansion input must lie in [0, 1] element-wise")
    t = cfg.window
    blocks = []
    warned = False
    for c in range(1, cfg.phi + 1):
        up, down = (t + c, t - c) if varied_levels else (t + 1, t - 1)
        if down < 1 and not warned:
            logger.warning(
                "expansion level %d has no grid (window %d); emitting zeros", down, t
            )
            warned = True
        blocks.append(_quantize_branch(data, t, t))
        blocks.append(_quantize_branch(data, up, t))
        blocks.append(_quantize_branch(data, down, t))
    return Tensor(np.concatenate(blocks, axis=1))


def ice_then_encode(
    x: Tensor, cfg: IceConfig, vr: VRConfig, varied_levels: bool = False
) -> SpikeTrain:
    """Expand the input, then rate-encode every expanded channel.

    The expanded values live on the 1/window grid; encoding requires them to
    sit on the quantization grid of ``vr`` as well, and raises otherwise.
    """
    from .engine import encode_input

    return encode_input(ice_expand(x, cfg, varied_levels), vr)
