"""Dense rank-4 tensors, spike trains, and the shared linear kernels.

Everything downstream (the quantized ANN reference path and both spiking
engines) funnels through the three kernels in this module, so they are written
for reproducibility rather than raw speed:

* accumulation is always in float64, regardless of how parameters are stored;
* the reduction order of every kernel is fixed by explicit loops over the
  kernel taps, so results are bit-identical across repeated runs and across
  any batch chunking a caller may apply.

Layout is canonical row-major (N, C, H, W); all I/O converts into it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "SpikeTrain",
    "LayerGeometry",
    "conv2d_forward",
    "dense_forward",
    "avgpool_forward",
]

KIND_CONV = "conv"
KIND_DENSE = "dense"
KIND_AVGPOOL = "avgpool"
LAYER_KINDS = (KIND_CONV, KIND_DENSE, KIND_AVGPOOL)


class Tensor:
    """Immutable dense array of shape (N, C, H, W) holding finite float64 values."""

    __slots__ = ("_data",)

    def __init__(self, data) -> None:
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        if arr.ndim != 4:
            raise ValueError(f"tensor must be rank-4 (N,C,H,W), got rank {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains non-finite values")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_flat(cls, shape, flat) -> "Tensor":
        """Build a tensor from a 4-tuple of extents and a flat row-major buffer."""
        shape = tuple(int(s) for s in shape)
        if len(shape) != 4 or any(s < 0 for s in shape):
            raise ValueError(f"invalid tensor shape {shape}")
        flat = np.asarray(flat, dtype=np.float64)
        expected = int(np.prod(shape)) if shape else 0
        if flat.size != expected:
            raise ValueError(
                f"flat data length {flat.size} does not match shape {shape} "
                f"(expected {expected})"
            )
        return cls(flat.reshape(shape))

    @property
    def data(self) -> np.ndarray:
        """Read-only float64 view of the underlying array."""
        return self._data

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._data.shape

    @property
    def size(self) -> int:
        return self._data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class SpikeTrain:
    """A window of binary spike planes with shape (T, N, C, H, W).

    Plane t holds the spikes emitted at time step t; each element is 0 or 1.
    The per-element spike count over the window therefore lies in [0, T].
    """

    __slots__ = ("_bits",)

    def __init__(self, bits) -> None:
        arr = np.asarray(bits)
        if arr.ndim != 5:
            raise ValueError(
                f"spike train must be rank-5 (T,N,C,H,W), got rank {arr.ndim}"
            )
        if arr.shape[0] < 1:
            raise ValueError("spike train window must be at least 1 step")
        if arr.dtype != np.uint8:
            arr = arr.astype(np.uint8)
        if not bool(((arr == 0) | (arr == 1)).all()):
            raise ValueError("spike planes must contain only 0 or 1")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._bits = arr

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def window(self) -> int:
        return self._bits.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """Spatial shape (N, C, H, W) of each plane."""
        return self._bits.shape[1:]

    def counts(self) -> np.ndarray:
        """Per-element spike counts over the window, as int64 of shape (N,C,H,W)."""
        return self._bits.sum(axis=0, dtype=np.int64)

    def fired(self) -> int:
        """Total number of '1' spikes in the train."""
        return int(self._bits.sum(dtype=np.int64))

    def slots(self) -> int:
        """Total number of spike positions: window times plane size."""
        return int(self.window * np.prod(self.shape, dtype=np.int64))

    def __repr__(self) -> str:
        return f"SpikeTrain(window={self.window}, shape={self.shape})"


@dataclass(frozen=True)
class LayerGeometry:
    """Shape contract of one layer: kind plus channel/kernel/stride/padding extents.

    For dense layers ``in_channels``/``out_channels`` hold the flattened
    feature counts and kernel/stride/padding are fixed at 1/1/0. For average
    pooling the channel count is preserved and ``kernel`` is the window size.
    """

    kind: str
    in_channels: int
    out_channels: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1:
            raise ValueError(f"kernel must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError(
                f"channel counts must be >= 1, got in={self.in_channels} "
                f"out={self.out_channels}"
            )
        if self.kind == KIND_AVGPOOL and self.in_channels != self.out_channels:
            raise ValueError("average pooling preserves the channel count")


def conv2d_forward(input: Tensor, weights: Tensor, bias, geometry: LayerGeometry) -> Tensor:
    """2-D convolution with zero padding.

    ``weights`` has shape (out_channels, in_channels, k, k) and ``bias`` one
    entry per output channel. The accumulation order is fixed (input channel,
    then kernel row, then kernel column), which keeps results bit-identical
    across runs and independent of batch slicing.
    """
    if geometry.kind != KIND_CONV:
        raise ValueError(f"conv2d_forward needs conv geometry, got {geometry.kind!r}")
    x = input.data
    w = weights.data
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    k, s, p = geometry.kernel, geometry.stride, geometry.padding
    if (kh, kw) != (k, k):
        raise ValueError(f"weight kernel {kh}x{kw} does not match geometry kernel {k}")
    if ic != geometry.in_channels:
        raise ValueError(
            f"weight in_channels {ic} does not match geometry in_channels "
            f"{geometry.in_channels}"
        )
    if oc != geometry.out_channels:
        raise ValueError(
            f"weight out_channels {oc} does not match geometry out_channels "
            f"{geometry.out_channels}"
        )
    if c != ic:
        raise ValueError(f"input has {c} channels but weights expect {ic}")
    b = np.asarray(bias, dtype=np.float64)
    if b.shape != (oc,):
        raise ValueError(f"bias length {b.size} does not match out_channels {oc}")
    hp, wp = h + 2 * p, wd + 2 * p
    if hp < k or wp < k:
        raise ValueError(
            f"kernel {k} exceeds padded spatial extent {hp}x{wp} of input {h}x{wd}"
        )
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    ho = (hp - k) // s + 1
    wo = (wp - k) // s + 1
    out = np.zeros((n, oc, ho, wo), dtype=np.float64)
    for ci in range(ic):
        for i in range(k):
            for j in range(k):
                patch = xp[:, ci, i : i + s * ho : s, j : j + s * wo : s]
                out += w[None, :, ci, i, j, None, None] * patch[:, None, :, :]
    out += b[None, :, None, None]
    return Tensor(out)


def dense_forward(input: Tensor, weights: Tensor, bias) -> Tensor:
    """Affine map over the flattened (C*H*W) features of each batch item.

    Weights are stored rank-4 as (out_features, in_features, 1, 1); the output
    is (N, out_features, 1, 1) so it stays in the canonical layout.
    """
    x = input.data
    w = weights.data
    if w.shape[2:] != (1, 1):
        raise ValueError(f"dense weights must have trailing extents (1,1), got {w.shape}")
    n = x.shape[0]
    feat = int(np.prod(x.shape[1:]))
    of, inf = w.shape[:2]
    if feat != inf:
        raise ValueError(
            f"input flattened length {feat} does not match weight columns {inf}"
        )
    b = np.asarray(bias, dtype=np.float64)
    if b.shape != (of,):
        raise ValueError(f"bias length {b.size} does not match out_features {of}")
    x2 = x.reshape(n, feat)
    w2 = w.reshape(of, inf)
    # einsum without optimize keeps a fixed reduction order (no BLAS dispatch),
    # so results do not depend on how the batch is chunked.
    out = np.einsum("nf,of->no", x2, w2) + b[None, :]
    return Tensor(out.reshape(n, of, 1, 1))


def avgpool_forward(input: Tensor, window: int, stride: int) -> Tensor:
    """Average pooling; each output site is the mean of its window."""
    if window < 1 or stride < 1:
        raise ValueError(f"window and stride must be >= 1, got {window}, {stride}")
    x = input.data
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ValueError(f"pooling window {window} exceeds spatial extent {h}x{w}")
    if (h - window) % stride or (w - window) % stride:
        raise ValueError(
            f"pooling window {window}/stride {stride} does not tile extent {h}x{w}"
        )
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    out = np.zeros((n, c, ho, wo), dtype=np.float64)
    for i in range(window):
        for j in range(window):
            out += x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    out /= float(window * window)
    return Tensor(out)
