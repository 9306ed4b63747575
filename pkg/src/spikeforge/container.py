"""Network and tensor containers: a JSON manifest next to a single blob file.

A container is a directory holding ``manifest.json`` and ``blobs.bin``. The
manifest is versioned, human-readable JSON; the blob file is little-endian
float32 values, row-major, addressed by byte offset and element count. Slots
are laid out in a fixed order (weights, bias, batch-norm gamma/beta/mean/var,
thresholds, step constants; layers in network order), so identical networks
produce identical blobs.

Input images use the same structure with a ``tensor`` manifest kind and an
optional ``labels.csv`` sidecar of ``index,label`` rows.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .network import MODE_ANN, MODE_SNN, Layer, NetworkSpec
from .quantize import BatchNormParams, VRConfig
from .tensor import KIND_AVGPOOL, KIND_CONV, KIND_DENSE, LayerGeometry, Tensor

__all__ = [
    "CONTAINER_VERSION",
    "MANIFEST_NAME",
    "BLOBS_NAME",
    "LABELS_NAME",
    "ContainerError",
    "write_network",
    "read_network",
    "write_tensor",
    "read_tensor",
    "read_labels",
    "write_labels",
]

CONTAINER_VERSION = "1"
MANIFEST_NAME = "manifest.json"
BLOBS_NAME = "blobs.bin"
LABELS_NAME = "labels.csv"


class ContainerError(Exception):
    """Raised for malformed or inconsistent container files."""


class _BlobWriter:
    def __init__(self) -> None:
        self._buf = bytearray()

    def add(self, values: np.ndarray) -> dict:
        flat = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
        ref = {"offset": len(self._buf), "count": int(flat.size)}
        self._buf += flat.tobytes()
        return ref

    def bytes(self) -> bytes:
        return bytes(self._buf)


class _BlobReader:
    def __init__(self, raw: bytes) -> None:
        self._raw = raw

    def read(self, ref, what: str) -> np.ndarray:
        if not isinstance(ref, dict) or "offset" not in ref or "count" not in ref:
            raise ContainerError(f"{what}: blob reference must have offset and count")
        offset, count = int(ref["offset"]), int(ref["count"])
        if offset < 0 or count < 0 or offset + 4 * count > len(self._raw):
            raise ContainerError(
                f"{what}: blob range offset={offset} count={count} exceeds "
                f"file of {len(self._raw)} bytes"
            )
        return np.frombuffer(self._raw, dtype="<f4", count=count, offset=offset).astype(
            np.float64
        )


def _geometry_json(g: LayerGeometry) -> dict:
    if g.kind == KIND_CONV:
        return {
            "kind": "conv",
            "in_channels": g.in_channels,
            "out_channels": g.out_channels,
            "kernel": g.kernel,
            "stride": g.stride,
            "padding": g.padding,
        }
    if g.kind == KIND_DENSE:
        return {"kind": "dense", "in_features": g.in_channels, "out_features": g.out_channels}
    return {"kind": "avgpool", "channels": g.in_channels, "window": g.kernel, "stride": g.stride}


def _geometry_from_json(entry: dict, idx: int) -> LayerGeometry:
    kind = entry.get("kind")
    try:
        if kind == "conv":
            return LayerGeometry(
                kind=KIND_CONV,
                in_channels=int(entry["in_channels"]),
                out_channels=int(entry["out_channels"]),
                kernel=int(entry["kernel"]),
                stride=int(entry["stride"]),
                padding=int(entry["padding"]),
            )
        if kind == "dense":
            return LayerGeometry(
                kind=KIND_DENSE,
                in_channels=int(entry["in_features"]),
                out_channels=int(entry["out_features"]),
            )
        if kind == "avgpool":
            return LayerGeometry(
                kind=KIND_AVGPOOL,
                in_channels=int(entry["channels"]),
                out_channels=int(entry["channels"]),
                kernel=int(entry["window"]),
                stride=int(entry["stride"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"layer {idx}: bad geometry fields: {exc}") from exc
    raise ContainerError(f"layer {idx}: unknown layer kind {kind!r}")


def write_network(path, net: NetworkSpec) -> None:
    """Serialize a network; parameters are downcast to float32 in the blobs."""
    net.validate()
    blobs = _BlobWriter()
    layers = []
    for layer in net.layers:
        entry = _geometry_json(layer.geometry)
        if layer.weights is not None:
            entry["weights"] = blobs.add(layer.weights.data)
            entry["bias"] = blobs.add(layer.bias)
        if layer.bn is not None:
            entry["bn"] = {
                "gamma": blobs.add(layer.bn.gamma),
                "beta": blobs.add(layer.bn.beta),
                "mean": blobs.add(layer.bn.mean),
                "var": blobs.add(layer.bn.var),
            }
        if layer.thresholds is not None:
            entry["thresholds"] = blobs.add(layer.thresholds)
        if layer.step_constant is not None:
            entry["step_constant"] = blobs.add(layer.step_constant)
        layers.append(entry)
    manifest = {
        "version": CONTAINER_VERSION,
        "kind": "network",
        "mode": net.mode,
        "cfg": {"t_q": net.cfg.t_q, "t_min": net.cfg.t_min, "t_max": net.cfg.t_max}
        if net.cfg is not None
        else None,
        "layers": layers,
    }
    _write_container(path, manifest, blobs.bytes())


def read_network(path) -> NetworkSpec:
    manifest, blobs = _read_container(path, expected_kind="network")
    mode = manifest.get("mode")
    if mode not in (MODE_ANN, MODE_SNN):
        raise ContainerError(f"unknown network mode {mode!r}")
    cfg_entry = manifest.get("cfg")
    cfg = None
    if cfg_entry is not None:
        try:
            cfg = VRConfig(
                t_q=int(cfg_entry["t_q"]),
                t_min=int(cfg_entry["t_min"]),
                t_max=int(cfg_entry["t_max"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"bad cfg block: {exc}") from exc
    entries = manifest.get("layers")
    if not isinstance(entries, list) or not entries:
        raise ContainerError("manifest has no layers")
    layers = []
    for idx, entry in enumerate(entries):
        geometry = _geometry_from_json(entry, idx)
        what = f"layer {idx}"
        weights = bias = bn = thresholds = step_constant = None
        if geometry.kind in (KIND_CONV, KIND_DENSE):
            if "weights" not in entry or "bias" not in entry:
                raise ContainerError(f"{what}: missing weights or bias")
            wdata = blobs.read(entry["weights"], f"{what} weights")
            if geometry.kind == KIND_CONV:
                shape = (
                    geometry.out_channels,
                    geometry.in_channels,
                    geometry.kernel,
                    geometry.kernel,
                )
            else:
                shape = (geometry.out_channels, geometry.in_channels, 1, 1)
            if wdata.size != int(np.prod(shape)):
                raise ContainerError(
                    f"{what}: weight blob has {wdata.size} values, expected "
                    f"{int(np.prod(shape))}"
                )
            weights = Tensor(wdata.reshape(shape))
            bias = blobs.read(entry["bias"], f"{what} bias")
        if entry.get("bn") is not None:
            bn_entry = entry["bn"]
            try:
                bn = BatchNormParams(
                    gamma=blobs.read(bn_entry["gamma"], f"{what} bn gamma"),
                    beta=blobs.read(bn_entry["beta"], f"{what} bn beta"),
                    mean=blobs.read(bn_entry["mean"], f"{what} bn mean"),
                    var=blobs.read(bn_entry["var"], f"{what} bn var"),
                )
            except (KeyError, ValueError) as exc:
                raise ContainerError(f"{what}: bad bn block: {exc}") from exc
        if entry.get("thresholds") is not None:
            thresholds = blobs.read(entry["thresholds"], f"{what} thresholds")
        if entry.get("step_constant") is not None:
            step_constant = blobs.read(entry["step_constant"], f"{what} step_constant")
        try:
            layers.append(
                Layer(
                    geometry=geometry,
                    weights=weights,
                    bias=bias,
                    bn=bn,
                    thresholds=thresholds,
                    step_constant=step_constant,
                )
            )
        except ValueError as exc:
            raise ContainerError(f"{what}: {exc}") from exc
    if cfg is None and mode == MODE_SNN:
        raise ContainerError("SNN container is missing its cfg block")
    net = NetworkSpec(layers=layers, cfg=cfg, mode=mode)
    try:
        net.validate()
    except ValueError as exc:
        raise ContainerError(str(exc)) from exc
    return net


def write_tensor(path, tensor: Tensor) -> None:
    blobs = _BlobWriter()
    manifest = {
        "version": CONTAINER_VERSION,
        "kind": "tensor",
        "shape": list(tensor.shape),
        "data": blobs.add(tensor.data),
    }
    _write_container(path, manifest, blobs.bytes())


def read_tensor(path) -> Tensor:
    manifest, blobs = _read_container(path, expected_kind="tensor")
    shape = manifest.get("shape")
    if not isinstance(shape, list) or len(shape) != 4:
        raise ContainerError(f"tensor manifest shape must be 4 extents, got {shape!r}")
    values = blobs.read(manifest.get("data"), "tensor data")
    try:
        return Tensor.from_flat(shape, values)
    except ValueError as exc:
        raise ContainerError(str(exc)) from exc


def write_labels(path, labels) -> None:
    with open(os.path.join(path, LABELS_NAME), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "label"])
        for idx, label in enumerate(labels):
            writer.writerow([idx, int(label)])


def read_labels(path) -> list[int] | None:
    """Labels sidecar of a tensor container, or None when absent."""
    labels_path = os.path.join(path, LABELS_NAME)
    if not os.path.exists(labels_path):
        return None
    try:
        with open(labels_path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ContainerError(f"cannot read labels: {exc}") from exc
    if not rows or rows[0] != ["index", "label"]:
        raise ContainerError("labels sidecar must start with an index,label header")
    try:
        return [int(row[1]) for row in rows[1:] if row]
    except (IndexError, ValueError) as exc:
        raise ContainerError(f"bad labels row: {exc}") from exc


def _write_container(path, manifest: dict, blob_bytes: bytes) -> None:
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(path, BLOBS_NAME), "wb") as fh:
        fh.write(blob_bytes)


def _read_container(path, expected_kind: str):
    manifest_path = os.path.join(path, MANIFEST_NAME)
    blobs_path = os.path.join(path, BLOBS_NAME)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ContainerError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ContainerError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ContainerError("manifest must be a JSON object")
    if manifest.get("version") != CONTAINER_VERSION:
        raise ContainerError(
            f"unsupported container version {manifest.get('version')!r}"
        )
    if manifest.get("kind") != expected_kind:
        raise ContainerError(
            f"expected a {expected_kind} container, got kind {manifest.get('kind')!r}"
        )
    try:
        with open(blobs_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ContainerError(f"cannot read blobs: {exc}") from exc
    return manifest, _BlobReader(raw)
