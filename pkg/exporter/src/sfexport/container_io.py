"""Writer/reader for the spikeforge container layout.

This is a deliberately independent implementation of the wire format (JSON
manifest next to a little-endian float32 blob file): the exporter talks to the
inference toolkit only through files, never through its Python API. Slot order
inside the blob is fixed: weights, bias, batch-norm gamma/beta/mean/var,
thresholds, step constants, layers in network order.
"""

from __future__ import annotations

import json
import os

import numpy as np

CONTAINER_VERSION = "1"
MANIFEST_NAME = "manifest.json"
BLOBS_NAME = "blobs.bin"
LABELS_NAME = "labels.csv"

# blob slots in their canonical order, per layer
_SLOT_ORDER = (
    "weights",
    "bias",
    ("bn", "gamma"),
    ("bn", "beta"),
    ("bn", "mean"),
    ("bn", "var"),
    "thresholds",
    "step_constant",
)


class ContainerFormatError(Exception):
    pass


class BlobWriter:
    def __init__(self) -> None:
        self._buf = bytearray()

    def add(self, values) -> dict:
        flat = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
        ref = {"offset": len(self._buf), "count": int(flat.size)}
        self._buf += flat.tobytes()
        return ref

    def bytes(self) -> bytes:
        return bytes(self._buf)


def write_container(path, manifest: dict, blob_bytes: bytes) -> None:
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(path, BLOBS_NAME), "wb") as fh:
        fh.write(blob_bytes)


def write_network_container(path, layers: list[dict], mode: str, cfg: dict | None) -> None:
    """Serialize layer dicts {geometry: ..., arrays: {slot: ndarray}} to a container."""
    blobs = BlobWriter()
    entries = []
    for layer in layers:
        entry = dict(layer["geometry"])
        arrays = layer["arrays"]
        for slot in _SLOT_ORDER:
            if isinstance(slot, tuple):
                group, field = slot
                values = arrays.get(f"{group}.{field}")
                if values is None:
                    continue
                entry.setdefault(group, {})[field] = blobs.add(values)
            else:
                values = arrays.get(slot)
                if values is None:
                    continue
                entry[slot] = blobs.add(values)
        entries.append(entry)
    manifest = {
        "version": CONTAINER_VERSION,
        "kind": "network",
        "mode": mode,
        "cfg": cfg,
        "layers": entries,
    }
    write_container(path, manifest, blobs.bytes())


def read_network_container(path) -> tuple[dict, list[dict]]:
    """Parse a network container back into manifest + layer dicts with arrays."""
    manifest_path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"cannot parse {manifest_path}: {exc}") from exc
    if manifest.get("version") != CONTAINER_VERSION or manifest.get("kind") != "network":
        raise ContainerFormatError(f"not a version-{CONTAINER_VERSION} network container")
    try:
        with open(os.path.join(path, BLOBS_NAME), "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ContainerFormatError(f"cannot read blobs: {exc}") from exc

    def fetch(ref, what):
        offset, count = int(ref["offset"]), int(ref["count"])
        if offset < 0 or offset + 4 * count > len(raw):
            raise ContainerFormatError(f"{what}: blob reference out of bounds")
        return np.frombuffer(raw, dtype="<f4", count=count, offset=offset).copy()

    layers = []
    for idx, entry in enumerate(manifest.get("layers", [])):
        arrays = {}
        geometry = {
            k: v
            for k, v in entry.items()
            if k not in ("weights", "bias", "bn", "thresholds", "step_constant")
        }
        for slot in ("weights", "bias", "thresholds", "step_constant"):
            if entry.get(slot) is not None:
                arrays[slot] = fetch(entry[slot], f"layer {idx} {slot}")
        if entry.get("bn") is not None:
            for field in ("gamma", "beta", "mean", "var"):
                arrays[f"bn.{field}"] = fetch(entry["bn"][field], f"layer {idx} bn.{field}")
        layers.append({"geometry": geometry, "arrays": arrays})
    return manifest, layers


def write_tensor_container(path, values: np.ndarray) -> None:
    blobs = BlobWriter()
    manifest = {
        "version": CONTAINER_VERSION,
        "kind": "tensor",
        "shape": list(values.shape),
        "data": blobs.add(values),
    }
    write_container(path, manifest, blobs.bytes())


def write_labels(path, labels) -> None:
    lines = ["index,label"] + [f"{i},{int(label)}" for i, label in enumerate(labels)]
    with open(os.path.join(path, LABELS_NAME), "w", newline="") as fh:
        fh.write("\r\n".join(lines) + "\r\n")
