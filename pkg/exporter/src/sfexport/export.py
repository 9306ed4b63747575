"""Checkpoint-to-container export.

Takes a saved parameter dict (``.npz``, or a torch ``.pt``/``.pth`` state
dict when torch is installed), matches it against a declared architecture,
and writes an ANN-mode container. Batch-norm statistics are exported raw;
folding them into weights is the inference toolkit's job, so there is exactly
one tested implementation of the fold.

Next to the container an export manifest records the name-mapping table
(framework parameter name to container layer/slot) and the echoed
quantization window, when one was given.
"""

from __future__ import annotations

import json
import os
import re

import numpy as np

from .arch import ARCHITECTURES, AVGPOOL, expected_parameters
from .container_io import write_network_container

EXPORT_MANIFEST_NAME = "export_manifest.json"

_BN_FIELDS = {
    "weight": "bn.gamma",
    "bias": "bn.beta",
    "running_mean": "bn.mean",
    "running_var": "bn.var",
}


class ExportError(Exception):
    pass


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Load a parameter dict from .npz or (lazily, when available) torch files."""
    if str(path).endswith(".npz"):
        with np.load(path) as data:
            return {name: np.asarray(data[name]) for name in data.files}
    if str(path).endswith((".pt", ".pth")):
        try:
            import torch
        except ImportError as exc:
            raise ExportError(
                "torch checkpoints need torch installed; re-save as .npz instead"
            ) from exc
        state = torch.load(path, map_location="cpu", weights_only=True)
        if hasattr(state, "state_dict"):
            state = state.state_dict()
        if not isinstance(state, dict):
            raise ExportError(f"checkpoint {path} does not hold a parameter dict")
        return {name: value.detach().cpu().numpy() for name, value in state.items()}
    raise ExportError(f"unsupported checkpoint format: {path}")


def _bn_groups(params: dict[str, np.ndarray]) -> set[int]:
    groups = set()
    for name in params:
        match = re.fullmatch(r"bn(\d+)\.\w+", name)
        if match:
            groups.add(int(match.group(1)))
    return groups


def export_checkpoint(checkpoint_path, arch_name: str, out_path, cfg: dict | None = None) -> dict:
    """Write the container and export manifest; returns the export manifest dict."""
    if arch_name not in ARCHITECTURES:
        raise ExportError(
            f"unknown architecture {arch_name!r}; choose from {sorted(ARCHITECTURES)}"
        )
    arch = ARCHITECTURES[arch_name]
    params = load_checkpoint(checkpoint_path)
    with_bn = _bn_groups(params)
    expected = expected_parameters(arch, with_bn)
    missing = [name for name in expected if name not in params]
    extra = [name for name in sorted(params) if name not in expected]
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing: {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected: {', '.join(extra)}")
        raise ExportError(f"checkpoint does not match {arch_name}: " + "; ".join(parts))

    layers: list[dict] = []
    mapping: list[dict] = []
    conv_idx = 0
    prev_channels = arch["in_channels"]
    for row in arch["convs"]:
        if row == AVGPOOL:
            layers.append(
                {
                    "geometry": {
                        "kind": "avgpool",
                        "channels": prev_channels,
                        "window": 2,
                        "stride": 2,
                    },
                    "arrays": {},
                }
            )
            continue
        out_channels, stride = row
        weight = np.asarray(params[f"conv{conv_idx}.weight"], dtype=np.float64)
        bias = np.asarray(params[f"conv{conv_idx}.bias"], dtype=np.float64)
        if weight.ndim != 4:
            raise ExportError(f"conv{conv_idx}.weight must be rank-4, got {weight.shape}")
        if weight.shape[0] != out_channels:
            raise ExportError(
                f"conv{conv_idx}.weight has {weight.shape[0]} output channels, "
                f"{arch_name} expects {out_channels}"
            )
        if weight.shape[1] != prev_channels:
            raise ExportError(
                f"conv{conv_idx}.weight has {weight.shape[1]} input channels, "
                f"expected {prev_channels}"
            )
        if bias.shape != (out_channels,):
            raise ExportError(f"conv{conv_idx}.bias must have {out_channels} entries")
        kernel = int(weight.shape[2])
        if weight.shape[2] != weight.shape[3]:
            raise ExportError(f"conv{conv_idx}.weight kernel must be square, got {weight.shape}")
        arrays = {"weights": weight, "bias": bias}
        layer_index = len(layers)
        mapping.append({"param": f"conv{conv_idx}.weight", "layer": layer_index, "slot": "weights"})
        mapping.append({"param": f"conv{conv_idx}.bias", "layer": layer_index, "slot": "bias"})
        if conv_idx in with_bn:
            for field, slot in _BN_FIELDS.items():
                name = f"bn{conv_idx}.{field}"
                value = np.asarray(params[name], dtype=np.float64)
                if value.shape != (out_channels,):
                    raise ExportError(f"{name} must have {out_channels} entries")
                arrays[slot] = value
                mapping.append({"param": name, "layer": layer_index, "slot": slot})
        layers.append(
            {
                "geometry": {
                    "kind": "conv",
                    "in_channels": prev_channels,
                    "out_channels": out_channels,
                    "kernel": kernel,
                    "stride": stride,
                    "padding": kernel // 2,
                },
                "arrays": arrays,
            }
        )
        prev_channels = out_channels
        conv_idx += 1

    cls_weight = np.asarray(params["classifier.weight"], dtype=np.float64)
    cls_bias = np.asarray(params["classifier.bias"], dtype=np.float64)
    if cls_weight.ndim != 2:
        raise ExportError(f"classifier.weight must be rank-2, got {cls_weight.shape}")
    classes, features = cls_weight.shape
    if cls_bias.shape != (classes,):
        raise ExportError(f"classifier.bias must have {classes} entries")
    layer_index = len(layers)
    mapping.append({"param": "classifier.weight", "layer": layer_index, "slot": "weights"})
    mapping.append({"param": "classifier.bias", "layer": layer_index, "slot": "bias"})
    layers.append(
        {
            "geometry": {"kind": "dense", "in_features": features, "out_features": classes},
            "arrays": {
                "weights": cls_weight.reshape(classes, features, 1, 1),
                "bias": cls_bias,
            },
        }
    )

    write_network_container(out_path, layers, mode="ann", cfg=cfg)
    export_manifest = {
        "version": "1",
        "arch": arch_name,
        "cfg": cfg,
        "mapping": mapping,
    }
    with open(os.path.join(out_path, EXPORT_MANIFEST_NAME), "w") as fh:
        json.dump(export_manifest, fh, indent=2)
        fh.write("\n")
    return export_manifest


def reexport(in_path, out_path) -> None:
    """Load a container and write it back; blobs must survive byte-identically."""
    from .container_io import read_network_container

    manifest, layers = read_network_container(in_path)
    for layer, entry in zip(layers, manifest["layers"]):
        geometry = layer["geometry"]
        if geometry["kind"] == "conv":
            shape = (
                geometry["out_channels"],
                geometry["in_channels"],
                geometry["kernel"],
                geometry["kernel"],
            )
            layer["arrays"]["weights"] = layer["arrays"]["weights"].reshape(shape)
        elif geometry["kind"] == "dense":
            layer["arrays"]["weights"] = layer["arrays"]["weights"].reshape(
                geometry["out_features"], geometry["in_features"], 1, 1
            )
    write_network_container(out_path, layers, mode=manifest["mode"], cfg=manifest.get("cfg"))
