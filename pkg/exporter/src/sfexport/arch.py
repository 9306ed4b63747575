"""Architecture tables: layer layouts and the checkpoint parameter names they expect.

Conv entries are (out_channels, stride); "A" is a 2x2/stride-2 average pool.
Downsampling inside the LeNet-style stack is a stride-2 conv that keeps its
channel count. Every architecture ends in a dense classifier whose feature
count is taken from the checkpoint itself.

Checkpoint parameter naming: conv layers are numbered among weight-bearing
layers as ``conv{i}.weight`` / ``conv{i}.bias`` with optional batch norm
``bn{i}.weight`` (gamma), ``bn{i}.bias`` (beta), ``bn{i}.running_mean`` and
``bn{i}.running_var``; the classifier is ``classifier.weight`` /
``classifier.bias``.
"""

from __future__ import annotations

AVGPOOL = "A"

ARCHITECTURES: dict[str, dict] = {
    "toy": {
        "in_channels": 3,
        "convs": [(8, 1)],
    },
    "lenet-star": {
        "in_channels": 1,
        "convs": [(32, 1), (32, 1), (32, 2), (64, 1), (64, 1), (64, 2), (128, 1)],
    },
    "vgg-star": {
        "in_channels": 3,
        "convs": [
            (128, 1), (128, 1), AVGPOOL,
            (256, 1), (256, 1), AVGPOOL,
            (512, 1), (512, 1), AVGPOOL,
            (1024, 1), AVGPOOL,
        ],
    },
    "vgg16": {
        "in_channels": 3,
        "convs": [
            (64, 1), (64, 1), AVGPOOL,
            (128, 1), (128, 1), AVGPOOL,
            (256, 1), (256, 1), (256, 1), AVGPOOL,
            (512, 1), (512, 1), (512, 1), AVGPOOL,
            (512, 1), (512, 1), (512, 1), AVGPOOL,
        ],
    },
}

# fixture presets: (kind, ...) rows; conv rows are (kind, out_ch, stride, bn)
FIXTURE_PRESETS: dict[str, dict] = {
    "toy": {
        "in_channels": 2,
        "spatial": 8,
        "classes": 5,
        "rows": [("conv", 4, 1, False)],
    },
    "conv-pool": {
        "in_channels": 2,
        "spatial": 8,
        "classes": 5,
        "rows": [("conv", 4, 1, False), ("avgpool",)],
    },
    "vgg-tiny": {
        "in_channels": 3,
        "spatial": 8,
        "classes": 10,
        "rows": [("conv", 8, 1, True), ("conv", 8, 1, True), ("avgpool",)],
    },
    "lenet-tiny": {
        "in_channels": 1,
        "spatial": 8,
        "classes": 10,
        "rows": [("conv", 6, 2, False), ("conv", 8, 1, False)],
    },
}


def expected_parameters(arch: dict, with_bn: set[int] | None = None) -> list[str]:
    """Flat list of parameter names an architecture's checkpoint must provide."""
    names = []
    conv_idx = 0
    for row in arch["convs"]:
        if row == AVGPOOL:
            continue
        names.append(f"conv{conv_idx}.weight")
        names.append(f"conv{conv_idx}.bias")
        if with_bn and conv_idx in with_bn:
            names.extend(
                f"bn{conv_idx}.{field}"
                for field in ("weight", "bias", "running_mean", "running_var")
            )
        conv_idx += 1
    names.append("classifier.weight")
    names.append("classifier.bias")
    return names
