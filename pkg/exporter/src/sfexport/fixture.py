"""Deterministic fixture generation for the inference toolkit's test suite.

A fixture is a directory with ``model`` (ANN-mode network container, window
cfg embedded) and ``inputs`` (tensor container plus a labels sidecar). Weights
are drawn uniform in +-1/sqrt(fan_in) and halved so hidden pre-activations
mostly land inside the quantization window; inputs are pre-quantized onto the
grid. Everything is a pure function of the seed.
"""

from __future__ import annotations

import os

import numpy as np

from .arch import FIXTURE_PRESETS
from .container_io import write_labels, write_network_container, write_tensor_container


class FixtureError(Exception):
    pass


def _draw_weights(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape) * 0.5


def make_fixture(seed: int, preset: str, out_dir, cfg=(10, 0, 8), images: int = 4) -> dict:
    """Write model and inputs for one preset; returns a small summary dict."""
    if preset not in FIXTURE_PRESETS:
        raise FixtureError(f"unknown preset {preset!r}; choose from {sorted(FIXTURE_PRESETS)}")
    t_q, t_min, t_max = (int(v) for v in cfg)
    if not (0 <= t_min < t_max <= t_q):
        raise FixtureError(f"bad window: t_q={t_q} t_min={t_min} t_max={t_max}")
    spec = FIXTURE_PRESETS[preset]
    rng = np.random.default_rng(seed)

    layers: list[dict] = []
    channels = spec["in_channels"]
    spatial = spec["spatial"]
    for row in spec["rows"]:
        if row[0] == "avgpool":
            layers.append(
                {
                    "geometry": {
                        "kind": "avgpool",
                        "channels": channels,
                        "window": 2,
                        "stride": 2,
                    },
                    "arrays": {},
                }
            )
            spatial //= 2
            continue
        _, out_ch, stride, with_bn = row
        arrays = {
            "weights": _draw_weights(rng, (out_ch, channels, 3, 3)),
            "bias": rng.uniform(-0.05, 0.05, out_ch),
        }
        if with_bn:
            arrays["bn.gamma"] = rng.uniform(0.8, 1.2, out_ch)
            arrays["bn.beta"] = rng.uniform(-0.05, 0.05, out_ch)
            arrays["bn.mean"] = rng.uniform(-0.05, 0.05, out_ch)
            arrays["bn.var"] = rng.uniform(0.5, 1.5, out_ch)
        layers.append(
            {
                "geometry": {
                    "kind": "conv",
                    "in_channels": channels,
                    "out_channels": out_ch,
                    "kernel": 3,
                    "stride": stride,
                    "padding": 1,
                },
                "arrays": arrays,
            }
        )
        channels = out_ch
        spatial = (spatial + 2 - 3) // stride + 1

    features = channels * spatial * spatial
    classes = spec["classes"]
    layers.append(
        {
            "geometry": {"kind": "dense", "in_features": features, "out_features": classes},
            "arrays": {
                "weights": _draw_weights(rng, (classes, features, 1, 1)),
                "bias": rng.uniform(-0.05, 0.05, classes),
            },
        }
    )

    model_dir = os.path.join(out_dir, "model")
    write_network_container(
        model_dir,
        layers,
        mode="ann",
        cfg={"t_q": t_q, "t_min": t_min, "t_max": t_max},
    )

    levels = rng.integers(t_min, t_max + 1, size=(images, spec["in_channels"], spec["spatial"], spec["spatial"]))
    inputs = levels / t_q
    labels = rng.integers(0, classes, size=images)
    inputs_dir = os.path.join(out_dir, "inputs")
    write_tensor_container(inputs_dir, inputs)
    write_labels(inputs_dir, labels)
    return {
        "preset": preset,
        "layers": len(layers),
        "images": images,
        "classes": classes,
        "cfg": {"t_q": t_q, "t_min": t_min, "t_max": t_max},
    }
