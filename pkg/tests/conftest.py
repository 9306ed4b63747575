"""Shared builders for seeded random fixture networks and grid inputs."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spikeforge import (
    BatchNormParams,
    Layer,
    LayerGeometry,
    NetworkSpec,
    Tensor,
    VRConfig,
)

FIXTURE_DIR = Path(__file__).parent / "fixtures"


def random_weights(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape) * 0.5


def make_random_network(seed, cfg, min_layers=2, max_layers=4, with_bn=None, spatial=8):
    """Seeded 2-4 layer network mixing conv, pooling and a dense classifier.

    Weights are scaled so hidden pre-activations mostly land inside the
    quantization window; ``with_bn`` forces raw batch norm on conv layers
    (None picks randomly).
    """
    rng = np.random.default_rng(seed)
    n_layers = int(rng.integers(min_layers, max_layers + 1))
    use_bn = bool(rng.integers(0, 2)) if with_bn is None else with_bn
    channels = int(rng.integers(2, 5))
    h = w = spatial
    layers = []
    in_ch = channels
    for i in range(n_layers - 1):
        # pooling only mid-network, never first, and only when it tiles
        can_pool = i > 0 and h % 2 == 0 and w % 2 == 0 and h > 2
        if can_pool and rng.random() < 0.3:
            geom = LayerGeometry(
                kind="avgpool", in_channels=in_ch, out_channels=in_ch, kernel=2, stride=2
            )
            layers.append(Layer(geometry=geom))
            h //= 2
            w //= 2
            continue
        out_ch = int(rng.integers(2, 7))
        stride = 2 if (rng.random() < 0.2 and h >= 6) else 1
        geom = LayerGeometry(
            kind="conv",
            in_channels=in_ch,
            out_channels=out_ch,
            kernel=3,
            stride=stride,
            padding=1,
        )
        bn = None
        if use_bn and rng.random() < 0.7:
            bn = BatchNormParams(
                gamma=rng.uniform(0.8, 1.2, out_ch),
                beta=rng.uniform(-0.05, 0.05, out_ch),
                mean=rng.uniform(-0.05, 0.05, out_ch),
                var=rng.uniform(0.5, 1.5, out_ch),
            )
        layers.append(
            Layer(
                geometry=geom,
                weights=Tensor(random_weights(rng, (out_ch, in_ch, 3, 3))),
                bias=rng.uniform(-0.05, 0.05, out_ch),
                bn=bn,
            )
        )
        h = (h + 2 - 3) // stride + 1
        w = (w + 2 - 3) // stride + 1
        in_ch = out_ch
    feat = in_ch * h * w
    classes = int(rng.integers(3, 7))
    geom = LayerGeometry(kind="dense", in_channels=feat, out_channels=classes)
    layers.append(
        Layer(
            geometry=geom,
            weights=Tensor(random_weights(rng, (classes, feat, 1, 1))),
            bias=rng.uniform(-0.05, 0.05, classes),
        )
    )
    return NetworkSpec(layers=layers, cfg=cfg, mode="ann")


def make_grid_input(seed, shape, cfg):
    """Random tensor whose values all sit on the quantization grid."""
    rng = np.random.default_rng(seed)
    levels = rng.integers(cfg.t_min, cfg.t_max + 1, size=shape)
    return Tensor(levels / cfg.t_q)


def make_ctt_network(seed, cfg, boost=3.0):
    """Fixture net with a real IF-vs-ASG gap for threshold training.

    Boosting hidden weights makes per-step potentials overshoot the threshold,
    which clusters standard-IF spikes and opens a count gap the training has
    to close; with in-range weights the two models already agree and there is
    nothing to train.
    """
    from spikeforge import fold_network

    net = fold_network(make_random_network(seed, cfg, min_layers=3, max_layers=4))
    for layer in net.layers[:-1]:
        if layer.weights is not None:
            layer.weights = Tensor(layer.weights.data * boost)
    return net


def make_ctt_suite_network(seed, cfg, depth=3, boost=3.0):
    """Deeper all-conv fixture for the threshold-training acceptance run.

    Three boosted conv layers stack enough temporal clustering that plain IF
    visibly disagrees with the averaging oracle, leaving the training real
    headroom to recover.
    """
    rng = np.random.default_rng(seed)
    layers = []
    in_ch = 3
    for _ in range(depth):
        ch = int(rng.integers(3, 6))
        geom = LayerGeometry(
            kind="conv", in_channels=in_ch, out_channels=ch, kernel=3, stride=1, padding=1
        )
        layers.append(
            Layer(
                geometry=geom,
                weights=Tensor(random_weights(rng, (ch, in_ch, 3, 3)) * boost),
                bias=rng.uniform(-0.05, 0.05, ch),
            )
        )
        in_ch = ch
    feat = in_ch * 8 * 8
    geom = LayerGeometry(kind="dense", in_channels=feat, out_channels=5)
    layers.append(
        Layer(
            geometry=geom,
            weights=Tensor(random_weights(rng, (5, feat, 1, 1))),
            bias=rng.uniform(-0.05, 0.05, 5),
        )
    )
    return NetworkSpec(layers=layers, cfg=cfg, mode="ann")


def sweep_configs():
    """The full window sweep: t_q in {4,8,16}, both rails, all upper bounds."""
    configs = []
    for t_q in (4, 8, 16):
        for t_min in (0, t_q // 4):
            for t_max in range(t_q // 2, t_q + 1):
                if t_min < t_max:
                    configs.append(VRConfig(t_q, t_min, t_max))
    return configs


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


# one-line detail strings recorded by the acceptance tests, keyed by test name
ACCEPTANCE_DETAILS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                name = nodeid.split("::")[-1]
                rows.append((name, "PASS" if status == "passed" else "FAIL"))
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, status in rows:
        detail = ACCEPTANCE_DETAILS.get(name, "")
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"{status}  {name}{suffix}")
