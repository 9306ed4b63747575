"""Acceptance suite: one test per criterion, summarized at the end of the run.

Each test prints nothing on its own; conftest's terminal summary emits one
PASS/FAIL line per criterion with the recorded measurement detail.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from spikeforge import (
    CttConfig,
    IceConfig,
    Layer,
    LayerGeometry,
    NeuronState,
    SpikeTrain,
    Tensor,
    VRConfig,
    ann_forward,
    asg_layer,
    asg_network_forward,
    clamp,
    convert_network,
    convert_weights,
    ctt_train,
    decode_spike_counts,
    encode_input,
    fold_network,
    ice_expand,
    if_layer_step,
    if_network_forward,
    layer_threshold,
    quantize,
    spike_report,
)
from spikeforge.container import read_labels, read_network, read_tensor
from spikeforge.engine import SpikeStats, _fire_constant
from spikeforge.network import _vr_linear

from conftest import (
    ACCEPTANCE_DETAILS,
    FIXTURE_DIR,
    make_ctt_network,
    make_grid_input,
    make_random_network,
    sweep_configs,
)
from oracles import avgpool_naive, conv2d_naive, dense_naive


def record(name, detail):
    ACCEPTANCE_DETAILS[name] = detail


def check_network_exact(net_ann, cfg, x):
    """Decoded averaging-model activations must equal the reference exactly."""
    snn = convert_network(net_ann)
    train = encode_input(x, cfg)
    logits, _, trains = asg_network_forward(snn, train, return_trains=True)
    reference = x
    for layer, out_train in zip(net_ann.layers[:-1], trains):
        reference = quantize(clamp(_vr_linear(layer, reference, cfg), cfg), cfg)
        if not np.array_equal(decode_spike_counts(out_train.counts(), cfg), reference.data):
            return False, 0
    ann_logits = ann_forward(net_ann, x, cfg)
    if not np.allclose(logits.data, ann_logits.data, atol=1e-9, rtol=0):
        return False, 0
    n = x.shape[0]
    agree = np.sum(
        np.argmax(logits.data.reshape(n, -1), axis=1)
        == np.argmax(ann_logits.data.reshape(n, -1), axis=1)
    )
    return True, int(agree)


def test_exactness_sweep():
    """Converted networks reproduce the quantized reference with zero drop."""
    started = time.monotonic()
    configs = sweep_configs()
    nets_per_cfg = 6
    total_nets = 0
    total_inputs = 0
    agreed = 0
    seed = 0
    for cfg in configs:
        for _ in range(nets_per_cfg):
            seed += 1
            net = fold_network(make_random_network(seed, cfg))
            x = make_grid_input(10_000 + seed, (2, net.layers[0].geometry.in_channels, 8, 8), cfg)
            exact, agree = check_network_exact(net, cfg, x)
            assert exact, f"seed {seed} cfg {cfg} not exact"
            total_nets += 1
            total_inputs += x.shape[0]
            agreed += agree
    elapsed = time.monotonic() - started
    assert total_nets >= 200
    assert agreed == total_inputs
    assert elapsed < 300
    record(
        "test_exactness_sweep",
        f"{total_nets} nets, {len(configs)} configs, argmax {agreed}/{total_inputs}, {elapsed:.1f}s",
    )


def test_committed_fixtures_exact():
    """Pre-committed fixture containers pass the same exactness check."""
    fixture_dirs = sorted(p for p in FIXTURE_DIR.iterdir() if (p / "model").is_dir())
    assert fixture_dirs, f"no fixture containers under {FIXTURE_DIR}"
    checked = 0
    for case in fixture_dirs:
        net = read_network(case / "model")
        x = read_tensor(case / "inputs")
        assert read_labels(case / "inputs") is not None
        cfg = net.cfg
        folded = fold_network(net)
        grid = quantize(clamp(x, cfg), cfg)
        exact, agree = check_network_exact(folded, cfg, grid)
        assert exact, f"fixture {case.name} not exact"
        assert agree == x.shape[0]
        checked += 1
    record("test_committed_fixtures_exact", f"{checked} committed fixtures")


def test_paper_worked_example():
    """The published single-neuron traces, bit for bit."""
    potentials = [0.1, 0.2, 0.5, 0.8, 0.9]
    state = NeuronState(membrane=np.zeros((1, 1, 1, 1)))
    if_train = []
    for p in potentials:
        plane, state = if_layer_step(state, Tensor(np.full((1, 1, 1, 1), p)), 1.0)
        if_train.append(int(plane.ravel()[0]))
    assert if_train == [0, 0, 0, 1, 1]
    average = sum(potentials) / len(potentials)
    asg_train = [int(v) for v in _fire_constant(np.full((1, 1, 1, 1), average), 1.0, 5)[:, 0, 0, 0, 0]]
    assert asg_train == [0, 1, 0, 1, 0]
    record("test_paper_worked_example", "IF [0,0,0,1,1], averaging [0,1,0,1,0]")


def test_conversion_constants():
    cfg = VRConfig(10, 0, 8)
    assert layer_threshold(cfg) == 0.8
    w = convert_weights(Tensor(np.ones((1, 1, 1, 1))), cfg)
    assert w.data.ravel()[0] == 0.8
    record("test_conversion_constants", "theta=0.8, weight scale=0.8 exact")


def _exact_floor_ratio(a: float, theta: float, t: int) -> int:
    # floor(t*a/theta) in exact integer arithmetic on the float bit values
    pa, qa = float(a).as_integer_ratio()
    pt, qt = float(theta).as_integer_ratio()
    num = t * pa * qt
    den = qa * pt
    if den < 0:
        num, den = -num, -den
    return num // den


def test_prefix_count_law():
    """Cumulative averaging-model spikes follow min(t, max(0, floor(t*A/theta)))."""
    started = time.monotonic()
    # exhaustive rational grid
    steps = 64
    grid_checked = 0
    for q in range(1, 33):
        batch = np.array([p / q for p in range(-32, 33)])
        planes = _fire_constant(batch.reshape(1, -1, 1, 1), 1.0, steps)
        got = np.cumsum(planes[:, 0, :, 0, 0], axis=0)
        for col, p in enumerate(range(-32, 33)):
            want = [min(t, max(0, (t * p) // q)) for t in range(1, steps + 1)]
            assert np.array_equal(got[:, col], want), f"ratio {p}/{q}"
            grid_checked += 1
    # random triples, grouped by window so the engine runs vectorized
    rng = np.random.default_rng(424242)
    total_random = 100_000
    windows = rng.integers(1, 65, size=total_random)
    thetas = rng.uniform(0.1, 2.0, size=total_random)
    avgs = rng.uniform(-0.5, 2.5, size=total_random) * thetas
    for t in range(1, 65):
        mask = windows == t
        if not mask.any():
            continue
        th = thetas[mask]
        av = avgs[mask]
        planes = _fire_constant(av.reshape(1, -1, 1, 1), th, int(t))
        got = np.cumsum(planes[:, 0, :, 0, 0], axis=0)
        for col in range(av.size):
            for step in range(1, t + 1):
                want = min(step, max(0, _exact_floor_ratio(av[col], th[col], step)))
                assert got[step - 1, col] == want, (
                    f"A={av[col]!r} theta={th[col]!r} t={step}"
                )
    elapsed = time.monotonic() - started
    assert elapsed < 60
    record(
        "test_prefix_count_law",
        f"{grid_checked} grid ratios x64 steps, {total_random} random triples, {elapsed:.1f}s",
    )


def test_permutation_invariance():
    """Averaging output never depends on when input spikes arrive."""
    started = time.monotonic()
    rng = np.random.default_rng(31337)
    geom = LayerGeometry(kind="conv", in_channels=2, out_channels=3, kernel=3, padding=1)
    weights = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.2)
    step_const = rng.uniform(-0.05, 0.1, 3)
    bits = (rng.random((8, 2, 2, 4, 4)) < 0.4).astype(np.uint8)
    base = asg_layer(SpikeTrain(bits), weights, step_const, 0.75, geom)
    trials = 10_000
    for _ in range(trials):
        perm = rng.permutation(8)
        out = asg_layer(SpikeTrain(bits[perm]), weights, step_const, 0.75, geom)
        assert np.array_equal(out.bits, base.bits)
    elapsed = time.monotonic() - started
    assert elapsed < 60
    record("test_permutation_invariance", f"{trials} permutations, {elapsed:.1f}s")


def test_ctt_improvement():
    """Threshold training strictly shrinks every net's count gap and does not
    reduce argmax agreement with the averaging oracle over the fixture suite.

    Agreement is aggregated across the 20 nets: the count-matching update is
    not argmax-aligned net by net, so single flips either way are expected at
    this scale; the measured aggregate delta is what gets reported.
    """
    from conftest import make_ctt_suite_network

    started = time.monotonic()
    cfg = VRConfig(16, 0, 16)
    nets = 20
    initial_losses = []
    final_losses = []
    before_calib = []
    after_calib = []
    before_held = []
    after_held = []
    for seed in range(700, 700 + nets):
        snn = convert_network(make_ctt_suite_network(seed, cfg))
        in_ch = snn.layers[0].geometry.in_channels
        calib_x = make_grid_input(seed + 90, (16, in_ch, 8, 8), cfg)
        held_x = make_grid_input(seed + 91, (24, in_ch, 8, 8), cfg)

        def agreement(x):
            train = encode_input(x, cfg)
            asg_logits, _ = asg_network_forward(snn, train)
            if_logits, _ = if_network_forward(snn, train)
            n = x.shape[0]
            return float(
                np.mean(
                    np.argmax(asg_logits.data.reshape(n, -1), axis=1)
                    == np.argmax(if_logits.data.reshape(n, -1), axis=1)
                )
            )

        before_calib.append(agreement(calib_x))
        before_held.append(agreement(held_x))
        result = ctt_train(snn, [calib_x], CttConfig(lr=0.05, epochs=30))
        after_calib.append(agreement(calib_x))
        after_held.append(agreement(held_x))
        assert result.final_mean_abs_loss() < result.initial_mean_abs_loss(), f"seed {seed}"
        initial_losses.append(result.initial_mean_abs_loss())
        final_losses.append(result.final_mean_abs_loss())
    elapsed = time.monotonic() - started
    assert elapsed < 600
    assert float(np.mean(after_calib)) >= float(np.mean(before_calib))
    assert float(np.mean(after_held)) >= float(np.mean(before_held))
    record(
        "test_ctt_improvement",
        f"{nets} nets: mean|L| {np.mean(initial_losses):.2f}->{np.mean(final_losses):.2f}, "
        f"agreement calib {np.mean(before_calib):.4f}->{np.mean(after_calib):.4f} "
        f"held {np.mean(before_held):.4f}->{np.mean(after_held):.4f}, {elapsed:.1f}s",
    )


def test_ice_traces():
    started = time.monotonic()
    half = ice_expand(Tensor(np.full((1, 1, 1, 1), 0.5)), IceConfig(phi=1, window=2))
    np.testing.assert_allclose(half.data.ravel(), [0.5, 0.5, 0.0], atol=1e-15)
    point_four = ice_expand(Tensor(np.full((1, 1, 1, 1), 0.4)), IceConfig(phi=1, window=2))
    np.testing.assert_allclose(point_four.data.ravel(), [0.0, 0.5, 0.0], atol=1e-15)
    for phi in (1, 2, 3):
        for channels in (1, 2, 5):
            x = Tensor(np.random.default_rng(phi + channels).uniform(0, 1, (2, channels, 3, 3)))
            out = ice_expand(x, IceConfig(phi=phi, window=4))
            assert out.shape[1] == 3 * phi * channels
    rng = np.random.default_rng(606)
    t = 6
    x = Tensor(rng.uniform(0, 1, (1, 1, 100, 100)))  # 10^4 elements
    out = ice_expand(x, IceConfig(phi=1, window=t))
    scaled = out.data * t
    assert np.array_equal(scaled, np.rint(scaled))
    assert scaled.min() >= 0 and scaled.max() <= t
    elapsed = time.monotonic() - started
    assert elapsed < 60
    record("test_ice_traces", f"hand traces, channel counts, 10^4-element closure, {elapsed:.1f}s")


def test_spike_accounting():
    t, shape = 8, (1, 509, 32, 32)
    size = int(np.prod(shape))
    assert t * size == 4_169_728
    rng = np.random.default_rng(52)
    flat = np.zeros(t * size, dtype=np.uint8)
    flat[rng.choice(t * size, size=476_035, replace=False)] = 1
    train = SpikeTrain(flat.reshape((t,) + shape))
    stats = SpikeStats()
    stats.add("input", train)
    report = spike_report(stats)
    assert report["fired"] == 476_035
    assert report["slots"] == 4_169_728
    assert abs(100.0 * report["ratio"] - 11.4) <= 0.05
    # totals equal per-layer sums on a fixture run
    cfg = VRConfig(8, 0, 6)
    net = fold_network(make_random_network(808, cfg))
    snn = convert_network(net)
    x = make_grid_input(809, (3, net.layers[0].geometry.in_channels, 8, 8), cfg)
    _, run_stats = asg_network_forward(snn, encode_input(x, cfg))
    assert run_stats.total_fired == sum(s.fired for s in run_stats.layers)
    assert run_stats.total_slots == sum(s.slots for s in run_stats.layers)
    record("test_spike_accounting", f"ratio {100.0 * report['ratio']:.4f}% vs 11.4%")


def test_truncation_witness():
    potentials = [0.1, 0.2, 0.5, 0.8, 0.9]
    state = NeuronState(membrane=np.zeros((1, 1, 1, 1)))
    clustered = []
    for p in potentials:
        plane, state = if_layer_step(state, Tensor(np.full((1, 1, 1, 1), p)), 1.0)
        clustered.append(int(plane.ravel()[0]))
    even = [int(v) for v in _fire_constant(np.full((1, 1, 1, 1), 0.5), 1.0, 5)[:, 0, 0, 0, 0]]
    assert sum(clustered[:2]) == 0
    assert sum(even[:2]) == 1
    record("test_truncation_witness", "2-step cut: clustered keeps 0 spikes, even keeps 1")


def test_kernel_oracles():
    from spikeforge import avgpool_forward, conv2d_forward, dense_forward

    started = time.monotonic()
    rng = np.random.default_rng(909)
    for _ in range(1000):
        n = int(rng.integers(1, 3))
        c = int(rng.integers(1, 4))
        o = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        h = int(rng.integers(k, k + 3))
        w = int(rng.integers(k, k + 3))
        x = rng.standard_normal((n, c, h, w))
        wt = rng.standard_normal((o, c, k, k))
        b = rng.standard_normal(o)
        geom = LayerGeometry(kind="conv", in_channels=c, out_channels=o, kernel=k, stride=s, padding=p)
        got = conv2d_forward(Tensor(x), Tensor(wt), b, geom)
        np.testing.assert_allclose(got.data, conv2d_naive(x, wt, b, s, p), atol=1e-12, rtol=0)
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        f = int(rng.integers(1, 10))
        o = int(rng.integers(1, 5))
        x = rng.standard_normal((n, f))
        wt = rng.standard_normal((o, f))
        b = rng.standard_normal(o)
        got = dense_forward(Tensor(x.reshape(n, f, 1, 1)), Tensor(wt.reshape(o, f, 1, 1)), b)
        np.testing.assert_allclose(got.data.reshape(n, o), dense_naive(x, wt, b), atol=1e-12, rtol=0)
    for _ in range(1000):
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 4))
        h = k + s * int(rng.integers(0, 3))
        w = k + s * int(rng.integers(0, 3))
        n = int(rng.integers(1, 3))
        c = int(rng.integers(1, 3))
        x = rng.standard_normal((n, c, h, w))
        got = avgpool_forward(Tensor(x), k, s)
        np.testing.assert_allclose(got.data, avgpool_naive(x, k, s), atol=1e-12, rtol=0)
    elapsed = time.monotonic() - started
    record("test_kernel_oracles", f"3x1000 random cases <=1e-12, {elapsed:.1f}s")
