"""Command-line surface: convert, run, train-thresholds, ice, report.

Reports are line-oriented key=value text so they stay trivially greppable.
Exit codes: 0 ok, 1 unexpected failure, 2 I/O or malformed container,
3 invalid configuration, 4 container-mode/engine mismatch, 5 empty
calibration set. The environment variable SPIKEFORGE_THREADS caps how many
worker threads evaluate a batch; results are bit-identical for any setting.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import container as cio
from . import raster
from .convert import convert_network, layer_threshold
from .ctt import CttConfig, ctt_train
from .engine import (
    SpikeStats,
    asg_network_forward,
    encode_input,
    if_network_forward,
    spike_report,
)
from .ice import IceConfig, ice_expand
from .network import MODE_ANN, MODE_SNN, NetworkSpec, ann_forward, fold_network
from .quantize import VRConfig, clamp, quantize
from .tensor import Tensor

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_IO = 2
EXIT_BADCFG = 3
EXIT_MISMATCH = 4
EXIT_EMPTY_CALIB = 5

ENGINES = ("ann", "snn-if", "snn-asg")


class CliError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _workers() -> int:
    raw = os.environ.get("SPIKEFORGE_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise CliError(EXIT_BADCFG, f"SPIKEFORGE_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise CliError(EXIT_BADCFG, f"SPIKEFORGE_THREADS must be >= 1, got {value}")
    return value


def _read_network(path) -> NetworkSpec:
    try:
        return cio.read_network(path)
    except cio.ContainerError as exc:
        raise CliError(EXIT_IO, f"bad network container {path}: {exc}")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}")


def _read_tensor(path) -> Tensor:
    try:
        return cio.read_tensor(path)
    except cio.ContainerError as exc:
        raise CliError(EXIT_IO, f"bad tensor container {path}: {exc}")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}")


def cmd_convert(args) -> int:
    net = _read_network(args.model)
    if net.mode != MODE_ANN:
        raise CliError(EXIT_MISMATCH, "convert expects an ANN-mode container")
    if args.tq is not None or args.tmin is not None or args.tmax is not None:
        if args.tq is None or args.tmin is None or args.tmax is None:
            raise CliError(EXIT_BADCFG, "--tq, --tmin and --tmax must be given together")
        try:
            cfg = VRConfig(t_q=args.tq, t_min=args.tmin, t_max=args.tmax)
        except ValueError as exc:
            raise CliError(EXIT_BADCFG, str(exc))
    elif net.cfg is not None:
        cfg = net.cfg
    else:
        raise CliError(EXIT_BADCFG, "container has no cfg; pass --tq/--tmin/--tmax")
    ann = NetworkSpec(layers=[replace(l) for l in net.layers], cfg=cfg, mode=MODE_ANN)
    snn = convert_network(fold_network(ann))
    try:
        cio.write_network(args.out, snn)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    print(f"theta={layer_threshold(cfg):g}")
    print(f"weight_scale={cfg.t / cfg.t_q:g}")
    print(f"bias_rail={cfg.lower:g}")
    print(f"window={cfg.t}")
    return EXIT_OK


def _snap_to_grid(x: Tensor, cfg: VRConfig) -> Tensor:
    return quantize(clamp(x, cfg), cfg)


def _chunk_slices(n: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, n)) if n else 1
    bounds = np.linspace(0, n, workers + 1, dtype=int)
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _merge_stats(parts: list[SpikeStats]) -> SpikeStats:
    merged = SpikeStats()
    if not parts:
        return merged
    from .engine import LayerStats

    for idx, entry in enumerate(parts[0].layers):
        fired = sum(p.layers[idx].fired for p in parts)
        slots = sum(p.layers[idx].slots for p in parts)
        merged.layers.append(LayerStats(entry.label, fired, slots))
    return merged


def _run_spiking(net: NetworkSpec, grid_input: Tensor, engine: str, workers: int):
    forward = asg_network_forward if engine == "snn-asg" else if_network_forward

    def one(chunk: Tensor):
        train = encode_input(chunk, net.cfg)
        logits, stats, trains = forward(net, train, return_trains=True)
        return logits, stats, [train] + trains

    slices = _chunk_slices(grid_input.shape[0], workers)
    chunks = [Tensor(grid_input.data[s]) for s in slices]
    if len(chunks) <= 1:
        results = [one(c) for c in chunks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(one, chunks))
    logits = Tensor(np.concatenate([r[0].data for r in results], axis=0))
    stats = _merge_stats([r[1] for r in results])
    trains = None
    if results:
        from .tensor import SpikeTrain

        trains = [
            SpikeTrain(np.concatenate([r[2][i].bits for r in results], axis=1))
            for i in range(len(results[0][2]))
        ]
    return logits, stats, trains


def _run_ann(net: NetworkSpec, grid_input: Tensor, cfg: VRConfig, workers: int) -> Tensor:
    slices = _chunk_slices(grid_input.shape[0], workers)
    chunks = [Tensor(grid_input.data[s]) for s in slices]

    def one(chunk: Tensor) -> Tensor:
        return ann_forward(net, chunk, cfg)

    if len(chunks) <= 1:
        results = [one(c) for c in chunks]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            results = list(pool.map(one, chunks))
    return Tensor(np.concatenate([r.data for r in results], axis=0))


def cmd_run(args) -> int:
    started = time.perf_counter()
    if args.engine not in ENGINES:
        raise CliError(EXIT_BADCFG, f"unknown engine {args.engine!r}")
    net = _read_network(args.model)
    want_mode = MODE_ANN if args.engine == "ann" else MODE_SNN
    if net.mode != want_mode:
        raise CliError(
            EXIT_MISMATCH,
            f"engine {args.engine} needs a {want_mode}-mode container, got {net.mode}",
        )
    if net.cfg is None:
        raise CliError(EXIT_MISMATCH, "container has no cfg; re-export it with one")
    cfg = net.cfg
    x = _read_tensor(args.input)
    labels = None
    try:
        labels = cio.read_labels(args.input)
    except cio.ContainerError as exc:
        raise CliError(EXIT_IO, str(exc))
    if args.ice_phi:
        try:
            ice_cfg = IceConfig(phi=args.ice_phi, window=cfg.t)
            x = ice_expand(x, ice_cfg, varied_levels=args.ice_varied_levels)
        except ValueError as exc:
            raise CliError(EXIT_BADCFG, str(exc))
    grid_input = _snap_to_grid(x, cfg)
    workers = _workers()

    lines = [f"engine={args.engine}", f"inputs={grid_input.shape[0]}"]
    trains = None
    if args.engine == "ann":
        logits = _run_ann(fold_network(net), grid_input, cfg, workers)
        stats = None
    else:
        logits, stats, trains = _run_spiking(net, grid_input, args.engine, workers)
    preds = np.argmax(logits.data.reshape(logits.shape[0], -1), axis=1)
    for idx, pred in enumerate(preds):
        lines.append(f"pred.{idx}={int(pred)}")
    if labels is not None:
        if len(labels) != len(preds):
            raise CliError(
                EXIT_IO, f"{len(labels)} labels for {len(preds)} inputs in {args.input}"
            )
        correct = int(np.sum(np.asarray(labels) == preds))
        lines.append(f"accuracy={correct / len(preds):.6f}")
    if stats is not None:
        report = spike_report(stats, unit_cost=args.unit_cost)
        for i, entry in enumerate(report["layers"]):
            lines.append(f"layer.{i}.label={entry['label']}")
            lines.append(f"layer.{i}.fired={entry['fired']}")
            lines.append(f"layer.{i}.slots={entry['slots']}")
            lines.append(f"layer.{i}.ratio={entry['ratio']:.6f}")
        lines.append(f"total.fired={report['fired']}")
        lines.append(f"total.slots={report['slots']}")
        lines.append(f"total.ratio={report['ratio']:.6f}")
        lines.append(f"energy.unit_cost={report['unit_cost']:g}")
        lines.append(f"energy.proxy={report['energy_proxy']:g}")
    if args.dump_spikes and trains is not None:
        try:
            os.makedirs(args.dump_spikes, exist_ok=True)
            names = ["input"] + [f"layer{i}" for i in range(len(trains) - 1)]
            for name, train in zip(names, trains):
                raster.dump_spikes(train, os.path.join(args.dump_spikes, f"{name}.spk"))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write raster dump: {exc}")
    for line in lines:
        print(line)
    print(f"wall_time_s={time.perf_counter() - started:.6f}")
    return EXIT_OK


def cmd_train_thresholds(args) -> int:
    net = _read_network(args.model)
    if net.mode != MODE_SNN:
        raise CliError(EXIT_MISMATCH, "train-thresholds expects an SNN-mode container")
    calib = _read_tensor(args.calib)
    if calib.shape[0] == 0:
        raise CliError(EXIT_EMPTY_CALIB, "calibration set is empty")
    try:
        cfg = CttConfig(lr=args.lr, epochs=args.epochs, batch=args.batch)
    except ValueError as exc:
        raise CliError(EXIT_BADCFG, str(exc))
    grid_calib = _snap_to_grid(calib, net.cfg)
    result = ctt_train(net, [grid_calib], cfg)
    try:
        cio.write_network(args.out, net)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    print(f"initial_mean_abs_loss={result.initial_mean_abs_loss():.6f}")
    print(f"final_mean_abs_loss={result.final_mean_abs_loss():.6f}")
    for idx, history in sorted(result.loss_history.items()):
        print(f"layer.{idx}.epochs={len(history)}")
        print(f"layer.{idx}.initial_loss={history[0]:.6f}")
        print(f"layer.{idx}.final_loss={history[-1]:.6f}")
    return EXIT_OK


def cmd_ice(args) -> int:
    x = _read_tensor(args.input)
    try:
        cfg = IceConfig(phi=args.phi, window=args.window)
        expanded = ice_expand(x, cfg, varied_levels=args.varied_levels)
    except ValueError as exc:
        raise CliError(EXIT_BADCFG, str(exc))
    try:
        cio.write_tensor(args.out, expanded)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc}")
    print(f"channels={expanded.shape[1]}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        train = raster.load_spikes(args.raster)
    except raster.RasterError as exc:
        raise CliError(EXIT_IO, f"bad raster {args.raster}: {exc}")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.raster}: {exc}")
    fired = train.fired()
    slots = train.slots()
    print(f"window={train.window}")
    print(f"shape={','.join(str(s) for s in train.shape)}")
    print(f"fired={fired}")
    print(f"slots={slots}")
    print(f"ratio={fired / slots if slots else 0.0:.6f}")
    print(f"percent={100.0 * fired / slots if slots else 0.0:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeforge",
        description="Convert quantized ANNs to spiking networks and run them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert an ANN container to its spiking twin")
    p.add_argument("model", help="ANN container directory")
    p.add_argument("out", help="output SNN container directory")
    p.add_argument("--tq", type=int, default=None, help="quantization level count")
    p.add_argument("--tmin", type=int, default=None, help="lower window bound")
    p.add_argument("--tmax", type=int, default=None, help="upper window bound")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("run", help="evaluate a container on an input tensor")
    p.add_argument("model", help="network container directory")
    p.add_argument("input", help="input tensor container directory")
    p.add_argument("--engine", choices=ENGINES, required=True)
    p.add_argument("--ice-phi", type=int, default=0, help="input channel expansion factor")
    p.add_argument("--ice-varied-levels", action="store_true")
    p.add_argument("--dump-spikes", default=None, help="directory for raster dumps")
    p.add_argument("--unit-cost", type=float, default=1.0, help="energy per fired spike")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train-thresholds", help="train per-channel IF thresholds")
    p.add_argument("model", help="SNN container directory")
    p.add_argument("calib", help="calibration tensor container directory")
    p.add_argument("out", help="output SNN container directory")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=None)
    p.set_defaults(func=cmd_train_thresholds)

    p = sub.add_parser("ice", help="expand input channels at neighbouring levels")
    p.add_argument("input", help="input tensor container directory")
    p.add_argument("out", help="output tensor container directory")
    p.add_argument("--phi", type=int, required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--varied-levels", action="store_true")
    p.set_defaults(func=cmd_ice)

    p = sub.add_parser("report", help="summarize a spike raster dump")
    p.add_argument("raster", help="raster file path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # malformed input must never crash the process
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
