"""Command-line front end.

Subcommands: gen, run, verify, opcount, schedule, report, roofline.
Exit codes: 0 success, 1 internal error, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import container, pipeline, resources, scheduler
from .errors import BinferError, ScheduleInfeasibleError, ValidationError
from .model import Padding, build_topology, generate_random_model

_PADDING = {"neg1": Padding.NEG_ONE, "none": Padding.NONE}

DEFAULT_CLOCK = 125_000_000
DEFAULT_FPS = 12_000


def _sigma(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad scale factor: {text!r}")


def _emit(args, payload: dict, text: str):
    print(json.dumps(payload, sort_keys=True) if args.json else text)


def _add_topology_args(p, padding_default="neg1"):
    p.add_argument("--sigma", type=_sigma, default=Fraction(1, 4), help="layer width scale")
    p.add_argument(
        "--padding", choices=sorted(_PADDING), default=padding_default,
        help="convolution padding mode"
    )


def cmd_gen(args) -> int:
    topology = build_topology(args.sigma, _PADDING[args.padding])
    layers = generate_random_model(topology, args.seed)
    container.save_model(topology, layers, args.out)
    print(f"wrote {topology.name} ({args.padding}, seed {args.seed}) to {args.out}")
    return 0


def cmd_run(args) -> int:
    model = container.load_model(args.model)
    with open(args.images, "rb") as f:
        frames = pipeline.load_frames(f.read())
    results = pipeline.run_batch(model, frames, workers=args.workers)
    out = sys.stdout if args.out is None else open(args.out, "w")
    try:
        for i, r in enumerate(results):
            out.write(json.dumps(r.to_json(frame=i), sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_verify(args) -> int:
    report = pipeline.verify_equivalence(
        args.sigma, args.trials, seed=args.seed, inject_fault=args.inject_fault
    )
    print(report.render_text())
    return 0 if report.bit_exact else 1


def cmd_opcount(args) -> int:
    report = pipeline.count_ops(build_topology(args.sigma, _PADDING[args.padding]))
    _emit(args, report.to_json(), report.render_text())
    return 0


def _schedule(args):
    topology = build_topology(args.sigma, _PADDING[args.padding])
    config, report = scheduler.schedule(
        topology, args.fps, args.clock, mmv_allowed=args.mmv, mmv_max=args.mmv_max
    )
    return topology, config, report


def cmd_schedule(args) -> int:
    _, config, report = _schedule(args)
    _emit(
        args,
        scheduler.schedule_json(config, report),
        scheduler.render_schedule_text(config, report),
    )
    return 0


def cmd_report(args) -> int:
    device = resources.load_device(args.device)
    topology, config, report = _schedule(args)
    bram = resources.bram_estimate(topology, config, device)
    latency = resources.latency_estimate(topology, config, device)
    balance = scheduler.rate_balance_check(config)
    if args.json:
        payload = {
            "schedule": scheduler.schedule_json(config, report),
            "bram": bram.to_json(),
            "latency_s": latency,
            "rate_balance": balance.to_json(),
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print(scheduler.render_schedule_text(config, report))
        print()
        print(bram.render_text())
        print()
        print(f"estimated latency {latency * 1e6:.1f} us")
        if balance.over_provisioned:
            print(f"over-provisioned layers: {', '.join(balance.over_provisioned)}")
    return 0


def cmd_roofline(args) -> int:
    device = resources.load_device(args.device)
    networks = []
    for sigma in args.networks or []:
        topology = build_topology(sigma, _PADDING[args.padding])
        ops = pipeline.count_ops(topology).total_ops
        _, rep = scheduler.schedule(topology, args.fps, args.clock)
        weight_bits = sum(
            g.neurons * g.synapses_per_neuron for _, g in topology.mvu_layers()
        )
        networks.append(
            resources.RooflineNetwork(
                topology.name, ops, weight_bits // 8, pipeline.FRAME_BYTES, rep.gops
            )
        )
    report = resources.roofline(device, networks)
    _emit(args, report.to_json(), report.render_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="binfer",
        description="Bit-exact binarized-network engine and design-space explorer",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random model file")
    _add_topology_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True, help="output .bnn path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="classify raw frames with a model")
    p.add_argument("--model", required=True, help=".bnn model path")
    p.add_argument("images", help="raw image file (3072 bytes per frame)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", default=None, help="JSON-lines output (default stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="compare the engine against the signed reference")
    p.add_argument("--sigma", type=_sigma, default=Fraction(1, 4))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--inject-fault", action="store_true",
        help="corrupt one layer first (harness self-test; must report a mismatch)"
    )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("opcount", help="operations per frame")
    _add_topology_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_opcount)

    for name, fn, extra in (
        ("schedule", cmd_schedule, False),
        ("report", cmd_report, True),
    ):
        p = sub.add_parser(name, help=f"folding {name}")
        _add_topology_args(p)
        p.add_argument("--fps", type=int, default=DEFAULT_FPS)
        p.add_argument("--clock", type=int, default=DEFAULT_CLOCK)
        p.add_argument("--mmv", action="store_true", help="allow matrix-multiple-vector folding")
        p.add_argument("--mmv-max", type=int, default=16)
        if extra:
            p.add_argument("--device", default="ku115", help="device file or packaged name")
        p.add_argument("--json", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("roofline", help="per-datatype peak performance")
    p.add_argument("--device", default="vx690t", help="device file or packaged name")
    p.add_argument(
        "--networks", type=_sigma, nargs="*", default=[Fraction(1, 4), Fraction(1, 2), Fraction(1)],
        help="cnn scales to mark on the roofline"
    )
    p.add_argument("--padding", choices=sorted(_PADDING), default="neg1")
    p.add_argument("--fps", type=int, default=DEFAULT_FPS)
    p.add_argument("--clock", type=int, default=DEFAULT_CLOCK)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_roofline)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except (ValidationError, ScheduleInfeasibleError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BinferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
