"""Command-line entry point: benchmarks, demo runs, asset generation."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .assets import AssetError, TreeConfig, generate_tree
from .bench import bench_dynamics, bench_render, run_demo
from .camera import CameraConfig


def _add_bench_parsers(subparsers):
    bench = subparsers.add_parser("bench", help="throughput benchmarks")
    kinds = bench.add_subparsers(dest="bench_kind", required=True)

    dyn = kinds.add_parser("dynamics",
                           help="controller + integrator steps per second")
    dyn.add_argument("--envs", type=int, default=1024)
    dyn.add_argument("--steps", type=int, default=200)
    dyn.add_argument("--mode", choices=("attitude", "velocity"),
                     default="attitude")
    dyn.add_argument("--seed", type=int, default=0)
    dyn.add_argument("--workers", type=int, default=1)
    dyn.add_argument("--warmup", type=int, default=100)
    dyn.add_argument("--report", type=Path, default=None,
                     help="also write the report as JSON")

    ren = kinds.add_parser("render", help="depth camera frames per second")
    ren.add_argument("--envs", type=int, default=16)
    ren.add_argument("--frames", type=int, default=4)
    ren.add_argument("--width", type=int, default=480)
    ren.add_argument("--height", type=int, default=270)
    ren.add_argument("--hfov", type=float, default=1.57)
    ren.add_argument("--max-range", type=float, default=10.0)
    ren.add_argument("--seed", type=int, default=0)
    ren.add_argument("--workers", type=int, default=1)
    ren.add_argument("--report", type=Path, default=None)


def _add_demo_parser(subparsers):
    demo = subparsers.add_parser(
        "demo", help="fly a scripted goal-reaching episode per environment")
    demo.add_argument("--config", type=Path, default=None,
                      help="simulator config file (defaults when omitted)")
    demo.add_argument("--out", type=Path, default=Path("demo_out"))
    demo.add_argument("--seed", type=int, default=None)
    demo.add_argument("--workers", type=int, default=1)
    demo.add_argument("--max-steps", type=int, default=None)


def _add_assetgen_parser(subparsers):
    gen = subparsers.add_parser("assetgen", help="procedural asset generation")
    kinds = gen.add_subparsers(dest="asset_kind", required=True)
    tree = kinds.add_parser("tree", help="branching-cylinder tree")
    tree.add_argument("--depth", type=int, default=3)
    tree.add_argument("--branch-factor", type=int, default=2)
    tree.add_argument("--trunk-length", type=float, default=2.0)
    tree.add_argument("--trunk-radius", type=float, default=0.08)
    tree.add_argument("--length-decay", type=float, default=0.7)
    tree.add_argument("--radius-decay", type=float, default=0.6)
    tree.add_argument("--angle-range", type=float, default=0.7)
    tree.add_argument("--seed", type=int, default=0)
    tree.add_argument("--out", type=Path, required=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flocksim",
        description="Batched multirotor simulator: benchmarks, demos, assets")
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_bench_parsers(subparsers)
    _add_demo_parser(subparsers)
    _add_assetgen_parser(subparsers)
    args = parser.parse_args(argv)

    if args.command == "bench":
        if args.bench_kind == "dynamics":
            report = bench_dynamics(args.envs, args.steps, mode=args.mode,
                                    seed=args.seed, workers=args.workers,
                                    warmup=args.warmup)
        else:
            cam = CameraConfig(width=args.width, height=args.height,
                               hfov=args.hfov, max_range=args.max_range)
            report = bench_render(args.envs, args.frames, cam_cfg=cam,
                                  seed=args.seed, workers=args.workers)
        print(report.summary())
        if args.report is not None:
            report.write_json(args.report)
        return 0

    if args.command == "demo":
        code = run_demo(config_path=args.config, out_dir=args.out,
                        seed=args.seed, workers=args.workers,
                        max_steps=args.max_steps)
        if code == 0:
            print(f"demo complete; outputs in {args.out}")
        return code

    if args.command == "assetgen":
        try:
            cfg = TreeConfig(
                trunk_length=args.trunk_length, trunk_radius=args.trunk_radius,
                branch_factor=args.branch_factor, depth=args.depth,
                length_decay=args.length_decay, radius_decay=args.radius_decay,
                angle_range=args.angle_range, seed=args.seed)
            proto, text = generate_tree(cfg)
        except (ValueError, AssetError) as exc:
            print(f"assetgen failed: {exc}")
            return 1
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
        print(f"wrote {args.out} with {len(proto.primitives)} primitives")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
