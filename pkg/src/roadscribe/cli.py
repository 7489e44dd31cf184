"""Command-line driver: run experiments, benchmark, serve live nodes, split clips."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .backend import render_timing_table, timing_rows_to_dicts, measure_response
from .clock import RealClock
from .node import NodeConfig, RsuNode
from .orchestrator import (
    ConfigError,
    ExperimentConfig,
    load_inputs,
    make_backend,
    run_experiment,
    with_overrides,
)
from .prompting import PromptConfig
from .segments import ManifestError, load_manifest, segment_to_record, split_segment
from .serving import serve_nodes
from .taxonomy import TaxonomyError


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config JSON")


def _cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    config = with_overrides(
        config,
        strategy=args.strategy,
        node_count=args.nodes,
        backend=args.backend,
        seed=args.seed,
        output_dir=args.out,
    )
    result = run_experiment(config)
    print(f"reports written to {Path(config.output_dir).resolve()}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    batch_sizes = [int(b) for b in args.batch.split(",") if b.strip()]
    taxonomy, segments = load_inputs(config)
    if not segments:
        print("error: manifest has no segments", file=sys.stderr)
        return 2
    segment = max(segments, key=lambda s: len(s.frames))
    clock = RealClock()
    backend = make_backend(config, taxonomy, clock)
    if hasattr(backend, "register"):
        backend.register(segment)  # type: ignore[attr-defined]
    rows = measure_response(
        backend,
        segment,
        batch_sizes,
        taxonomy,
        PromptConfig(config.keyframe_policy, config.window_half_width),
        frames_per_call=config.frames_per_call,
        template_id=config.template_id,
        clock=clock,
    )
    print(render_timing_table(rows), end="")
    if args.out:
        Path(args.out).write_text(
            json.dumps(timing_rows_to_dicts(rows), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        print(f"timing written to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    taxonomy, segments = load_inputs(config)
    clock = RealClock()
    backend_per_node = [
        make_backend(config, taxonomy, clock) for _ in range(config.node_count)
    ]
    node_config = NodeConfig(
        hazard_set=frozenset(config.hazard_set),
        strategy="on" if config.strategy == "both" else config.strategy,
        prompt=PromptConfig(config.keyframe_policy, config.window_half_width),
        template_id=config.template_id,
    )
    nodes = [
        RsuNode(f"rsu-{i + 1}", taxonomy, backend_per_node[i], node_config, clock)
        for i in range(config.node_count)
    ]
    cluster = serve_nodes(
        nodes, http_base_port=args.http_port, sock_base_port=args.sock_port
    )
    for address in cluster.http_addresses():
        print(f"serving {address}/state?kind=alerts", flush=True)

    try:
        if args.interval > 0 and segments:
            # Cycle the manifest through the nodes at a fixed cadence.
            i = 0
            while True:
                segment = segments[i % len(segments)]
                parts = split_segment(segment, config.node_count)
                for served, part in zip(cluster.nodes, parts):
                    served.runtime.inject(part)
                i += 1
                time.sleep(args.interval)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        print("\nshutting down")
    finally:
        cluster.stop()
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    segments = load_manifest(args.manifest)
    lines = []
    for segment in segments:
        for part in split_segment(segment, args.parts):
            lines.append(json.dumps(segment_to_record(part), sort_keys=True))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(lines)} parts to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadscribe",
        description="Distributed RSU driving-behavior narration experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full experiment and write reports")
    _add_config_arg(run)
    run.add_argument("--strategy", choices=["on", "off", "both"])
    run.add_argument("--nodes", type=int, dest="nodes")
    run.add_argument("--backend", choices=["mock", "remote"])
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    run.set_defaults(fn=_cmd_run)

    bench = sub.add_parser("bench", help="wall-clock response-time sweep")
    _add_config_arg(bench)
    bench.add_argument("--batch", default="1,15,30", help="comma-separated batch sizes")
    bench.add_argument("--out", help="optional JSON output path")
    bench.set_defaults(fn=_cmd_bench)

    serve = sub.add_parser("serve", help="serve live nodes over HTTP")
    _add_config_arg(serve)
    serve.add_argument("--http-port", type=int, default=8700, help="base HTTP port")
    serve.add_argument("--sock-port", type=int, default=8800, help="base envelope port")
    serve.add_argument(
        "--interval",
        type=float,
        default=0.0,
        help="seconds between automatic segment dispatches (0 = manual /inject only)",
    )
    serve.set_defaults(fn=_cmd_serve)

    split = sub.add_parser("split", help="split manifest clips into sequential parts")
    split.add_argument("--manifest", required=True)
    split.add_argument("--parts", type=int, required=True)
    split.add_argument("--out", help="output manifest path (default stdout)")
    split.set_defaults(fn=_cmd_split)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ManifestError, TaxonomyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
