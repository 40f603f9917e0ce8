"""Command-line front door: ``locgraph <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error.
Summaries go to stdout as JSON; ``--out`` additionally writes files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, DataError
from ..geometry import write_pgm
from ..maintainer import read_step_log
from ..topograph import TopoGraph
from .config import RunConfig, dump_config, load_config
from .sensors import NOISE_LEVELS, simulate_sensors

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n")


def _config(args) -> RunConfig:
    cfg = load_config(args.config or (), args.set or ())
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_graph(path) -> TopoGraph:
    try:
        return TopoGraph.load(path)
    except OSError as exc:
        raise DataError(f"cannot read graph {path}: {exc}") from exc


def _load_world(path):
    from ..evaluation.world import WorldModel
    from .sequence import read_world

    if path is None:
        return None
    path = Path(path)
    if path.is_dir():
        return read_world(path)
    try:
        return WorldModel.load(path)
    except OSError as exc:
        raise DataError(f"cannot read world {path}: {exc}") from exc


# ---- verbs ----

def cmd_synth(args) -> int:
    from .sequence import write_sequence
    from .synth import synth_world

    cfg = _config(args)
    if args.noise is not None:
        cfg = cfg.with_noise_level(args.noise)
    plan, traj = synth_world(cfg.seed, cfg.synth)
    frames = simulate_sensors(plan.world, traj, cfg.noise, cfg.sensor)
    if args.room_descriptors:
        # one-hot room id per frame, for runs with the external encoder
        n = len(plan.rooms)
        rows = []
        for f in frames:
            v = [0.0] * (n + 1)
            r = plan.room_of(f.gt_pose.dx, f.gt_pose.dy)
            v[r if r >= 0 else n] = 1.0
            rows.append(replace(f, descriptor=v))
        frames = rows
    root = write_sequence(args.out, frames, plan.world, traj)
    (root / "config.yaml").write_text(dump_config(cfg))
    length = float(sum(math.hypot(*(traj[i + 1, 1:3] - traj[i, 1:3])) for i in range(len(traj) - 1)))
    _emit({"sequence": str(root), "frames": len(frames), "rooms": len(plan.rooms),
           "free_area_m2": plan.world.free_area, "trajectory_length_m": length, "seed": cfg.seed})
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import run_mapping
    from .sequence import iter_sequence

    cfg = _config(args)
    result = run_mapping(iter_sequence(args.sequence), cfg)
    summary = {**result.perf.summary(), "cases": result.case_counts(),
               "n_nodes": len(result.graph.nodes), "n_edges": result.graph.n_edges}
    out = _out_dir(args)
    if out is not None:
        result.graph.save(out / "graph.lgrf")
        if cfg.output.step_log:
            (out / "steps.jsonl").write_text(result.step_log())
        if cfg.output.localizer_debug:
            (out / "localizer.jsonl").write_text("".join(loc.debug_line() + "\n" for loc in result.localizations))
        _write_json(out / "perf.json", summary)
        (out / "config.yaml").write_text(dump_config(cfg))
    _emit(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    from ..evaluation.metrics import evaluate
    from .render import plot_spl_terms
    from .sequence import read_trajectory, read_world

    cfg = _config(args)
    g = _load_graph(args.graph)
    world = _load_world(args.world) if args.world else read_world(args.sequence)
    traj = read_trajectory(args.sequence)
    if world is None or traj is None:
        raise DataError(f"{args.sequence}: evaluation needs world.yaml and trajectory.csv")
    ev = cfg.evaluation
    report = evaluate(g, world, traj, ev.n_pairs, cfg.seed, ev.min_separation, ev.footprint_radius)
    out = _out_dir(args)
    if out is not None:
        (out / "metrics.json").write_text(report.to_json() + "\n")
        with open(out / "spl_pairs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sx", "sy", "gx", "gy", "path_m", "path_g", "consistent", "term", "reason"])
            for r in report.pairs:
                w.writerow([*r.start, *r.goal, r.path_m, r.path_g, int(r.consistent), r.term, r.reason])
        if cfg.output.figures:
            plot_spl_terms([r.term for r in report.pairs], out / "spl_terms.svg")
    _emit(report.summary())
    return EXIT_OK


def cmd_bench_match(args) -> int:
    from .bench import benchmark_matching, generate_suite
    from .render import plot_match_errors

    cfg = _config(args)
    target = Path(args.pairs)
    if args.generate is not None:
        pairs = generate_suite(target, args.generate, cfg.seed, cfg.maintainer.overlap_tolerance,
                               cfg.projection, cfg.sensor)
    else:
        pairs = target / "pairs.csv" if target.is_dir() else target
    try:
        report = benchmark_matching(pairs, cfg.matcher, args.detector or cfg.localizer.detector)
    except OSError as exc:
        raise DataError(f"cannot read pairs {pairs}: {exc}") from exc
    rows = report.pop("pairs")
    out = _out_dir(args)
    if out is not None:
        _write_json(out / "bench.json", report)
        with open(out / "bench_pairs.csv", "w", newline="") as fh:
            fields = ["scan_a", "scan_b", "kind", "iou", "accepted", "correct", "error_m",
                      "score", "inliers", "matches", "runtime_s"]
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(rows)
        if cfg.output.figures:
            plot_match_errors(rows, out / "match_errors.svg")
    _emit(report)
    return EXIT_OK


def cmd_render(args) -> int:
    from .render import render_svg

    _config(args)
    g = _load_graph(args.graph)
    world = _load_world(args.world)
    outcomes = None
    if args.steps:
        try:
            outcomes = read_step_log(args.steps)
        except OSError as exc:
            raise DataError(f"cannot read step log {args.steps}: {exc}") from exc
    path = render_svg(g, world, outcomes, args.out)
    _emit({"svg": str(path), "nodes": len(g.nodes), "edges": g.n_edges})
    return EXIT_OK


def cmd_export(args) -> int:
    _config(args)
    g = _load_graph(args.graph)
    out = Path(args.out)
    if args.format == "graphml":
        out.parent.mkdir(parents=True, exist_ok=True)
        g.write_graphml(out)
        written = [str(out)]
    elif args.format == "dot":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(g.to_dot())
        written = [str(out)]
    else:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for i in sorted(g.nodes):
            p = out / f"node_{i:04d}.pgm"
            write_pgm(p, g.nodes[i].scan.to_byte_image())
            written.append(str(p))
    _emit({"format": args.format, "written": written})
    return EXIT_OK


# ---- parser ----

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", metavar="FILE",
                        help="YAML or JSON config; repeat to layer files in order")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key, e.g. maintainer.location_radius=5")
    common.add_argument("--seed", type=int, default=None, help="seed for every random stream")

    p = argparse.ArgumentParser(prog="locgraph", description="Online topological mapping with a graph of locations.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic world and sensor sequence")
    s.add_argument("out", help="sequence directory to write")
    s.add_argument("--noise", choices=sorted(NOISE_LEVELS), default=None, help="preset odometry noise level")
    s.add_argument("--room-descriptors", action="store_true",
                   help="write one-hot room descriptors for the external encoder")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", parents=[common], help="build a graph from a sequence")
    s.add_argument("sequence", help="sequence directory")
    s.add_argument("--out", default=None, help="directory for graph.lgrf, steps.jsonl, perf.json")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", parents=[common], help="score a graph against the ground-truth world")
    s.add_argument("sequence", help="sequence directory holding world.yaml and trajectory.csv")
    s.add_argument("graph", help="graph container")
    s.add_argument("--world", default=None, help="world.yaml overriding the sequence's world")
    s.add_argument("--out", default=None, help="directory for metrics.json, spl_pairs.csv and figures")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench-match", parents=[common], help="pairwise scan-matching benchmark")
    s.add_argument("pairs", help="pairs CSV, or a directory holding pairs.csv")
    s.add_argument("--generate", type=int, default=None, metavar="N",
                   help="first write an N-pair synthetic suite into the PAIRS directory")
    s.add_argument("--detector", default=None, help="feature detector tag (default: localizer.detector)")
    s.add_argument("--out", default=None, help="directory for bench.json, bench_pairs.csv and figures")
    s.set_defaults(func=cmd_bench_match)

    s = sub.add_parser("render", parents=[common], help="draw a graph over its world as SVG")
    s.add_argument("graph", help="graph container")
    s.add_argument("--world", default=None, help="world.yaml or a sequence directory")
    s.add_argument("--steps", default=None, help="step log used to mark loop closures")
    s.add_argument("-o", "--out", default="graph.svg", help="output SVG path")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("export", parents=[common], help="convert a graph to GraphML, DOT or scan images")
    s.add_argument("graph", help="graph container")
    s.add_argument("--format", choices=("graphml", "dot", "scans"), default="graphml")
    s.add_argument("-o", "--out", required=True, help="output file, or directory for scans")
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = lambda msg, *a, **k: print(f"locgraph: warning: {msg}", file=sys.stderr)
            return args.func(args)
    except ConfigError as exc:
        print(f"locgraph: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"locgraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
