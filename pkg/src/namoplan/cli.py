"""Command-line entry points: plan, simulate, bench, render.

Exit codes: 0 success, 2 domain outcome (no path found / goal not reached),
1 usage or IO error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import baselines, render
from .benchmark import GenParams, Scenario, generate_scenario, run_suite, run_trial
from .config import apply_overrides, load_config, save_config
from .errors import NamoplanError, NoPathFound, StartOrGoalBlocked
from .svg_planner import astar, build_svg, interpolate_waypoints, path_cost, room_walls


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="namoplan",
                                description="movability-aware navigation planning benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", help="scenario JSON file")
            sp.add_argument("--seed", type=int, default=None,
                            help="generate the scenario from this seed instead")
        sp.add_argument("--config", help="config JSON file (overrides defaults)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, e.g. --set mppi.K=128")

    sp = sub.add_parser("plan", help="build a graph and search it")
    common(sp)
    sp.add_argument("--planner", choices=baselines.PLANNER_KINDS, default="svg")
    sp.add_argument("--render", action="store_true", help="also write graph.png")

    sp = sub.add_parser("simulate", help="closed-loop trial on one scenario")
    common(sp)
    sp.add_argument("--planner", choices=baselines.PLANNER_KINDS, default="svg")
    sp.add_argument("--no-replan", action="store_true")
    sp.add_argument("--render", action="store_true", help="also write trace.png")

    sp = sub.add_parser("bench", help="run a seed x planner suite")
    common(sp, scenario=False)
    sp.add_argument("--seeds", default="0-24",
                    help="seed range like 0-24 or comma list like 3,7,11")
    sp.add_argument("--planner", action="append", dest="planners",
                    choices=baselines.PLANNER_KINDS,
                    help="repeatable; default all four")
    sp.add_argument("--no-replan", action="store_true")
    sp.add_argument("--mass-belief-error", type=float, default=None,
                    help="fraction of movable-believed obstacles given a heavy true mass")

    sp = sub.add_parser("render", help="draw a scenario, graph dump, or trace")
    sp.add_argument("input", help="scenario/graph JSON or trace JSONL")
    sp.add_argument("output", nargs="?", help="image path (default input stem + .png)")
    return p


def _parse_seeds(text: str):
    if "-" in text and "," not in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",") if s]


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _load_cfg(args):
    overrides = {}
    for item in getattr(args, "set", []):
        key, _, value = item.partition("=")
        overrides[key] = _coerce(value)
    return load_config(getattr(args, "config", None), overrides)


def _get_scenario(args, cfg) -> Scenario:
    if getattr(args, "scenario", None):
        return Scenario.load(args.scenario)
    if getattr(args, "seed", None) is not None:
        return generate_scenario(args.seed, GenParams.from_config(cfg))
    raise NamoplanError("need --scenario FILE or --seed N")


def _prepare_out(args, cfg):
    out = getattr(args, "out", None)
    if out:
        os.makedirs(out, exist_ok=True)
        save_config(cfg, os.path.join(out, "config.json"))
    return out


def _graph_dump(graph, ids):
    return {
        "nodes": [{"id": n.id, "position": [float(n.position[0]), float(n.position[1])],
                   "kind": n.kind, "cost": float(n.node_cost)}
                  for n in graph.nodes],
        "edges": [[int(a), int(b), float(w)] for a, b, w in graph.edges],
        "path": None if ids is None else [int(i) for i in ids],
    }


def cmd_plan(args) -> int:
    cfg = _load_cfg(args)
    scenario = _get_scenario(args, cfg)
    out = _prepare_out(args, cfg)
    pl = cfg["planner"]
    r, max_mass, spacing = float(pl["r"]), float(pl["max_mass"]), float(pl["spacing"])
    walls = room_walls(*scenario.room)

    t0 = time.perf_counter()
    dump, wps, found = None, None, False
    if args.planner == "brrt":
        bp = baselines.BrrtParams(**cfg["brrt"])
        try:
            pts = baselines.build_brrt(scenario.obstacles + walls, scenario.start,
                                       scenario.goal, r, max_mass,
                                       rng_seed=scenario.seed, params=bp,
                                       room=scenario.room)
            wps = interpolate_waypoints([np.asarray(p) for p in pts], spacing)
            found = True
        except NoPathFound:
            pass
    else:
        build = {"svg": build_svg, "bvg": baselines.build_bvg,
                 "nvg": baselines.build_nvg}[args.planner]
        kwargs = {} if args.planner == "nvg" else {"max_mass": max_mass}
        try:
            graph = build(scenario.obstacles + walls, scenario.start,
                          scenario.goal, r, room=scenario.room, **kwargs)
        except StartOrGoalBlocked as exc:
            print(f"no path: {exc}", file=sys.stderr)
            return 2
        ids = astar(graph)
        dump = _graph_dump(graph, ids)
        if ids is not None:
            found = True
            dump["path_cost"] = path_cost(graph, ids)
            wps = interpolate_waypoints([graph.nodes[i].position for i in ids],
                                        spacing)
    elapsed = time.perf_counter() - t0

    if out:
        scenario.save(os.path.join(out, "scenario.json"))
        if dump is not None:
            dump["scenario"] = scenario.to_dict()
            with open(os.path.join(out, "graph.json"), "w") as fh:
                json.dump(dump, fh, sort_keys=True)
        if wps is not None:
            with open(os.path.join(out, "waypoints.json"), "w") as fh:
                json.dump(wps.points.tolist(), fh)
        with open(os.path.join(out, "timing.txt"), "w") as fh:
            fh.write(f"{elapsed:.6f}\n")
        if args.render and dump is not None:
            render.render_graph(dump, os.path.join(out, "graph.png"))
    if not found:
        print("no path found", file=sys.stderr)
        return 2
    n = 0 if wps is None else len(wps.points)
    print(f"path found: {n} waypoints, {elapsed * 1e3:.1f} ms")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    scenario = _get_scenario(args, cfg)
    out = _prepare_out(args, cfg)
    trace_path = os.path.join(out, "trace.jsonl") if out else None
    if out:
        scenario.save(os.path.join(out, "scenario.json"))
    result = run_trial(scenario, args.planner, cfg,
                       replan_enabled=not args.no_replan,
                       trace_path=trace_path)
    if out:
        with open(os.path.join(out, "result.json"), "w") as fh:
            json.dump({k: (v if not isinstance(v, float) else float(v))
                       for k, v in result.__dict__.items()}, fh, sort_keys=True)
        if args.render and trace_path:
            render.render_trace(trace_path, os.path.join(out, "trace.png"))
    status = "reached goal" if result.executed else (
        "path found but goal not reached" if result.path_found else "no path")
    print(f"{status}: sim {result.exec_time:.1f} s, force {result.force_ns:.0f} N*s, "
          f"{result.replans} replans")
    return 0 if result.executed else 2


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    if args.mass_belief_error is not None:
        cfg = apply_overrides(
            cfg, {"generator.mass_belief_error": args.mass_belief_error})
    seeds = _parse_seeds(args.seeds)
    planners = args.planners or list(baselines.PLANNER_KINDS)
    out = getattr(args, "out", None)

    def progress(res):
        print(f"seed {res.seed} {res.planner}: "
              f"{'ok' if res.executed else ('path' if res.path_found else 'none')}",
              flush=True)

    trials, report = run_suite(seeds, planners, cfg, out_dir=out,
                               replan_enabled=not args.no_replan,
                               progress=progress)
    for row in report.rows:
        print(f"{row['planner']}: path {row['path_success_pct']:.0f}% "
              f"exec {row['exec_success_pct']:.0f}% "
              f"force {row['force_ns_mean']:.0f} N*s")
    return 0


def cmd_render(args) -> int:
    out = args.output or os.path.splitext(args.input)[0] + ".png"
    render.render_file(args.input, out)
    print(out)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        handler = {"plan": cmd_plan, "simulate": cmd_simulate,
                   "bench": cmd_bench, "render": cmd_render}[args.command]
        return handler(args)
    except (NamoplanError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
