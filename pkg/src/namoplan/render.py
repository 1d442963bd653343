"""Static figure output for scenarios, planner graphs, and execution traces.

Everything renders through the Agg backend into vector or raster files; no
interactive windows.
"""

from __future__ import annotations

import json
import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Polygon as MplPolygon

from .geometry import Obstacle, Polygon


def _mass_color(mass: float, max_mass: float = 30.0):
    if not math.isfinite(mass) or mass > max_mass:
        return (0.25, 0.25, 0.28)
    # light obstacles nearly white, threshold-mass ones mid gray
    t = min(mass / max_mass, 1.0)
    g = 0.92 - 0.45 * t
    return (g, g, g)


def _draw_scenario(ax, scenario: dict):
    w, l = scenario["room"]
    ax.add_patch(plt.Rectangle((0, 0), w, l, fill=False, lw=2, ec="black"))
    for entry in scenario["obstacles"]:
        o = Obstacle(id=entry["id"], shape=Polygon(entry["vertices"]),
                     pose=tuple(entry["pose"]), mass=entry["mass_believed"],
                     mass_true=entry["mass_true"])
        hull = o.world_hull
        ax.add_patch(MplPolygon(hull.vertices, closed=True,
                                fc=_mass_color(entry["mass_believed"]),
                                ec="black", lw=0.8))
        c = hull.centroid
        label = "static" if entry["mass_believed"] > 900 else \
            f"{entry['mass_believed']:.0f}kg"
        ax.annotate(f"{entry['id']}\n{label}", c, ha="center", va="center",
                    fontsize=6)
    ax.plot(*scenario["start"], "o", color="tab:green", ms=9, zorder=5)
    ax.plot(*scenario["goal"], "*", color="tab:red", ms=14, zorder=5)
    ax.set_xlim(-0.3, w + 0.3)
    ax.set_ylim(-0.3, l + 0.3)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _new_axes(scenario):
    w, l = scenario["room"]
    fig, ax = plt.subplots(figsize=(0.9 * w, 0.9 * l * 0.6 + 2))
    _draw_scenario(ax, scenario)
    return fig, ax


def render_scenario(scenario: dict, out_path: str):
    fig, ax = _new_axes(scenario)
    fig.savefig(out_path, bbox_inches="tight", dpi=150)
    plt.close(fig)


def render_graph(dump: dict, out_path: str):
    """Graph dump figure: nodes by kind, edges, and the found path if any."""
    if isinstance(dump, str):
        with open(dump) as fh:
            dump = json.load(fh)
    fig, ax = _new_axes(dump["scenario"])
    pos = {n["id"]: n["position"] for n in dump["nodes"]}
    for a, b, _ in dump["edges"]:
        xa, ya = pos[a]
        xb, yb = pos[b]
        ax.plot([xa, xb], [ya, yb], color="tab:blue", lw=0.3, alpha=0.35,
                zorder=2)
    for n in dump["nodes"]:
        x, y = n["position"]
        if n["kind"] == "passage":
            ax.plot(x, y, "D", color="tab:orange", ms=6, zorder=4)
            ax.annotate(f"{n['cost']:.1f}", (x, y), fontsize=5,
                        xytext=(3, 3), textcoords="offset points")
        else:
            ax.plot(x, y, ".", color="tab:blue", ms=4, zorder=3)
    if dump.get("path"):
        xs = [pos[i][0] for i in dump["path"]]
        ys = [pos[i][1] for i in dump["path"]]
        ax.plot(xs, ys, color="tab:red", lw=2, zorder=5)
    fig.savefig(out_path, bbox_inches="tight", dpi=150)
    plt.close(fig)


def render_trace(trace_path: str, out_path: str):
    """Executed-trajectory figure with displaced-obstacle overlays."""
    header = None
    steps = []
    replans = []
    with open(trace_path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec["type"] == "header":
                header = rec
            elif rec["type"] == "step":
                steps.append(rec)
            elif rec["type"] == "replan":
                replans.append(rec)
    if header is None:
        raise ValueError(f"{trace_path}: no header record")
    scenario = header["scenario"]
    fig, ax = _new_axes(scenario)

    if header.get("waypoints"):
        wx = [p[0] for p in header["waypoints"]]
        wy = [p[1] for p in header["waypoints"]]
        ax.plot(wx, wy, "--", color="tab:green", lw=1.0, zorder=3)

    final_poses = {}
    for s in steps:
        final_poses.update(s.get("moved", {}))
    for entry in scenario["obstacles"]:
        if entry["id"] in final_poses:
            o = Obstacle(id=entry["id"], shape=Polygon(entry["vertices"]),
                         pose=tuple(final_poses[entry["id"]]))
            hull = o.world_hull
            ax.add_patch(MplPolygon(hull.vertices, closed=True, fill=False,
                                    ec="tab:purple", lw=1.0, ls=":", zorder=4))
            start_pose = entry["pose"]
            ax.annotate("", xy=final_poses[entry["id"]][:2],
                        xytext=start_pose[:2],
                        arrowprops=dict(arrowstyle="->", color="tab:purple",
                                        lw=1.2))
    if steps:
        xs = [s["pose"][0] for s in steps]
        ys = [s["pose"][1] for s in steps]
        ax.plot(xs, ys, color="tab:red", lw=1.5, zorder=5)
    for rp in replans:
        i = min(rp["cycle"], len(steps) - 1)
        if 0 <= i < len(steps):
            ax.plot(steps[i]["pose"][0], steps[i]["pose"][1], "x",
                    color="black", ms=10, mew=2, zorder=6)
    fig.savefig(out_path, bbox_inches="tight", dpi=150)
    plt.close(fig)


def render_file(in_path: str, out_path: str):
    """Dispatch on file content: trace JSONL, graph dump, or bare scenario."""
    with open(in_path) as fh:
        first = fh.readline()
    try:
        probe = json.loads(first)
    except json.JSONDecodeError:
        probe = None
    if isinstance(probe, dict) and probe.get("type") == "header":
        return render_trace(in_path, out_path)
    with open(in_path) as fh:
        data = json.load(fh)
    if "nodes" in data:
        return render_graph(data, out_path)
    if "obstacles" in data:
        return render_scenario(data, out_path)
    raise ValueError(f"{in_path}: not a scenario, graph dump, or trace")
