"""Comparison planners: plain visibility graph, binary-movability variant, RRT.

All three consume the same scenario data and emit the same waypoint type as
the main planner, so the controller downstream is planner-agnostic.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NoPathFound
from .geometry import inflate
from .svg_planner import (
    DEFAULT_MAX_MASS,
    DEFAULT_RADIUS,
    SemanticGraph,
    build_svg,
)

PLANNER_KINDS = ("nvg", "bvg", "brrt", "svg")


def build_nvg(obstacles, start, goal, r: float = DEFAULT_RADIUS, *,
              room=None, strict=True) -> SemanticGraph:
    """Visibility graph treating every obstacle as stationary: no passage
    nodes, no node costs.  Narrow gaps simply disconnect the graph."""
    return build_svg(obstacles, start, goal, r, max_mass=0.0, room=room,
                     strict=strict, include_passages=False)


def build_bvg(obstacles, start, goal, r: float = DEFAULT_RADIUS,
              max_mass: float = DEFAULT_MAX_MASS, *, room=None,
              strict=True) -> SemanticGraph:
    """Binary-movability variant: same passage connectivity as the main
    planner, but nodes sit at boundary midpoints and carry zero cost."""
    return build_svg(obstacles, start, goal, r, max_mass, room=room,
                     strict=strict, passage_gamma=0.5, zero_passage_cost=True)


class BrrtParams:
    def __init__(self, step: float = 0.3, goal_bias: float = 0.1,
                 max_iters: int = 20000, smooth: bool = True):
        self.step = float(step)
        self.goal_bias = float(goal_bias)
        self.max_iters = int(max_iters)
        self.smooth = bool(smooth)


class _StaticField:
    """Inflated non-movable hulls packed for fast point/segment validity."""

    def __init__(self, obstacles, r, max_mass):
        self.polys = [inflate(o.world_hull, r) for o in obstacles
                      if o.mass > max_mass]
        self.halfplanes = [p.halfplanes() for p in self.polys]

    def point_valid(self, p) -> bool:
        for normals, offsets in self.halfplanes:
            if np.all(normals @ p <= offsets + 1e-9):
                return False
        return True

    def segment_valid(self, a, b) -> bool:
        dx, dy = b[0] - a[0], b[1] - a[1]
        for normals, offsets in self.halfplanes:
            t0, t1 = 0.0, 1.0
            blocked = True
            for k in range(len(offsets)):
                nx, ny = normals[k]
                d = offsets[k] - 1e-9
                denom = nx * dx + ny * dy
                num = d - (nx * a[0] + ny * a[1])
                if abs(denom) < 1e-15:
                    if num < 0.0:
                        blocked = False
                        break
                elif denom > 0.0:
                    t1 = min(t1, num / denom)
                else:
                    t0 = max(t0, num / denom)
                if t0 >= t1 - 1e-12:
                    blocked = False
                    break
            if blocked:
                return False
        return True


def build_brrt(obstacles, start, goal, r: float = DEFAULT_RADIUS,
               max_mass: float = DEFAULT_MAX_MASS, rng_seed=0,
               params: BrrtParams = None, *, room=(4.0, 8.0)) -> list:
    """RRT over robot positions where movable obstacles (and their margins)
    are permeable; only non-movable inflated hulls and the room bound the
    samples.  Greedy shortcutting trims the usual zigzag unless disabled.

    Returns the path as a list of points; raises NoPathFound when the
    iteration budget runs out.
    """
    params = params or BrrtParams()
    rng = np.random.default_rng(rng_seed)
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    field = _StaticField(obstacles, r, max_mass)
    if not field.point_valid(start) or not field.point_valid(goal):
        raise NoPathFound("start or goal inside a non-movable region")

    cap = params.max_iters + 1
    nodes = np.empty((cap, 2))
    parents = np.empty(cap, dtype=np.int64)
    nodes[0] = start
    parents[0] = -1
    n = 1
    w, l = float(room[0]), float(room[1])
    step = params.step

    goal_idx = -1
    for _ in range(params.max_iters):
        if rng.random() < params.goal_bias:
            target = goal
        else:
            target = np.array([rng.uniform(0.0, w), rng.uniform(0.0, l)])
        d2 = (nodes[:n, 0] - target[0]) ** 2 + (nodes[:n, 1] - target[1]) ** 2
        near = int(np.argmin(d2))
        dist = math.sqrt(d2[near])
        if dist < 1e-12:
            continue
        frac = min(1.0, step / dist)
        new = nodes[near] + frac * (target - nodes[near])
        if not field.point_valid(new) or not field.segment_valid(nodes[near], new):
            continue
        nodes[n] = new
        parents[n] = near
        n += 1
        if math.hypot(new[0] - goal[0], new[1] - goal[1]) <= step and \
                field.segment_valid(new, goal):
            nodes[n] = goal
            parents[n] = n - 1
            goal_idx = n
            n += 1
            break
    if goal_idx < 0:
        raise NoPathFound(f"no connection after {params.max_iters} iterations")

    path = [goal_idx]
    while parents[path[-1]] >= 0:
        path.append(int(parents[path[-1]]))
    pts = [nodes[i].copy() for i in path[::-1]]

    if params.smooth and len(pts) > 2:
        out = [pts[0]]
        i = 0
        while i < len(pts) - 1:
            j = len(pts) - 1
            while j > i + 1 and not field.segment_valid(pts[i], pts[j]):
                j -= 1
            out.append(pts[j])
            i = j
        pts = out
    return pts
