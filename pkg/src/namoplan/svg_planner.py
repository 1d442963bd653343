"""Movability-aware visibility graph construction and search.

The graph has two node families: free nodes (inflated obstacle corners plus
start and goal) and passage nodes placed inside gaps that are too narrow for
collision-free transit but flanked by at least one obstacle light enough to
push.  Passage nodes carry an effort cost that grows with the masses of the
adjacent obstacles and with how deeply the node breaches their margins; A*
folds those costs into the path objective.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateInput, GoalUnreachable, StartOrGoalBlocked
from .geometry import (
    TOL,
    Obstacle,
    Polygon,
    closest_point_on_polygon,
    convex_hull,
    inflate,
    min_distance,
    point_to_polygon_distance,
    segment_clear,
)

DEFAULT_RADIUS = 0.3       # robot safety margin, meters
DEFAULT_MAX_MASS = 30.0    # movability threshold, kg
DEFAULT_SPACING = 0.5      # waypoint interpolation interval, meters
WALL_THICKNESS = 0.2       # meters
WALL_MASS = 1000.0         # kg, decisively non-movable but finite


@dataclass
class GraphNode:
    id: int
    position: np.ndarray
    kind: str                      # "free" or "passage"
    node_cost: float = 0.0
    passage_meta: dict | None = None


@dataclass
class PassageBoundary:
    """A gap-crossing edge of the stage-II hull, endpoints on opposite sides."""

    endpoints: tuple               # (point on first obstacle's side, point on second's)
    side_masses: tuple
    kind: str                      # "entry" or "exit"


@dataclass
class Waypoints:
    points: np.ndarray             # (n, 2)
    spacing: float

    def __len__(self):
        return len(self.points)


class SemanticGraph:
    """Undirected graph over GraphNodes with Euclidean edge lengths."""

    def __init__(self, nodes, edges, start_id, goal_id):
        self.nodes = nodes
        self.edges = edges
        self.start_id = start_id
        self.goal_id = goal_id
        self._adj = None

    def adjacency(self):
        if self._adj is None:
            adj = {n.id: [] for n in self.nodes}
            for a, b, length in self.edges:
                adj[a].append((b, length))
                adj[b].append((a, length))
            self._adj = adj
        return self._adj

    def node(self, node_id) -> GraphNode:
        return self.nodes[node_id]

    @property
    def passage_nodes(self):
        return [n for n in self.nodes if n.kind == "passage"]


def room_walls(width: float, length: float, thickness: float = WALL_THICKNESS,
               mass: float = WALL_MASS) -> list:
    """Four thin rectangles flush against the room boundary, outside the room.

    Modeling walls as ordinary non-movable obstacles lets wall-adjacent
    movable obstacles form passage pairs, and gives the simulator hard
    boundaries for free.  Rectangles overlap at the corners so there are no
    diagonal escape slits.
    """
    t = thickness
    w, l = float(width), float(length)

    def rect(x0, y0, x1, y1):
        return Polygon([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    return [
        Obstacle(id="wall_s", shape=rect(-t, -t, w + t, 0.0), mass=mass),
        Obstacle(id="wall_n", shape=rect(-t, l, w + t, l + t), mass=mass),
        Obstacle(id="wall_w", shape=rect(-t, -t, 0.0, l + t), mass=mass),
        Obstacle(id="wall_e", shape=rect(w, -t, w + t, l + t), mass=mass),
    ]


# ---------------------------------------------------------------------------
# passage pairs and nodes


def find_passage_pairs(obstacles, r: float, max_mass: float) -> list:
    """Unordered index pairs whose hulls sit closer than 2r with one pushable member."""
    hulls = [o.world_hull for o in obstacles]
    pairs = []
    for i in range(len(obstacles)):
        for j in range(i + 1, len(obstacles)):
            if not (obstacles[i].mass <= max_mass or obstacles[j].mass <= max_mass):
                continue
            ci, cj = hulls[i].centroid, hulls[j].centroid
            reach = hulls[i].bounding_radius(ci) + hulls[j].bounding_radius(cj) + 2.0 * r
            if np.hypot(*(ci - cj)) > reach:
                continue
            if min_distance(hulls[i], hulls[j]) < 2.0 * r:
                pairs.append((i, j))
    return pairs


def _segment_interval_in_hull(a, b, hull: Polygon):
    """Parameter interval [t0, t1] of segment a-b inside a convex hull, or None."""
    normals, offsets = hull.halfplanes()
    t0, t1 = 0.0, 1.0
    d = b - a
    for k in range(len(offsets)):
        denom = normals[k] @ d
        num = offsets[k] - normals[k] @ a
        if abs(denom) < 1e-15:
            if num < -TOL:
                return None
        elif denom > 0.0:
            t1 = min(t1, num / denom)
        else:
            t0 = max(t0, num / denom)
        if t0 > t1 + 1e-12:
            return None
    return (t0, t1)


def _closest_hull_points(hull_a: Polygon, hull_b: Polygon):
    """Closest boundary point pair between two hulls (by edge-pair search)."""
    va, vb = hull_a.vertices, hull_b.vertices
    best = (math.inf, None, None)
    for i in range(len(va)):
        p1, p2 = va[i], va[(i + 1) % len(va)]
        for j in range(len(vb)):
            q1, q2 = vb[j], vb[(j + 1) % len(vb)]
            # sample candidate pairs: endpoint projections both ways
            for p in (p1, p2):
                q = _project_to_segment(p, q1, q2)
                d = float(np.hypot(*(p - q)))
                if d < best[0]:
                    best = (d, p.copy(), q)
            for q in (q1, q2):
                p = _project_to_segment(q, p1, p2)
                d = float(np.hypot(*(p - q)))
                if d < best[0]:
                    best = (d, p, q.copy())
    return best[1], best[2]


def _project_to_segment(p, a, b):
    ab = b - a
    t = float((p - a) @ ab) / float(ab @ ab)
    t = min(1.0, max(0.0, t))
    return a + t * ab


def _stage1_points(hull_i: Polygon, hull_j: Polygon, r: float):
    """Nearest-point collection on both hull boundaries facing the gap.

    Three collectors feed the set: boundary crossings of vertex-to-vertex
    segments, perpendicular feet of each vertex on the other hull, and the
    globally closest pair.  Each point is tagged with the side (0 for the
    first hull, 1 for the second) it lies on.
    """
    pts, sides = [], []
    own = (hull_i, hull_j)

    def boundary_projection(p, hull):
        v = hull.vertices
        best, best_d = None, math.inf
        for k in range(len(v)):
            q = _project_to_segment(p, v[k], v[(k + 1) % len(v)])
            d = float(np.hypot(*(p - q)))
            if d < best_d:
                best_d, best = d, q
        return best

    def add(p, side):
        # snap onto the owning hull's boundary: clipping the vertex-pair
        # segments leaves ~1e-16 noise that would otherwise perturb the
        # stage-II hull and displace exact corner points
        p = boundary_projection(p, own[side])
        for q in pts:
            if abs(q[0] - p[0]) <= TOL and abs(q[1] - p[1]) <= TOL:
                return
        pts.append(np.asarray(p, dtype=float))
        sides.append(side)

    two_r = 2.0 * r
    for va in hull_i.vertices:
        for vb in hull_j.vertices:
            ia = _segment_interval_in_hull(va, vb, hull_i)
            ib = _segment_interval_in_hull(va, vb, hull_j)
            if ia is None or ib is None:
                continue
            t_exit, t_enter = ia[1], ib[0]
            if t_exit >= t_enter - 1e-12:
                continue  # hulls touch or overlap along this segment
            d = vb - va
            p_exit = va + t_exit * d
            p_enter = va + t_enter * d
            if point_to_polygon_distance(p_exit, hull_j) < two_r:
                add(p_exit, 0)
            if point_to_polygon_distance(p_enter, hull_i) < two_r:
                add(p_enter, 1)
    for va in hull_i.vertices:
        q = closest_point_on_polygon(va, hull_j)
        if np.hypot(*(va - q)) < two_r:
            add(va, 0)
            add(q, 1)
    for vb in hull_j.vertices:
        q = closest_point_on_polygon(vb, hull_i)
        if np.hypot(*(vb - q)) < two_r:
            add(vb, 1)
            add(q, 0)
    p_i, p_j = _closest_hull_points(hull_i, hull_j)
    if p_i is not None:
        add(p_i, 0)
        add(p_j, 1)
    return pts, sides


def passage_node_cost(v_z, o_i: Obstacle, o_j: Obstacle, r: float) -> float:
    """Effort cost of a passage node: proximity-weighted believed masses.

    Each obstacle contributes its mass scaled by how deeply the node breaches
    its margin; at distance >= r the contribution vanishes, on the boundary
    it is the full mass.  Distances are to the original (uninflated) hulls.
    """
    cost = 0.0
    for o in (o_i, o_j):
        d = point_to_polygon_distance(v_z, o.world_hull)
        if d < r:
            cost += (1.0 - d / r) * o.mass
    return cost


def construct_passage_nodes(o_i: Obstacle, o_j: Obstacle, r: float,
                            gamma: float = None, zero_cost: bool = False):
    """Build the passage nodes and boundaries for one qualifying pair.

    Stage I collects nearest boundary points on both hulls; stage II takes
    their convex hull, whose two gap-crossing edges become the entry and exit
    boundaries; stage III places one node per boundary at the mass-weighted
    interpolation point, nearer the lighter obstacle (gamma = m_i/(m_i+m_j)
    measured from the first obstacle's endpoint).  Touching obstacles yield a
    degenerate (collinear) stage-I set and a single node at the contact
    midpoint.  Node ids are placeholders (-1); the graph builder assigns them.
    """
    hull_i, hull_j = o_i.world_hull, o_j.world_hull
    pts, sides = _stage1_points(hull_i, hull_j, r)

    def make_node(pos, kind_label):
        cost = 0.0 if zero_cost else passage_node_cost(pos, o_i, o_j, r)
        meta = {"pair": (o_i.id, o_j.id), "boundary": kind_label}
        return GraphNode(id=-1, position=np.asarray(pos, dtype=float),
                         kind="passage", node_cost=cost, passage_meta=meta)

    def degenerate():
        p_i, p_j = _closest_hull_points(hull_i, hull_j)
        mid = 0.5 * (p_i + p_j)
        return [make_node(mid, "contact")], []

    if len(pts) < 3:
        return degenerate()
    try:
        hull = convex_hull(np.array(pts))
    except DegenerateInput:
        return degenerate()

    def side_of(p):
        for q, s in zip(pts, sides):
            if abs(q[0] - p[0]) <= TOL and abs(q[1] - p[1]) <= TOL:
                return s
        return None

    hv = hull.vertices
    crossing = []
    for k in range(len(hv)):
        a, b = hv[k], hv[(k + 1) % len(hv)]
        sa, sb = side_of(a), side_of(b)
        if sa is None or sb is None or sa == sb:
            continue
        p_first = a if sa == 0 else b
        p_second = b if sa == 0 else a
        crossing.append((float(np.hypot(*(a - b))), p_first, p_second))
    if not crossing:
        return degenerate()
    crossing.sort(key=lambda c: c[0])
    crossing = crossing[:2]
    # deterministic entry/exit labeling by boundary midpoint
    crossing.sort(key=lambda c: (round((c[1][0] + c[2][0]) / 2, 9),
                                 round((c[1][1] + c[2][1]) / 2, 9)))

    if gamma is None:
        g = o_i.mass / (o_i.mass + o_j.mass)
    else:
        g = float(gamma)
    nodes, boundaries = [], []
    for kind_label, (_, v_i, v_j) in zip(("entry", "exit"), crossing):
        pos = v_i + g * (v_j - v_i)
        nodes.append(make_node(pos, kind_label))
        boundaries.append(PassageBoundary(endpoints=(v_i.copy(), v_j.copy()),
                                          side_masses=(o_i.mass, o_j.mass),
                                          kind=kind_label))
    return nodes, boundaries


# ---------------------------------------------------------------------------
# graph construction


@njit(cache=True)
def _visibility_matrix(positions, excl, inf_n, inf_d, inf_ptr,
                       raw_n, raw_d, raw_ptr):
    """Pairwise segment clearance with per-node obstacle exclusions.

    Polygons are shrunk by 1e-9 so boundary grazing counts as clear.  For an
    obstacle excluded by either endpoint, the original hull is tested instead
    of the inflated one: margin breaches are allowed there but actual
    interiors still block.
    """
    n = positions.shape[0]
    n_poly = inf_ptr.shape[0] - 1
    out = np.zeros((n, n), dtype=np.bool_)
    for a in range(n):
        ax, ay = positions[a, 0], positions[a, 1]
        for b in range(a + 1, n):
            bx, by = positions[b, 0], positions[b, 1]
            dx, dy = bx - ax, by - ay
            visible = True
            for p in range(n_poly):
                word = p >> 6
                bit = np.uint64(p & 63)
                excluded = ((excl[a, word] >> bit) | (excl[b, word] >> bit)) & np.uint64(1)
                if excluded:
                    lo, hi = raw_ptr[p], raw_ptr[p + 1]
                    nrm, off = raw_n, raw_d
                else:
                    lo, hi = inf_ptr[p], inf_ptr[p + 1]
                    nrm, off = inf_n, inf_d
                t0, t1 = 0.0, 1.0
                inside = True
                for k in range(lo, hi):
                    nx, ny = nrm[k, 0], nrm[k, 1]
                    d = off[k] - 1e-9
                    denom = nx * dx + ny * dy
                    num = d - (nx * ax + ny * ay)
                    if abs(denom) < 1e-15:
                        if num < 0.0:
                            inside = False
                            break
                    elif denom > 0.0:
                        if num / denom < t1:
                            t1 = num / denom
                    else:
                        if num / denom > t0:
                            t0 = num / denom
                    if t0 >= t1 - 1e-12:
                        inside = False
                        break
                if inside:
                    visible = False
                    break
            out[a, b] = visible
    return out


def _edges_python(positions, exclusions, inflated, raw):
    """Pure-python mirror of _visibility_matrix (oracle for cross-checking)."""
    n = len(positions)
    n_poly = len(inflated)
    out = np.zeros((n, n), dtype=bool)
    for a in range(n):
        for b in range(a + 1, n):
            merged = exclusions[a] | exclusions[b]
            polys = [raw[p] if p in merged else inflated[p] for p in range(n_poly)]
            out[a, b] = segment_clear(positions[a], positions[b], polys)
    return out


def _pack_polygons(polys):
    normals, offsets, ptr = [], [], [0]
    for p in polys:
        nrm, off = p.halfplanes()
        normals.append(nrm)
        offsets.append(off)
        ptr.append(ptr[-1] + len(off))
    return (np.ascontiguousarray(np.vstack(normals)),
            np.ascontiguousarray(np.concatenate(offsets)),
            np.asarray(ptr, dtype=np.int64))


def build_svg(obstacles, start, goal, r: float = DEFAULT_RADIUS,
              max_mass: float = DEFAULT_MAX_MASS, *, room=None, strict=True,
              include_passages=True, passage_gamma=None, zero_passage_cost=False,
              fast=True) -> SemanticGraph:
    """Assemble the full graph: free corner nodes, passage nodes, visibility edges.

    room, when given as (width, length), drops nodes outside the room.
    strict=False permits a start or goal inside a non-movable obstacle's
    margin (used when replanning from a contact pose); the offending
    obstacle is then tested with its uninflated hull for that endpoint's
    edges.  include_passages/passage_gamma/zero_passage_cost support the
    baseline graph variants.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    hulls = [o.world_hull for o in obstacles]
    inflated = [inflate(h, r) for h in hulls]
    n_poly = len(obstacles)

    # endpoint margin exclusions and blocked checks
    endpoint_excl = []
    for label, p in (("start", start), ("goal", goal)):
        excl = set()
        for i, o in enumerate(obstacles):
            if inflated[i].contains_point(p):
                if o.mass > max_mass:
                    if strict:
                        raise StartOrGoalBlocked(
                            f"{label} lies inside the margin of non-movable '{o.id}'")
                    if hulls[i].contains_point(p, tol=-TOL):
                        raise StartOrGoalBlocked(
                            f"{label} lies inside non-movable obstacle '{o.id}'")
                excl.add(i)
        endpoint_excl.append(excl)

    nodes = [
        GraphNode(id=0, position=start, kind="free"),
        GraphNode(id=1, position=goal, kind="free"),
    ]
    exclusions = [endpoint_excl[0], endpoint_excl[1]]

    def in_room(p):
        if room is None:
            return True
        return -TOL <= p[0] <= room[0] + TOL and -TOL <= p[1] <= room[1] + TOL

    for i in range(n_poly):
        for v in inflated[i].vertices:
            if not in_room(v):
                continue
            if any(j != i and inflated[j].contains_point(v) for j in range(n_poly)):
                continue
            nodes.append(GraphNode(id=len(nodes), position=v.copy(), kind="free"))
            exclusions.append(set())

    boundaries_all = []
    if include_passages:
        for (i, j) in find_passage_pairs(obstacles, r, max_mass):
            p_nodes, p_bounds = construct_passage_nodes(
                obstacles[i], obstacles[j], r,
                gamma=passage_gamma, zero_cost=zero_passage_cost)
            boundaries_all.extend(p_bounds)
            for pn in p_nodes:
                if not in_room(pn.position):
                    continue
                if any(k not in (i, j) and inflated[k].contains_point(pn.position)
                       for k in range(n_poly)):
                    continue
                pn.id = len(nodes)
                nodes.append(pn)
                exclusions.append({i, j})

    positions = np.array([n.position for n in nodes])
    if fast and n_poly > 0:
        words = (n_poly + 63) // 64
        excl_bits = np.zeros((len(nodes), words), dtype=np.uint64)
        for idx, excl in enumerate(exclusions):
            for p in excl:
                excl_bits[idx, p >> 6] |= np.uint64(1) << np.uint64(p & 63)
        inf_n, inf_d, inf_ptr = _pack_polygons(inflated)
        raw_n, raw_d, raw_ptr = _pack_polygons(hulls)
        vis = _visibility_matrix(positions, excl_bits, inf_n, inf_d, inf_ptr,
                                 raw_n, raw_d, raw_ptr)
    else:
        vis = _edges_python(positions, exclusions, inflated, hulls)

    edges = []
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if n_poly == 0 or vis[a, b]:
                d = float(np.hypot(*(positions[a] - positions[b])))
                if d > TOL:
                    edges.append((a, b, d))

    graph = SemanticGraph(nodes, edges, start_id=0, goal_id=1)
    graph.passage_boundaries = boundaries_all
    return graph


# ---------------------------------------------------------------------------
# search


def astar(graph: SemanticGraph):
    """Shortest path by edge length plus node costs charged on expansion.

    The Euclidean heuristic stays admissible because node costs are
    non-negative.  Ties break on lower heuristic, then lower node id.
    Returns node ids from start to goal, or None if unreachable.
    """
    if graph.start_id == graph.goal_id:
        return [graph.start_id]
    goal_pos = graph.node(graph.goal_id).position
    adj = graph.adjacency()

    def h(nid):
        return float(np.hypot(*(graph.node(nid).position - goal_pos)))

    g_score = {graph.start_id: 0.0}
    parent = {}
    h0 = h(graph.start_id)
    heap = [(h0, h0, graph.start_id)]
    closed = set()
    while heap:
        f, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        if u == graph.goal_id:
            path = [u]
            while path[-1] in parent:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(u)
        for v, length in adj[u]:
            if v in closed:
                continue
            cand = g_score[u] + length + graph.node(v).node_cost
            if cand < g_score.get(v, math.inf) - 1e-15:
                g_score[v] = cand
                parent[v] = u
                hv = h(v)
                heapq.heappush(heap, (cand + hv, hv, v))
    return None


def path_cost(graph: SemanticGraph, path) -> float:
    """Total A* objective of a node-id path (edge lengths + node costs)."""
    adj = graph.adjacency()
    total = 0.0
    for a, b in zip(path, path[1:]):
        length = next(l for v, l in adj[a] if v == b)
        total += length + graph.node(b).node_cost
    return total


def interpolate_waypoints(path_positions, spacing: float = DEFAULT_SPACING) -> Waypoints:
    """Resample a polyline so consecutive points are at most `spacing` apart.

    Each segment is split into ceil(length/spacing) equal pieces; the original
    corner points are retained, so spacing is uniform per segment.
    """
    if spacing <= 0.0:
        raise DegenerateInput("spacing must be positive")
    pts = [np.asarray(p, dtype=float) for p in path_positions]
    if not pts:
        raise DegenerateInput("need at least one path position")
    out = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        seg = float(np.hypot(*(b - a)))
        if seg <= 1e-12:
            continue
        pieces = max(1, math.ceil(seg / spacing - 1e-12))
        for k in range(1, pieces + 1):
            out.append(a + (k / pieces) * (b - a))
    return Waypoints(points=np.array(out), spacing=spacing)


def replan(scenario, believed_masses, robot_pose, goal, r: float = DEFAULT_RADIUS,
           max_mass: float = DEFAULT_MAX_MASS, spacing: float = DEFAULT_SPACING) -> Waypoints:
    """Rebuild the graph from the robot's current pose and search again.

    believed_masses maps obstacle id to the current mass belief; obstacles not
    named keep their stored belief.  The current pose may sit inside obstacle
    margins (the robot is often in contact when replanning), so the blocked
    check is relaxed accordingly.  Raises GoalUnreachable when no path exists.
    """
    obstacles = [o.with_mass(believed_masses.get(o.id, o.mass))
                 for o in scenario.obstacles]
    all_obs = obstacles + room_walls(scenario.room[0], scenario.room[1])
    graph = build_svg(all_obs, np.asarray(robot_pose, dtype=float)[:2], goal,
                      r, max_mass, room=tuple(scenario.room), strict=False)
    path = astar(graph)
    if path is None:
        raise GoalUnreachable("no route to the goal under current beliefs")
    return interpolate_waypoints([graph.node(i).position for i in path], spacing)
