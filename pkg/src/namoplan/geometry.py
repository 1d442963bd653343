"""2D polygon geometry used by the planners and the pushing simulator.

Conventions:
    * points are length-2 float sequences (numpy arrays internally),
    * polygons store their vertices counter-clockwise without repetition,
    * all tolerances are absolute and in meters (world units).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput

# Absolute tolerance for geometric predicates (meters).
TOL = 1e-9


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (2,) or not np.all(np.isfinite(a)):
        raise DegenerateInput(f"expected a finite 2d point, got {p!r}")
    return a


def _cross(o, a, b) -> float:
    """z-component of (a-o) x (b-o)."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    """True if open segments p1p2 and p3p4 cross at a single interior point."""
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    return ((d1 > TOL and d2 < -TOL) or (d1 < -TOL and d2 > TOL)) and \
           ((d3 > TOL and d4 < -TOL) or (d3 < -TOL and d4 > TOL))


class Polygon:
    """Simple polygon with counter-clockwise float64 vertices.

    The constructor validates the input: at least three vertices, no
    duplicate consecutive vertices (within 1e-9 m), simple boundary and
    non-degenerate area.  Clockwise input is silently reversed.
    """

    __slots__ = ("vertices", "_halfplanes", "_convex")

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise DegenerateInput("polygon needs an (N,2) array with N >= 3")
        if not np.all(np.isfinite(v)):
            raise DegenerateInput("polygon vertices must be finite")
        # duplicate consecutive vertices (including the closing pair)
        diffs = np.diff(np.vstack([v, v[:1]]), axis=0)
        if np.any(np.hypot(diffs[:, 0], diffs[:, 1]) <= TOL):
            raise DegenerateInput("polygon has duplicate consecutive vertices")
        area2 = _shoelace2(v)
        if abs(area2) <= TOL:
            raise DegenerateInput("polygon has (near-)zero area")
        if area2 < 0.0:
            v = v[::-1].copy()
        if not _is_simple(v):
            raise DegenerateInput("polygon boundary self-intersects")
        self.vertices = v
        self.vertices.setflags(write=False)
        self._halfplanes = None
        self._convex = None

    @classmethod
    def _from_valid(cls, v: np.ndarray) -> "Polygon":
        """Fast path for vertices already known to be valid and CCW."""
        obj = object.__new__(cls)
        obj.vertices = np.ascontiguousarray(v, dtype=np.float64)
        obj.vertices.setflags(write=False)
        obj._halfplanes = None
        obj._convex = None
        return obj

    def __len__(self) -> int:
        return len(self.vertices)

    def __repr__(self) -> str:
        return f"Polygon({self.vertices.tolist()})"

    @property
    def area(self) -> float:
        return 0.5 * _shoelace2(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        w = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        a2 = w.sum()
        cx = ((v[:, 0] + nxt[:, 0]) * w).sum() / (3.0 * a2)
        cy = ((v[:, 1] + nxt[:, 1]) * w).sum() / (3.0 * a2)
        return np.array([cx, cy])

    @property
    def is_convex(self) -> bool:
        if self._convex is None:
            v = self.vertices
            prv = np.roll(v, 1, axis=0)
            nxt = np.roll(v, -1, axis=0)
            cross = (v[:, 0] - prv[:, 0]) * (nxt[:, 1] - v[:, 1]) \
                - (v[:, 1] - prv[:, 1]) * (nxt[:, 0] - v[:, 0])
            self._convex = bool(np.all(cross > -TOL))
        return self._convex

    def halfplanes(self):
        """(normals, offsets) describing a convex polygon as n.x <= d per edge.

        Normals are outward unit vectors; only meaningful for convex polygons.
        """
        if self._halfplanes is None:
            v = self.vertices
            e = np.roll(v, -1, axis=0) - v
            lengths = np.hypot(e[:, 0], e[:, 1])
            normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
            offsets = np.einsum("ij,ij->i", normals, v)
            self._halfplanes = (normals, offsets)
        return self._halfplanes

    def bounding_radius(self, center=None) -> float:
        c = self.centroid if center is None else _as_point(center)
        return float(np.max(np.hypot(*(self.vertices - c).T)))

    def contains_point(self, p, tol: float = TOL) -> bool:
        """Point-in-polygon test; boundary points (within tol) count as inside."""
        p = _as_point(p)
        v = self.vertices
        n = len(v)
        inside = False
        for i in range(n):
            a, b = v[i], v[(i + 1) % n]
            if _point_segment_distance(p, a, b) <= tol:
                return True
            if (a[1] > p[1]) != (b[1] > p[1]):
                x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
                if p[0] < x_cross:
                    inside = not inside
        return inside

    def transformed(self, pose) -> "Polygon":
        """Rigidly transform by pose = (x, y, theta)."""
        x, y, th = float(pose[0]), float(pose[1]), float(pose[2])
        c, s = math.cos(th), math.sin(th)
        v = self.vertices
        out = np.empty_like(v)
        out[:, 0] = c * v[:, 0] - s * v[:, 1] + x
        out[:, 1] = s * v[:, 0] + c * v[:, 1] + y
        return Polygon._from_valid(out)


def _shoelace2(v: np.ndarray) -> float:
    nxt = np.roll(v, -1, axis=0)
    return float(np.sum(v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]))


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_properly_intersect(a1, a2, v[j], v[(j + 1) % n]):
                return False
    return True


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom <= TOL * TOL:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    closest = a + t * ab
    return float(np.hypot(*(p - closest)))


def _segment_segment_distance(p1, p2, p3, p4) -> float:
    if _segments_properly_intersect(p1, p2, p3, p4):
        return 0.0
    return min(
        _point_segment_distance(p1, p3, p4),
        _point_segment_distance(p2, p3, p4),
        _point_segment_distance(p3, p1, p2),
        _point_segment_distance(p4, p1, p2),
    )


# ---------------------------------------------------------------------------
# convex hull


def convex_hull(points) -> Polygon:
    """Convex hull via Andrew's monotone chain.

    Returns a CCW Polygon whose vertices are a subset of the input points,
    starting from the lexicographically smallest point.  Collinear interior
    points are dropped.  Raises DegenerateInput if all points are collinear.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInput("expected an (N,2) array of points")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("hull input must be finite")
    uniq = np.unique(pts, axis=0)
    if len(uniq) < 3:
        raise DegenerateInput("need at least 3 distinct points for a hull")
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    p = uniq[order]

    def half(seq):
        out = []
        for q in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], q) <= TOL:
                out.pop()
            out.append(q)
        return out

    lower = half(p)
    upper = half(p[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("hull input is collinear")
    return Polygon._from_valid(np.array(hull))


# ---------------------------------------------------------------------------
# inflation (miter offset of a convex polygon)


def inflate(polygon: Polygon, radius: float) -> Polygon:
    """Offset a convex polygon outward by radius, with miter (sharp) corners.

    Each edge is shifted along its outward normal and adjacent shifted edges
    are intersected, so corners stay polygonal instead of being rounded.
    """
    if radius < 0.0:
        raise DegenerateInput("inflation radius must be non-negative")
    if not polygon.is_convex:
        raise DegenerateInput("inflate expects a convex polygon")
    if radius == 0.0:
        return Polygon._from_valid(polygon.vertices.copy())
    v = polygon.vertices
    n = len(v)
    normals, offsets = polygon.halfplanes()
    out = np.empty_like(v)
    for k in range(n):
        # vertex k joins edge k-1 and edge k
        n1, d1 = normals[k - 1], offsets[k - 1] + radius
        n2, d2 = normals[k], offsets[k] + radius
        det = n1[0] * n2[1] - n1[1] * n2[0]
        if abs(det) < 1e-12:
            # collinear adjacent edges: shift the vertex straight out
            out[k] = v[k] + radius * n1
        else:
            out[k, 0] = (d1 * n2[1] - d2 * n1[1]) / det
            out[k, 1] = (n1[0] * d2 - n2[0] * d1) / det
    return Polygon._from_valid(out)


# ---------------------------------------------------------------------------
# distances


def _polygons_overlap(a: Polygon, b: Polygon) -> bool:
    """Boundary crossing or containment test (works for simple polygons)."""
    va, vb = a.vertices, b.vertices
    na, nb = len(va), len(vb)
    for i in range(na):
        for j in range(nb):
            if _segments_properly_intersect(va[i], va[(i + 1) % na],
                                            vb[j], vb[(j + 1) % nb]):
                return True
    return a.contains_point(vb[0]) or b.contains_point(va[0])


def min_distance(a: Polygon, b: Polygon) -> float:
    """Minimum euclidean distance between two polygons; 0 if they touch or overlap."""
    if _polygons_overlap(a, b):
        return 0.0
    va, vb = a.vertices, b.vertices
    na, nb = len(va), len(vb)
    best = math.inf
    for i in range(na):
        p1, p2 = va[i], va[(i + 1) % na]
        for j in range(nb):
            d = _segment_segment_distance(p1, p2, vb[j], vb[(j + 1) % nb])
            if d < best:
                best = d
    return best


def point_to_polygon_distance(p, polygon: Polygon) -> float:
    """Distance from a point to a polygon; 0 if the point is inside or on it."""
    p = _as_point(p)
    if polygon.contains_point(p, tol=0.0):
        return 0.0
    v = polygon.vertices
    n = len(v)
    return min(_point_segment_distance(p, v[i], v[(i + 1) % n]) for i in range(n))


def closest_point_on_polygon(p, polygon: Polygon) -> np.ndarray:
    """Closest boundary point of the polygon to p (p itself if inside)."""
    p = _as_point(p)
    v = polygon.vertices
    n = len(v)
    best = None
    best_d = math.inf
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        ab = b - a
        t = float((p - a) @ ab) / float(ab @ ab)
        t = min(1.0, max(0.0, t))
        q = a + t * ab
        d = float(np.hypot(*(p - q)))
        if d < best_d:
            best_d, best = d, q
    if polygon.contains_point(p, tol=0.0):
        return p.copy()
    return best


# ---------------------------------------------------------------------------
# visibility


def _segment_blocked_by_convex(a, b, normals, offsets) -> bool:
    """True if segment a-b passes through the interior of a convex polygon.

    The polygon is shrunk by TOL before clipping, so segments that merely
    graze an edge or a vertex (e.g. two visibility edges meeting at an
    inflated corner) do not count as blocked.
    """
    t0, t1 = 0.0, 1.0
    dx, dy = b[0] - a[0], b[1] - a[1]
    for k in range(len(offsets)):
        nx, ny = normals[k]
        d = offsets[k] - TOL
        denom = nx * dx + ny * dy
        num = d - (nx * a[0] + ny * a[1])
        if abs(denom) < 1e-15:
            if num < 0.0:
                return False
        elif denom > 0.0:
            t1 = min(t1, num / denom)
        else:
            t0 = max(t0, num / denom)
        if t0 >= t1 - 1e-12:
            return False
    return True


def segment_clear(a, b, polygons) -> bool:
    """True if the open segment a-b avoids the interior of every polygon.

    Touching a boundary is allowed; only crossing through strictly interior
    points blocks the segment.  All polygons must be convex.
    """
    a = _as_point(a)
    b = _as_point(b)
    for poly in polygons:
        if not poly.is_convex:
            raise DegenerateInput("segment_clear expects convex polygons")
        normals, offsets = poly.halfplanes()
        if _segment_blocked_by_convex(a, b, normals, offsets):
            return False
    return True


def visible_vertices(origin, candidates, polygons) -> list:
    """The candidate points that origin can see past the given polygons."""
    origin = _as_point(origin)
    return [c for c in candidates if segment_clear(origin, c, polygons)]


# ---------------------------------------------------------------------------
# obstacles


@dataclass
class Obstacle:
    """A polygonal obstacle with a body-frame shape and a world pose.

    mass is the planner's current belief; mass_true drives the simulator.
    Static obstacles use math.inf for both.
    """

    id: str
    shape: Polygon
    pose: tuple = (0.0, 0.0, 0.0)
    mass: float = math.inf
    mass_true: float = None
    _world: Polygon = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mass_true is None:
            self.mass_true = self.mass
        if self.mass <= 0.0 or self.mass_true <= 0.0:
            raise DegenerateInput("obstacle mass must be positive")

    @property
    def world_hull(self) -> Polygon:
        """Convex hull of the shape at the current pose (cached)."""
        if self._world is None:
            poly = self.shape.transformed(self.pose)
            if not poly.is_convex:
                poly = convex_hull(poly.vertices)
            self._world = poly
        return self._world

    def inflated_hull(self, radius: float) -> Polygon:
        return inflate(self.world_hull, radius)

    def movable_believed(self, max_mass: float) -> bool:
        return self.mass <= max_mass

    @property
    def is_static(self) -> bool:
        return math.isinf(self.mass_true)

    def with_pose(self, pose) -> "Obstacle":
        return dataclasses.replace(self, pose=tuple(float(x) for x in pose), _world=None)

    def with_mass(self, mass: float) -> "Obstacle":
        return dataclasses.replace(self, mass=float(mass), _world=None)
