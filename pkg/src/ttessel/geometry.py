"""Planar primitives: points, lines in normal form, convex polygons, chords
and isotropic random lines."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# relative tolerance; multiplied by a domain diameter to get lengths
REL_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid or degenerate geometric input."""


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Line:
    """The line ``x cos(alpha) + y sin(alpha) = p`` with ``alpha`` in [0, pi)."""

    alpha: float
    p: float

    def __post_init__(self):
        if not (0.0 <= self.alpha < math.pi) or not math.isfinite(self.p):
            raise GeometryError(f"line out of range: alpha={self.alpha}, p={self.p}")

    @classmethod
    def normalized(cls, alpha: float, p: float) -> "Line":
        """Build a line from any angle, folding it into [0, pi)."""
        a = math.fmod(alpha, 2 * math.pi)
        if a < 0:
            a += 2 * math.pi
        if a >= math.pi:
            a -= math.pi
            p = -p
        if a >= math.pi:  # fmod rounding right at the seam
            a = 0.0
        return cls(a, p)

    @classmethod
    def through(cls, a, b) -> "Line":
        ax, ay = a
        bx, by = b
        dx, dy = bx - ax, by - ay
        if dx == 0.0 and dy == 0.0:
            raise GeometryError("line through coincident points")
        # normal is the direction rotated clockwise
        alpha = math.atan2(-dx, dy)
        return cls.normalized(alpha, ax * math.cos(alpha) + ay * math.sin(alpha))

    @property
    def normal(self):
        return (math.cos(self.alpha), math.sin(self.alpha))

    @property
    def direction(self):
        """Unit direction; positions along the line are measured with it."""
        return (-math.sin(self.alpha), math.cos(self.alpha))

    def signed_distance(self, pt) -> float:
        return pt[0] * math.cos(self.alpha) + pt[1] * math.sin(self.alpha) - self.p

    def position(self, pt) -> float:
        return -pt[0] * math.sin(self.alpha) + pt[1] * math.cos(self.alpha)

    def intersect(self, other: "Line"):
        """Intersection point, or None for (numerically) parallel lines."""
        c1, s1 = math.cos(self.alpha), math.sin(self.alpha)
        c2, s2 = math.cos(other.alpha), math.sin(other.alpha)
        det = c1 * s2 - s1 * c2
        if abs(det) < 1e-12:
            return None
        return Point((self.p * s2 - s1 * other.p) / det, (c1 * other.p - self.p * c2) / det)


def acute_angle(alpha1: float, alpha2: float) -> float:
    """Acute angle in [0, pi/2] between two lines given by their normal angles."""
    d = abs(alpha1 - alpha2) % math.pi
    return min(d, math.pi - d)


def shoelace(xy) -> float:
    xy = np.asarray(xy, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def ring_perimeter(xy) -> float:
    xy = np.asarray(xy, dtype=float)
    return float(np.hypot(*(np.roll(xy, -1, axis=0) - xy).T).sum())


class ConvexPolygon:
    """Convex polygon stored counter-clockwise.

    Clockwise input is reversed. Collinear (flat) vertices are rejected
    unless ``allow_flat`` is set, which is how tessellation cells carry
    their T-junction vertices.
    """

    def __init__(self, vertices, allow_flat: bool = False, tol: float | None = None):
        xy = np.array([(float(x), float(y)) for x, y in vertices], dtype=float)
        if xy.ndim != 2 or len(xy) < 3:
            raise GeometryError("a polygon needs at least 3 vertices")
        if not np.all(np.isfinite(xy)):
            raise GeometryError("non-finite vertex coordinates")
        a = shoelace(xy)
        if a < 0:
            xy = xy[::-1].copy()
            a = -a
        diam = _diameter(xy)
        if tol is None:
            tol = REL_TOL * max(diam, 1e-300)
        if a <= tol * diam or diam == 0.0:
            raise GeometryError("degenerate polygon (zero area)")
        nxt = np.roll(xy, -1, axis=0)
        prv = np.roll(xy, 1, axis=0)
        edge_len = np.hypot(*(nxt - xy).T)
        if np.any(edge_len <= tol):
            raise GeometryError("repeated vertex")
        # turn at each vertex, scaled to a distance
        e_in = xy - prv
        e_out = nxt - xy
        turn = (e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0]) / np.hypot(*e_in.T)
        if np.any(turn < -tol):
            raise GeometryError("polygon is not convex")
        if not allow_flat and np.any(turn <= tol):
            raise GeometryError("polygon has collinear consecutive vertices")
        winding = np.arctan2(
            e_in[:, 0] * e_out[:, 1] - e_in[:, 1] * e_out[:, 0],
            (e_in * e_out).sum(axis=1),
        ).sum()
        if abs(winding - 2 * math.pi) > 1e-6:
            raise GeometryError("polygon is not simple")
        self.xy = xy
        self._area = a
        self._diam = diam

    @classmethod
    def rectangle(cls, width: float, height: float | None = None, origin=(0.0, 0.0)):
        h = width if height is None else height
        x0, y0 = origin
        return cls([(x0, y0), (x0 + width, y0), (x0 + width, y0 + h), (x0, y0 + h)])

    @classmethod
    def regular(cls, n: int, radius: float = 1.0, center=(0.0, 0.0)):
        t = 2 * math.pi * np.arange(n) / n
        return cls(np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]))

    @property
    def vertices(self):
        return [Point(float(x), float(y)) for x, y in self.xy]

    def __len__(self):
        return len(self.xy)

    def __repr__(self):
        return f"ConvexPolygon({self.xy.tolist()!r})"

    @property
    def diameter(self) -> float:
        return self._diam

    def support(self, alpha: float):
        """Range (p_min, p_max) of offsets of lines with normal angle alpha hitting the polygon."""
        s = self.xy @ np.array([math.cos(alpha), math.sin(alpha)])
        return float(s.min()), float(s.max())

    def width(self, alpha: float) -> float:
        lo, hi = self.support(alpha)
        return hi - lo

    def contains(self, pt, tol: float = 0.0) -> bool:
        x, y = pt
        nxt = np.roll(self.xy, -1, axis=0)
        e = nxt - self.xy
        cross = e[:, 0] * (y - self.xy[:, 1]) - e[:, 1] * (x - self.xy[:, 0])
        return bool(np.all(cross / np.hypot(*e.T) >= -tol))

    def contains_many(self, pts, tol: float = 0.0):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        nxt = np.roll(self.xy, -1, axis=0)
        e = nxt - self.xy
        cross = (e[None, :, 0] * (pts[:, None, 1] - self.xy[None, :, 1])
                 - e[None, :, 1] * (pts[:, None, 0] - self.xy[None, :, 0]))
        return np.all(cross / np.hypot(*e.T)[None, :] >= -tol, axis=1)

    def boundary_distance(self, pt) -> float:
        """Distance from a point to the polygon's boundary."""
        p = np.asarray(pt, dtype=float)
        a = self.xy
        b = np.roll(a, -1, axis=0)
        ab = b - a
        t = np.clip(((p - a) * ab).sum(axis=1) / (ab * ab).sum(axis=1), 0.0, 1.0)
        proj = a + t[:, None] * ab
        return float(np.hypot(*(proj - p).T).min())

    def bbox(self):
        lo = self.xy.min(axis=0)
        hi = self.xy.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def translated(self, dx: float, dy: float) -> "ConvexPolygon":
        return ConvexPolygon(self.xy + np.array([dx, dy]))

    def rotated(self, angle: float) -> "ConvexPolygon":
        c, s = math.cos(angle), math.sin(angle)
        return ConvexPolygon(self.xy @ np.array([[c, s], [-s, c]]))


def _diameter(xy) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d ** 2).sum(axis=2).max()))


def area(poly: ConvexPolygon) -> float:
    return poly._area


def perimeter(poly: ConvexPolygon) -> float:
    return ring_perimeter(poly.xy)


def chord(poly: ConvexPolygon, line: Line, tol: float | None = None):
    """Intersection of a line with the closed polygon as a pair of points.

    Returns None when the line misses, touches a single vertex, or yields a
    chord shorter than the tolerance.
    """
    if tol is None:
        tol = REL_TOL * poly.diameter
    xy = poly.xy
    d = xy @ np.array(line.normal) - line.p
    if d.max() <= tol or d.min() >= -tol:
        # misses, touches a vertex, or runs along an edge
        return None
    pts = []
    n = len(xy)
    for k in range(n):
        d0, d1 = d[k], d[(k + 1) % n]
        if abs(d0) <= tol:
            pts.append(xy[k])
        elif (d0 < -tol and d1 > tol) or (d0 > tol and d1 < -tol):
            t = d0 / (d0 - d1)
            pts.append(xy[k] + t * (xy[(k + 1) % n] - xy[k]))
    if len(pts) != 2:
        return None
    a, b = (Point(float(p[0]), float(p[1])) for p in pts)
    if math.hypot(b.x - a.x, b.y - a.y) <= tol:
        return None
    return a, b


def sample_hitting_line(poly: ConvexPolygon, rng) -> Line:
    """Isotropic uniform random line hitting ``poly``.

    The angle is drawn uniformly and kept with probability width/diameter,
    then the offset is uniform over the polygon's support at that angle.
    That realizes the kinematic measure restricted to hitting lines.
    """
    diam = poly.diameter
    while True:
        alpha = rng.uniform(0.0, math.pi)
        lo, hi = poly.support(alpha)
        if rng.uniform() * diam <= hi - lo:
            return Line(alpha, lo + rng.uniform() * (hi - lo))
