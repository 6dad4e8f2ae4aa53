"""T-tessellations of a convex polygon with split, merge and flip operators.

State is a small half-edge structure. Vertex coordinates are always
recomputed as intersections of supporting lines, so repeated flips and
splits never accumulate drift. Every in-place operator returns the operator
that undoes it.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    REL_TOL,
    ConvexPolygon,
    GeometryError,
    Line,
    acute_angle,
    shoelace,
)

HALF_PI = 0.5 * math.pi


class InvalidTessellationError(ValueError):
    """The data does not describe a valid T-tessellation."""


class InvalidOperation(ValueError):
    """A split, merge or flip that cannot be applied to the current state."""


@dataclass(frozen=True)
class Split:
    cell: int
    line: Line


@dataclass(frozen=True)
class Merge:
    segment: int


@dataclass(frozen=True)
class Flip:
    segment: int
    end: str  # "first" or "last", in the segment's vertex order

    def __post_init__(self):
        if self.end not in ("first", "last"):
            raise InvalidOperation(f"flip end must be 'first' or 'last', got {self.end!r}")


@dataclass
class Delta:
    """Change of the basic statistics caused by one operator."""

    nseint: int = 0
    nnb: int = 0
    nb: int = 0
    u: float = 0.0
    a2: float = 0.0
    angle_sum: float = 0.0


@dataclass
class SplitPlan:
    op: Split
    edge_a: tuple
    edge_b: tuple
    seg_a: int
    seg_b: int
    pt_a: tuple
    pt_b: tuple
    length: float
    area_a: float
    area_b: float
    delta: Delta = field(default_factory=Delta)
    kind: str = "split"


@dataclass
class MergePlan:
    op: Merge
    cells: tuple
    delta: Delta = field(default_factory=Delta)
    kind: str = "merge"


@dataclass
class FlipPlan:
    op: Flip
    p0: int
    v1: int
    ext_seg: int
    hit_seg: int
    hit_edge: tuple
    pt_q: tuple
    split_cell: int
    other_cell: int
    delta: Delta = field(default_factory=Delta)
    kind: str = "flip"


class Segment:
    __slots__ = ("line", "verts", "boundary")

    def __init__(self, line: Line, verts, boundary: bool):
        self.line = line
        self.verts = list(verts)
        self.boundary = boundary

    def copy(self):
        return Segment(self.line, self.verts, self.boundary)


class IndexedSet:
    """Set with O(1) add, remove and uniform random choice."""

    __slots__ = ("items", "pos")

    def __init__(self, items=()):
        self.items = []
        self.pos = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x):
        k = self.pos.pop(x, None)
        if k is None:
            return
        last = self.items.pop()
        if k < len(self.items):
            self.items[k] = last
            self.pos[last] = k

    def __contains__(self, x):
        return x in self.pos

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def copy(self):
        out = IndexedSet()
        out.items = list(self.items)
        out.pos = dict(self.pos)
        return out


def _ring_stats(xy):
    """Area and perimeter of a closed ring given as a list of (x, y)."""
    acc = 0.0
    per = 0.0
    px, py = xy[-1]
    for qx, qy in xy:
        acc += px * qy - qx * py
        per += math.hypot(qx - px, qy - py)
        px, py = qx, qy
    return 0.5 * acc, per


def _ekey(u, v):
    return (u, v) if u < v else (v, u)


class TTessellation:
    """A T-tessellation of a convex polygonal domain."""

    def __init__(self, domain: ConvexPolygon):
        self.domain = domain
        self.eps = REL_TOL * domain.diameter
        self._pts = {}
        self._vseg = {}
        self._segs = {}
        self._cells = {}
        self._half = {}
        self._edge_seg = {}
        self._carea = {}
        self._cper = {}
        self._nonblocking = IndexedSet()
        self._blocking = IndexedSet()
        self._cell_slot = {}
        self._slot_cell = []
        self._slot_per = np.zeros(16)
        self._u = 0.0
        self._a2 = 0.0
        self._angle = 0.0
        self._next_v = 0
        self._next_s = 0
        self._next_c = 0

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    @classmethod
    def empty(cls, domain: ConvexPolygon) -> "TTessellation":
        if not isinstance(domain, ConvexPolygon):
            domain = ConvexPolygon(domain)
        t = cls(domain)
        corners = []
        for x, y in domain.xy:
            v = t._new_vertex((float(x), float(y)))
            t._vseg[v] = (None, None)
            corners.append(v)
        n = len(corners)
        for k in range(n):
            a, b = corners[k], corners[(k + 1) % n]
            sid = t._new_segment(Line.through(t._pts[a], t._pts[b]), [a, b], True)
            t._sort_segment(sid)
            t._edge_seg[_ekey(a, b)] = sid
        t._add_cell(corners)
        return t

    def copy(self) -> "TTessellation":
        t = TTessellation.__new__(TTessellation)
        t.domain = self.domain
        t.eps = self.eps
        t._pts = dict(self._pts)
        t._vseg = dict(self._vseg)
        t._segs = {k: s.copy() for k, s in self._segs.items()}
        t._cells = {k: list(c) for k, c in self._cells.items()}
        t._half = dict(self._half)
        t._edge_seg = dict(self._edge_seg)
        t._carea = dict(self._carea)
        t._cper = dict(self._cper)
        t._nonblocking = self._nonblocking.copy()
        t._blocking = self._blocking.copy()
        t._cell_slot = dict(self._cell_slot)
        t._slot_cell = list(self._slot_cell)
        t._slot_per = self._slot_per.copy()
        t._u = self._u
        t._a2 = self._a2
        t._angle = self._angle
        t._next_v = self._next_v
        t._next_s = self._next_s
        t._next_c = self._next_c
        return t

    # ------------------------------------------------------------------
    # read access
    # ------------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self._cells)

    @property
    def cell_ids(self):
        return list(self._cells)

    @property
    def segment_ids(self):
        return list(self._segs)

    @property
    def internal_segment_ids(self):
        return [s for s, seg in self._segs.items() if not seg.boundary]

    @property
    def nonblocking(self):
        return self._nonblocking

    @property
    def blocking(self):
        return self._blocking

    def point(self, v):
        return self._pts[v]

    def cell_vertices(self, c):
        return list(self._cells[c])

    def cell_xy(self, c):
        pts = self._pts
        return np.array([pts[v] for v in self._cells[c]])

    def cell_area(self, c) -> float:
        return self._carea[c]

    def cell_perimeter(self, c) -> float:
        return self._cper[c]

    def cell_polygon(self, c) -> ConvexPolygon:
        return ConvexPolygon(self.cell_xy(c), allow_flat=True, tol=self.eps)

    def segment(self, sid) -> Segment:
        return self._segs[sid]

    def segment_endpoints(self, sid):
        s = self._segs[sid]
        return self._pts[s.verts[0]], self._pts[s.verts[-1]]

    def segment_length(self, sid) -> float:
        (ax, ay), (bx, by) = self.segment_endpoints(sid)
        return math.hypot(bx - ax, by - ay)

    def vertex_segments(self, v):
        """(through segment, ending segment) at a vertex; (None, None) at corners."""
        return self._vseg[v]

    def vertex_ids(self):
        return list(self._pts)

    @property
    def u(self) -> float:
        return self._u

    # ------------------------------------------------------------------
    # low-level bookkeeping
    # ------------------------------------------------------------------
    def _new_vertex(self, pt):
        v = self._next_v
        self._next_v += 1
        self._pts[v] = pt
        return v

    def _new_segment(self, line, verts, boundary):
        s = self._next_s
        self._next_s += 1
        self._segs[s] = Segment(line, verts, boundary)
        return s

    def _sort_segment(self, sid):
        seg = self._segs[sid]
        ln = seg.line
        seg.verts.sort(key=lambda v: ln.position(self._pts[v]))

    def _reclassify(self, sid):
        seg = self._segs.get(sid)
        if seg is None or seg.boundary:
            return
        if len(seg.verts) == 2:
            self._blocking.discard(sid)
            self._nonblocking.add(sid)
        else:
            self._nonblocking.discard(sid)
            self._blocking.add(sid)

    def _vcontrib(self, v):
        through, ending = self._vseg[v]
        if through is None:
            return 0.0
        ts = self._segs[through]
        if ts.boundary:
            return 0.0
        return HALF_PI - acute_angle(ts.line.alpha, self._segs[ending].line.alpha)

    def _add_cell(self, verts):
        c = self._next_c
        self._next_c += 1
        self._cells[c] = verts
        n = len(verts)
        for k in range(n):
            self._half[(verts[k], verts[(k + 1) % n])] = c
        a, p = _ring_stats([self._pts[v] for v in verts])
        self._carea[c] = a
        self._cper[c] = p
        self._u += p
        self._a2 += a * a
        slot = len(self._slot_cell)
        if slot == len(self._slot_per):
            self._slot_per = np.concatenate([self._slot_per, np.zeros(len(self._slot_per))])
        self._slot_cell.append(c)
        self._slot_per[slot] = p
        self._cell_slot[c] = slot
        return c

    def _drop_cell(self, c):
        verts = self._cells.pop(c)
        a = self._carea.pop(c)
        p = self._cper.pop(c)
        self._u -= p
        self._a2 -= a * a
        slot = self._cell_slot.pop(c)
        last = self._slot_cell.pop()
        if slot < len(self._slot_cell):
            self._slot_cell[slot] = last
            self._slot_per[slot] = self._slot_per[len(self._slot_cell)]
            self._cell_slot[last] = slot
        return verts

    def _insert_vertex_on_edge(self, u, w, pt, sid):
        """Put a new flat vertex between consecutive vertices u, w of segment sid."""
        v = self._new_vertex(pt)
        seg = self._segs[sid]
        iu = seg.verts.index(u)
        if iu + 1 < len(seg.verts) and seg.verts[iu + 1] == w:
            seg.verts.insert(iu + 1, v)
        elif iu > 0 and seg.verts[iu - 1] == w:
            seg.verts.insert(iu, v)
        else:
            raise InvalidOperation("vertices are not adjacent on the segment")
        for a, b in ((u, w), (w, u)):
            c = self._half.pop((a, b), None)
            if c is None:
                continue
            cv = self._cells[c]
            k = cv.index(a)
            cv.insert(k + 1, v)
            self._half[(a, v)] = c
            self._half[(v, b)] = c
        del self._edge_seg[_ekey(u, w)]
        self._edge_seg[_ekey(u, v)] = sid
        self._edge_seg[_ekey(v, w)] = sid
        return v

    def _remove_flat_vertex(self, v):
        through, _ = self._vseg[v]
        seg = self._segs[through]
        k = seg.verts.index(v)
        u, w = seg.verts[k - 1], seg.verts[k + 1]
        for a, b in ((u, w), (w, u)):
            c = self._half.pop((a, v), None)
            c2 = self._half.pop((v, b), None)
            if c != c2:
                raise InvalidOperation("vertex is not flat")
            if c is None:
                continue
            self._cells[c].remove(v)
            self._half[(a, b)] = c
        del seg.verts[k]
        del self._edge_seg[_ekey(u, v)]
        del self._edge_seg[_ekey(v, w)]
        self._edge_seg[_ekey(u, w)] = through
        del self._pts[v]
        del self._vseg[v]

    def _split_cell(self, c, a, b, sid):
        """Cut cell c along the new edge (a, b); returns (cell from a to b, cell from b to a)."""
        verts = self._drop_cell(c)
        n = len(verts)
        ia = verts.index(a)
        ib = verts.index(b)
        if ib > ia:
            first = verts[ia:ib + 1]
            second = verts[ib:] + verts[:ia + 1]
        else:
            first = verts[ia:] + verts[:ib + 1]
            second = verts[ib:ia + 1]
        if len(first) < 3 or len(second) < 3 or len(first) + len(second) != n + 2:
            raise InvalidOperation("split endpoints do not cut the cell")
        for k in range(n):
            del self._half[(verts[k], verts[(k + 1) % n])]
        self._edge_seg[_ekey(a, b)] = sid
        return self._add_cell(first), self._add_cell(second)

    def _fuse_cells(self, u, v):
        """Remove edge (u, v) and join the two cells on its sides."""
        c1 = self._half[(u, v)]
        c2 = self._half[(v, u)]
        l1 = self._drop_cell(c1)
        l2 = self._drop_cell(c2)
        for lst in (l1, l2):
            n = len(lst)
            for k in range(n):
                del self._half[(lst[k], lst[(k + 1) % n])]
        k1 = l1.index(v)
        r1 = l1[k1:] + l1[:k1]  # v ... u
        k2 = l2.index(u)
        r2 = l2[k2:] + l2[:k2]  # u ... v
        del self._edge_seg[_ekey(u, v)]
        return self._add_cell(r1 + r2[1:-1])

    # ------------------------------------------------------------------
    # statistics
    # ------------------------------------------------------------------
    def statistics_basic(self):
        """(nseint, nnbseint, nbseint, u, a2, angle_sum)."""
        nnb = len(self._nonblocking)
        nb = len(self._blocking)
        return (nnb + nb, nnb, nb, self._u, self._a2, self._angle)

    def recompute_statistics(self):
        """Same six summaries, computed from scratch (no running totals)."""
        nnb = nb = 0
        for seg in self._segs.values():
            if seg.boundary:
                continue
            if len(seg.verts) == 2:
                nnb += 1
            else:
                nb += 1
        u = a2 = 0.0
        for verts in self._cells.values():
            a, p = _ring_stats([self._pts[v] for v in verts])
            u += p
            a2 += a * a
        ang = sum(self._vcontrib(v) for v in self._pts)
        return (nnb + nb, nnb, nb, u, a2, ang)

    def refresh_totals(self):
        """Reset running totals from a full recomputation (drift control)."""
        _, _, _, self._u, self._a2, self._angle = self.recompute_statistics()
        for c, slot in self._cell_slot.items():
            self._slot_per[slot] = self._cper[c]

    # ------------------------------------------------------------------
    # sampling helpers
    # ------------------------------------------------------------------
    def sample_cell(self, rng):
        """Cell drawn with probability proportional to its perimeter."""
        n = len(self._slot_cell)
        cs = np.cumsum(self._slot_per[:n])
        k = int(np.searchsorted(cs, rng.uniform() * cs[-1], side="right"))
        return self._slot_cell[min(k, n - 1)]

    def sample_line_in_cell(self, c, rng) -> Line:
        """Isotropic uniform line hitting cell c (width-proportional rejection)."""
        xy = self.cell_xy(c)
        bound = 0.5 * self._cper[c]  # half-perimeter bounds every width
        while True:
            alpha = rng.uniform(0.0, math.pi)
            s = xy @ (math.cos(alpha), math.sin(alpha))
            lo = s.min()
            w = s.max() - lo
            if rng.uniform() * bound <= w:
                return Line(alpha, float(lo + rng.uniform() * w))

    def propose_split(self, rng, max_tries: int = 1000) -> SplitPlan:
        for _ in range(max_tries):
            c = self.sample_cell(rng)
            plan = self.plan_split(Split(c, self.sample_line_in_cell(c, rng)))
            if plan is not None:
                return plan
        raise InvalidOperation("could not draw a non-degenerate split")

    # ------------------------------------------------------------------
    # planning (no mutation)
    # ------------------------------------------------------------------
    def plan_split(self, op: Split):
        """Geometry and statistic change of a split; None if absent or degenerate."""
        verts = self._cells.get(op.cell)
        if verts is None:
            raise InvalidOperation(f"no cell {op.cell}")
        pts = self._pts
        ln = op.line
        ca, sa, p = math.cos(ln.alpha), math.sin(ln.alpha), ln.p
        eps = self.eps
        n = len(verts)
        d = []
        for v in verts:
            x, y = pts[v]
            dv = ca * x + sa * y - p
            if -eps <= dv <= eps:
                return None
            d.append(dv)
        i = j = -1
        for k in range(n):
            d0, d1 = d[k], d[(k + 1) % n]
            if d0 < 0.0 < d1:
                i = k
            elif d1 < 0.0 < d0:
                j = k
        if i < 0 or j < 0:
            return None
        ea = (verts[i], verts[(i + 1) % n])
        eb = (verts[j], verts[(j + 1) % n])
        sa_id = self._edge_seg[_ekey(*ea)]
        sb_id = self._edge_seg[_ekey(*eb)]
        pa = ln.intersect(self._segs[sa_id].line)
        pb = ln.intersect(self._segs[sb_id].line)
        if pa is None or pb is None:
            return None
        length = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
        if length <= eps:
            return None
        part_a = [tuple(pa)]
        k = (i + 1) % n
        while True:
            part_a.append(pts[verts[k]])
            if k == j:
                break
            k = (k + 1) % n
        part_a.append(tuple(pb))
        part_b = [tuple(pb)]
        k = (j + 1) % n
        while True:
            part_b.append(pts[verts[k]])
            if k == i:
                break
            k = (k + 1) % n
        part_b.append(tuple(pa))
        area_a, _ = _ring_stats(part_a)
        area_b, _ = _ring_stats(part_b)
        if area_a <= 0.0 or area_b <= 0.0:
            return None
        area = self._carea[op.cell]
        dnnb = 1
        dnb = 0
        ang = 0.0
        for sid in (sa_id, sb_id):
            seg = self._segs[sid]
            if seg.boundary:
                continue
            ang += HALF_PI - acute_angle(seg.line.alpha, ln.alpha)
            if len(seg.verts) == 2:
                dnnb -= 1
                dnb += 1
        delta = Delta(1, dnnb, dnb, 2.0 * length, area_a * area_a + area_b * area_b - area * area, ang)
        return SplitPlan(op, ea, eb, sa_id, sb_id, tuple(pa), tuple(pb), length,
                         area_a, area_b, delta)

    def plan_merge(self, op: Merge) -> MergePlan:
        sid = op.segment
        if sid not in self._nonblocking:
            raise InvalidOperation(f"segment {sid} is not an internal non-blocking segment")
        a, b = self._segs[sid].verts
        c1 = self._half[(a, b)]
        c2 = self._half[(b, a)]
        a1, a2 = self._carea[c1], self._carea[c2]
        length = math.dist(self._pts[a], self._pts[b])
        dnnb = -1
        dnb = 0
        for v in (a, b):
            seg = self._segs[self._vseg[v][0]]
            if not seg.boundary and len(seg.verts) == 3:
                dnnb += 1
                dnb -= 1
        ang = -(self._vcontrib(a) + self._vcontrib(b))
        delta = Delta(-1, dnnb, dnb, -2.0 * length, (a1 + a2) ** 2 - a1 * a1 - a2 * a2, ang)
        return MergePlan(op, (c1, c2), delta)

    def _flip_frame(self, op: Flip):
        sid = op.segment
        if sid not in self._blocking:
            raise InvalidOperation(f"segment {sid} is not an internal blocking segment")
        vs = self._segs[sid].verts
        if op.end == "first":
            p0, v1, v2 = vs[0], vs[1], vs[2]
        else:
            p0, v1, v2 = vs[-1], vs[-2], vs[-3]
        return p0, v1, v2

    def plan_flip(self, op: Flip):
        """Geometry and statistic change of a flip; None if degenerate."""
        p0, v1, v2 = self._flip_frame(op)
        pts = self._pts
        ext = self._vseg[v1][1]
        ext_line = self._segs[ext].line
        h1 = self._half[(p0, v1)]
        h2 = self._half[(v1, p0)]
        cl = self._cells[h1]
        k = cl.index(v1)
        if cl[(k + 1) % len(cl)] == v2 or cl[k - 1] == v2:
            c_split, c_other = h1, h2
        else:
            c_split, c_other = h2, h1
            cl = self._cells[h2]
        n = len(cl)
        k1 = cl.index(v1)
        ca, sa, pl = math.cos(ext_line.alpha), math.sin(ext_line.alpha), ext_line.p
        eps = self.eps
        d = [ca * pts[v][0] + sa * pts[v][1] - pl for v in cl]
        hit = None
        for k in range(n):
            if k == k1:
                continue
            if abs(d[k]) <= eps:
                return None
        for k in range(n):
            kn = (k + 1) % n
            if k == k1 or kn == k1:
                continue
            if (d[k] < 0.0 < d[kn]) or (d[kn] < 0.0 < d[k]):
                hit = (cl[k], cl[kn])
                break
        if hit is None:
            return None
        hseg = self._edge_seg[_ekey(*hit)]
        q = ext_line.intersect(self._segs[hseg].line)
        if q is None:
            return None
        q = tuple(q)
        # the two parts of the split cell, both counter-clockwise
        forward = cl[k1:] + cl[:k1]  # starts at v1
        idx_hit = forward.index(hit[0])
        side1 = [pts[v] for v in forward[: idx_hit + 1]] + [q]
        side2 = [q] + [pts[v] for v in forward[idx_hit + 1:]] + [pts[v1]]
        if forward[1] == v2:
            part_v2, part_p0 = side1, side2
        else:
            part_v2, part_p0 = side2, side1
        a_v2, _ = _ring_stats(part_v2)
        a_p0, _ = _ring_stats(part_p0)
        if a_v2 <= 0.0 or a_p0 <= 0.0:
            return None
        a_other = self._carea[c_other]
        a_split = self._carea[c_split]
        new_big = a_other + a_p0
        da2 = new_big ** 2 + a_v2 ** 2 - a_other ** 2 - a_split ** 2
        len_new = math.dist(pts[v1], q)
        len_old = math.dist(pts[v1], pts[p0])
        # contribution of the new vertex q minus that of the removed vertex p0
        hs = self._segs[hseg]
        ang = 0.0
        if not hs.boundary:
            ang += HALF_PI - acute_angle(hs.line.alpha, ext_line.alpha)
        ang -= self._vcontrib(p0)
        # blocking counts: S loses p0, ext gains q, A loses p0, H gains q
        changes = {}
        for sid_, dv in ((op.segment, -1), (ext, 1), (self._vseg[p0][0], -1), (hseg, 1)):
            changes[sid_] = changes.get(sid_, 0) + dv
        dnb = 0
        for sid_, dv in changes.items():
            seg = self._segs[sid_]
            if seg.boundary or dv == 0:
                continue
            before = len(seg.verts) >= 3
            after = len(seg.verts) + dv >= 3
            dnb += int(after) - int(before)
        delta = Delta(0, -dnb, dnb, 2.0 * (len_new - len_old), da2, ang)
        return FlipPlan(op, p0, v1, ext, hseg, hit, q, c_split, c_other, delta)

    def plan(self, op):
        if isinstance(op, Split):
            return self.plan_split(op)
        if isinstance(op, Merge):
            return self.plan_merge(op)
        if isinstance(op, Flip):
            return self.plan_flip(op)
        raise InvalidOperation(f"unknown operation {op!r}")

    # ------------------------------------------------------------------
    # in-place application
    # ------------------------------------------------------------------
    def apply(self, plan):
        """Apply a plan in place; returns the inverse operation."""
        if plan is None:
            raise InvalidOperation("degenerate or absent operation")
        if plan.kind == "split":
            return self._apply_split(plan)
        if plan.kind == "merge":
            return self._apply_merge(plan)
        return self._apply_flip(plan)

    def split(self, op: Split) -> Merge:
        plan = self.plan_split(op)
        if plan is None:
            raise InvalidOperation("split chord is absent or degenerate")
        return self._apply_split(plan)

    def merge(self, op: Merge) -> Split:
        return self._apply_merge(self.plan_merge(op))

    def flip(self, op: Flip) -> Flip:
        plan = self.plan_flip(op)
        if plan is None:
            raise InvalidOperation("flip extension is degenerate")
        return self._apply_flip(plan)

    def _apply_split(self, plan: SplitPlan) -> Merge:
        va = self._insert_vertex_on_edge(*plan.edge_a, plan.pt_a, plan.seg_a)
        vb = self._insert_vertex_on_edge(*plan.edge_b, plan.pt_b, plan.seg_b)
        sid = self._new_segment(plan.op.line, [va, vb], False)
        self._sort_segment(sid)
        self._vseg[va] = (plan.seg_a, sid)
        self._vseg[vb] = (plan.seg_b, sid)
        self._split_cell(plan.op.cell, va, vb, sid)
        for s in (plan.seg_a, plan.seg_b, sid):
            self._reclassify(s)
        self._angle += self._vcontrib(va) + self._vcontrib(vb)
        return Merge(sid)

    def _apply_merge(self, plan: MergePlan) -> Split:
        sid = plan.op.segment
        seg = self._segs[sid]
        a, b = seg.verts
        self._angle -= self._vcontrib(a) + self._vcontrib(b)
        c = self._fuse_cells(a, b)
        del self._segs[sid]
        self._nonblocking.discard(sid)
        touched = (self._vseg[a][0], self._vseg[b][0])
        self._remove_flat_vertex(a)
        self._remove_flat_vertex(b)
        for s in touched:
            self._reclassify(s)
        return Split(c, seg.line)

    def _apply_flip(self, plan: FlipPlan) -> Flip:
        sid = plan.op.segment
        p0, v1 = plan.p0, plan.v1
        seg_s = self._segs[sid]
        ext = plan.ext_seg
        seg_a = self._vseg[p0][0]
        self._angle -= self._vcontrib(p0)
        q = self._insert_vertex_on_edge(*plan.hit_edge, plan.pt_q, plan.hit_seg)
        self._vseg[q] = (plan.hit_seg, ext)
        ev = self._segs[ext].verts
        if ev[0] == v1:
            ev.insert(0, q)
        else:
            ev.append(q)
        self._split_cell(plan.split_cell, v1, q, ext)
        self._fuse_cells(p0, v1)
        if seg_s.verts[0] == p0:
            del seg_s.verts[0]
        else:
            seg_s.verts.pop()
        # p0 is now a flat vertex of the segment it used to end on
        self._vseg[p0] = (seg_a, None)
        self._remove_flat_vertex(p0)
        self._vseg[v1] = (ext, sid)
        self._angle += self._vcontrib(q)
        for s in (sid, ext, seg_a, plan.hit_seg):
            self._reclassify(s)
        return Flip(ext, "first" if ev[0] == q else "last")

    # ------------------------------------------------------------------
    # enumeration
    # ------------------------------------------------------------------
    def enumerate_merges(self):
        return [Merge(s) for s in self._nonblocking]

    def enumerate_flips(self):
        out = []
        for s in self._blocking:
            out.append(Flip(s, "first"))
            out.append(Flip(s, "last"))
        return out

    def split_total_mass(self) -> float:
        return self._u / math.pi

    # ------------------------------------------------------------------
    # flat arrays for batched kernels
    # ------------------------------------------------------------------
    def flat_cells(self):
        """Cells as flat arrays; edge k of a cell runs from its vertex k to k+1.

        Returns (cell ids, offsets, vx, vy, edge alpha, edge p, edge internal
        flag, width bound per cell, cell areas).
        """
        ids = list(self._cells)
        sizes = [len(self._cells[c]) for c in ids]
        offsets = np.zeros(len(ids) + 1, np.int64)
        np.cumsum(sizes, out=offsets[1:])
        total = int(offsets[-1])
        vx = np.empty(total)
        vy = np.empty(total)
        ea = np.empty(total)
        ep = np.empty(total)
        ei = np.empty(total, np.bool_)
        k = 0
        pts, es, segs = self._pts, self._edge_seg, self._segs
        for c in ids:
            verts = self._cells[c]
            n = len(verts)
            for t in range(n):
                v = verts[t]
                w = verts[(t + 1) % n]
                vx[k], vy[k] = pts[v]
                seg = segs[es[_ekey(v, w)]]
                ea[k] = seg.line.alpha
                ep[k] = seg.line.p
                ei[k] = not seg.boundary
                k += 1
        bound = np.array([0.5 * self._cper[c] for c in ids])
        areas = np.array([self._carea[c] for c in ids])
        return ids, offsets, vx, vy, ea, ep, ei, bound, areas

    # ------------------------------------------------------------------
    # validation
    # ------------------------------------------------------------------
    def check_invariants(self, rel_tol: float = 1e-6):
        """Raise InvalidTessellationError if any structural invariant fails."""
        eps = self.eps
        pts = self._pts
        err = InvalidTessellationError
        # half-edges mirror the cell rings
        seen = {}
        for c, verts in self._cells.items():
            n = len(verts)
            if n < 3 or len(set(verts)) != n:
                raise err(f"cell {c} has a bad vertex ring")
            for k in range(n):
                seen[(verts[k], verts[(k + 1) % n])] = c
            try:
                ConvexPolygon([pts[v] for v in verts], allow_flat=True, tol=0.5 * eps)
            except GeometryError as exc:
                raise err(f"cell {c}: {exc}") from None
            a, p = _ring_stats([pts[v] for v in verts])
            if a <= 0:
                raise err(f"cell {c} is not counter-clockwise")
            if abs(a - self._carea[c]) > rel_tol * max(a, eps) or abs(p - self._cper[c]) > rel_tol * p:
                raise err(f"cell {c} cached geometry is stale")
        if seen != self._half:
            raise err("half-edge map out of sync with cells")
        total = sum(self._carea.values())
        if abs(total - self.domain._area) > rel_tol * self.domain._area:
            raise err(f"cell areas sum to {total}, domain area {self.domain._area}")
        # every undirected edge belongs to a segment, and vice versa
        edges = {_ekey(u, v) for (u, v) in self._half}
        seg_edges = {}
        for sid, seg in self._segs.items():
            vs = seg.verts
            if len(vs) < 2:
                raise err(f"segment {sid} has fewer than two vertices")
            pos = [seg.line.position(pts[v]) for v in vs]
            if any(b <= a for a, b in zip(pos, pos[1:])):
                raise err(f"segment {sid} vertices are not ordered along its line")
            for v in vs:
                if abs(seg.line.signed_distance(pts[v])) > 10 * eps:
                    raise err(f"vertex {v} is off the line of segment {sid}")
            for a, b in zip(vs, vs[1:]):
                seg_edges[_ekey(a, b)] = sid
        if seg_edges != self._edge_seg or set(seg_edges) != edges:
            raise err("edge to segment map is inconsistent")
        # vertex incidence: T-junctions and corners
        deg = {}
        for a, b in edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        for v in pts:
            through, ending = self._vseg[v]
            if through is None:
                if deg.get(v) != 2:
                    raise err(f"corner {v} has degree {deg.get(v)}")
                continue
            if deg.get(v) != 3:
                raise err(f"vertex {v} has degree {deg.get(v)}")
            tv = self._segs[through].verts
            if v not in tv[1:-1]:
                raise err(f"vertex {v} is not interior to its through segment")
            ev = self._segs[ending].verts
            if v not in (ev[0], ev[-1]):
                raise err(f"vertex {v} is not an end of its ending segment")
            if acute_angle(self._segs[through].line.alpha, self._segs[ending].line.alpha) <= 1e-12:
                raise err(f"collinear segments meet at vertex {v}")
        for sid, seg in self._segs.items():
            if seg.boundary:
                continue
            if (len(seg.verts) == 2) != (sid in self._nonblocking) or (len(seg.verts) > 2) != (sid in self._blocking):
                raise err(f"segment {sid} is misclassified")
        if len(self._nonblocking) + len(self._blocking) != len(self.internal_segment_ids):
            raise err("classification sets contain stale segments")
        ref = self.recompute_statistics()
        cur = self.statistics_basic()
        for name, x, y in zip(("u", "a2", "angle_sum"), cur[3:], ref[3:]):
            if abs(x - y) > rel_tol * max(1.0, abs(y)):
                raise err(f"running total {name}={x} differs from recomputed {y}")
        if sorted(self._slot_cell) != sorted(self._cells):
            raise err("perimeter sampler out of sync")
        for c in self._slot_cell:
            if abs(self._slot_per[self._cell_slot[c]] - self._cper[c]) > 1e-12 * self._cper[c]:
                raise err("perimeter sampler out of sync")

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def internal_segments(self):
        """(line, first endpoint, last endpoint) for every internal segment."""
        out = []
        for sid in sorted(self.internal_segment_ids):
            seg = self._segs[sid]
            out.append((seg.line, self._pts[seg.verts[0]], self._pts[seg.verts[-1]]))
        return out

    def to_dict(self):
        return {
            "domain": [[float(x), float(y)] for x, y in self.domain.xy],
            "segments": [
                {"alpha": ln.alpha, "p": ln.p, "endpoints": [list(a), list(b)]}
                for ln, a, b in self.internal_segments()
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, data) -> "TTessellation":
        try:
            domain = ConvexPolygon(data["domain"])
            segs = []
            for s in data.get("segments", []):
                (ax, ay), (bx, by) = s["endpoints"]
                line = Line(float(s["alpha"]), float(s["p"])) if "alpha" in s else None
                segs.append(((float(ax), float(ay)), (float(bx), float(by)), line))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidTessellationError(f"malformed tessellation data: {exc}") from None
        return from_segments(domain, segs)

    @classmethod
    def from_json(cls, text: str) -> "TTessellation":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidTessellationError(f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def __repr__(self):
        s = self.statistics_basic()
        return f"TTessellation(cells={self.n_cells}, nseint={s[0]}, nnb={s[1]}, nb={s[2]}, u={s[3]:.6g})"


# ----------------------------------------------------------------------
# building from a segment list
# ----------------------------------------------------------------------

def _proper_crossings(P, Q, tol):
    """Index pairs of segments whose relative interiors cross."""
    n = len(P)
    if n < 2:
        return []
    d = Q - P
    r = P[None, :, :] - P[:, None, :]
    den = d[:, None, 0] * d[None, :, 1] - d[:, None, 1] * d[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (r[..., 0] * d[None, :, 1] - r[..., 1] * d[None, :, 0]) / den
        s = (r[..., 0] * d[:, None, 1] - r[..., 1] * d[:, None, 0]) / den
    li = np.hypot(d[:, 0], d[:, 1])
    ti = tol / li[:, None]
    sj = tol / li[None, :]
    bad = (np.abs(den) > 1e-14) & (t > ti) & (t < 1 - ti) & (s > sj) & (s < 1 - sj)
    bad = np.triu(bad, 1)
    return list(zip(*np.nonzero(bad)))


def from_segments(domain: ConvexPolygon, segments) -> TTessellation:
    """Build and validate a T-tessellation from its internal segments.

    ``segments`` holds (endpoint, endpoint) or (endpoint, endpoint, Line)
    items. Endpoints are snapped onto the unique segment or domain side each
    one ends on. Raises InvalidTessellationError with a diagnostic when the
    input is not a T-tessellation.
    """
    err = InvalidTessellationError
    if not isinstance(domain, ConvexPolygon):
        domain = ConvexPolygon(domain)
    t = TTessellation(domain)
    eps = t.eps
    snap = 1e-7 * domain.diameter
    corners = [(float(x), float(y)) for x, y in domain.xy]
    nc = len(corners)
    # (line, a, b, boundary)
    raw = []
    for k in range(nc):
        a, b = corners[k], corners[(k + 1) % nc]
        raw.append((Line.through(a, b), a, b, True))
    for item in segments:
        a, b = (tuple(map(float, item[0])), tuple(map(float, item[1])))
        line = item[2] if len(item) > 2 and item[2] is not None else None
        if math.dist(a, b) <= snap:
            raise err(f"segment with coincident endpoints {a}")
        if line is None:
            line = Line.through(a, b)
        elif abs(line.signed_distance(a)) > snap or abs(line.signed_distance(b)) > snap:
            raise err(f"endpoints {a}, {b} are not on the declared line")
        for pt in (a, b):
            if not domain.contains(pt, tol=snap):
                raise err(f"endpoint {pt} lies outside the domain")
        raw.append((line, a, b, False))

    def on_segment(pt, k):
        ln, a, b, _ = raw[k]
        if abs(ln.signed_distance(pt)) > snap:
            return False
        lo, hi = sorted((ln.position(a), ln.position(b)))
        s = ln.position(pt)
        return lo - snap <= s <= hi + snap

    # snap internal endpoints onto their supports
    support = {}
    ends = {}
    for k in range(nc, len(raw)):
        ln, a, b, _ = raw[k]
        snapped = []
        for which, pt in enumerate((a, b)):
            hosts = [h for h in range(len(raw)) if h != k and on_segment(pt, h)]
            if len(hosts) != 1:
                if not hosts:
                    raise err(f"endpoint {pt} does not end on any segment or the boundary")
                raise err(f"endpoint {pt} touches {len(hosts)} segments (not a T-junction)")
            h = hosts[0]
            q = ln.intersect(raw[h][0])
            if q is None:
                raise err(f"segment ends on a parallel segment at {pt}")
            support[(k, which)] = h
            snapped.append(tuple(q))
        ends[k] = snapped
    for k, (pa, pb) in ends.items():
        ln = raw[k][0]
        raw[k] = (ln, pa, pb, False)
    # vertex table
    coords = list(corners)
    owner = [None] * nc
    for k in range(nc, len(raw)):
        for which in (0, 1):
            coords.append(raw[k][1 + which])
            owner.append((k, which))
    arr = np.array(coords)
    diff = arr[:, None, :] - arr[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    if (dist <= snap).any():
        i, j = np.argwhere(dist <= snap)[0]
        raise err(f"vertices {coords[i]} and {coords[j]} coincide")
    crossing = _proper_crossings(arr[nc:][0::2], arr[nc:][1::2], snap)
    if crossing:
        i, j = crossing[0]
        raise err(f"internal segments {i} and {j} cross")
    # vertices on each segment
    on = {k: [] for k in range(len(raw))}
    for k in range(nc):
        on[k] += [k, (k + 1) % nc]
    for idx in range(nc, len(coords)):
        k, which = owner[idx]
        on[k].append(idx)
        on[support[(k, which)]].append(idx)
    vid = {}
    for idx, pt in enumerate(coords):
        vid[idx] = t._new_vertex(pt)
    seg_of = {}
    for k, (ln, a, b, boundary) in enumerate(raw):
        members = sorted(set(on[k]), key=lambda i: ln.position(coords[i]))
        # the segment's own endpoints must be extremal
        sid = t._new_segment(ln, [vid[i] for i in members], boundary)
        seg_of[k] = sid
        for u, v in zip(members, members[1:]):
            t._edge_seg[_ekey(vid[u], vid[v])] = sid
    for idx in range(nc):
        t._vseg[vid[idx]] = (None, None)
    for idx in range(nc, len(coords)):
        k, which = owner[idx]
        t._vseg[vid[idx]] = (seg_of[support[(k, which)]], seg_of[k])
    for k in range(nc, len(raw)):
        vs = t._segs[seg_of[k]].verts
        own = {vid[nc + 2 * (k - nc)], vid[nc + 2 * (k - nc) + 1]}
        if {vs[0], vs[-1]} != own:
            raise err(f"segment {k - nc} extends past its endpoints")
    for k in range(nc):
        vs = t._segs[seg_of[k]].verts
        if {vs[0], vs[-1]} != {vid[k], vid[(k + 1) % nc]}:
            raise err("domain side vertex order is inconsistent")
    # faces by half-edge traversal
    nbrs = {}
    for u, v in t._edge_seg:
        nbrs.setdefault(u, []).append(v)
        nbrs.setdefault(v, []).append(u)
    order = {}
    for v, ns in nbrs.items():
        x0, y0 = t._pts[v]
        ns.sort(key=lambda w: math.atan2(t._pts[w][1] - y0, t._pts[w][0] - x0))
        order[v] = {w: i for i, w in enumerate(ns)}
    visited = set()
    faces = []
    for u, ns in nbrs.items():
        for v in ns:
            if (u, v) in visited:
                continue
            ring = []
            a, b = u, v
            while (a, b) not in visited:
                visited.add((a, b))
                ring.append(a)
                around = nbrs[b]
                w = around[(order[b][a] - 1) % len(around)]
                a, b = b, w
                if len(ring) > 4 * len(t._pts) + 8:
                    raise err("face traversal did not close")
            faces.append(ring)
    for ring in faces:
        if shoelace([t._pts[v] for v in ring]) > 0:
            t._add_cell(ring)
    for v in t._pts:
        through, ending = t._vseg[v]
        if through is not None:
            t._angle += t._vcontrib(v)
    for sid in t._segs:
        t._reclassify(sid)
    try:
        t.check_invariants()
    except InvalidTessellationError as exc:
        raise err(f"not a valid T-tessellation: {exc}") from None
    return t


def same_tessellation(t1: TTessellation, t2: TTessellation, tol: float | None = None) -> bool:
    """Geometric equality: matching vertices, segment endpoints and cell areas."""
    from scipy.spatial import cKDTree

    if tol is None:
        tol = 1e-7 * t1.domain.diameter
    if t1.n_cells != t2.n_cells or len(t1._pts) != len(t2._pts):
        return False
    if len(t1.internal_segment_ids) != len(t2.internal_segment_ids):
        return False
    p1 = np.array(list(t1._pts.values()))
    p2 = np.array(list(t2._pts.values()))
    d, idx = cKDTree(p2).query(p1)
    if np.any(d > tol) or len(set(idx.tolist())) != len(p1):
        return False

    def seg_key(t):
        rows = []
        for _, a, b in t.internal_segments():
            a, b = sorted((a, b))
            rows.append((*a, *b))
        return np.array(sorted(rows)).reshape(-1, 4)

    s1 = seg_key(t1)
    s2 = seg_key(t2)
    if len(s1):
        d, idx = cKDTree(s2).query(s1)
        if np.any(d > 2 * tol) or len(set(idx.tolist())) != len(s1):
            return False
    a1 = np.sort(np.array(list(t1._carea.values())))
    a2 = np.sort(np.array(list(t2._carea.values())))
    return bool(np.allclose(a1, a2, rtol=0, atol=tol * t1.domain.diameter * 4))


# ----------------------------------------------------------------------
# functional API
# ----------------------------------------------------------------------

def debug_enabled() -> bool:
    return os.environ.get("TTESSEL_DEBUG", "").strip().lower() not in ("", "0", "false", "no")


def empty(domain) -> TTessellation:
    return TTessellation.empty(domain)


def apply_split(t: TTessellation, s: Split) -> TTessellation:
    out = t.copy()
    out.split(s)
    return out


def apply_merge(t: TTessellation, m: Merge) -> TTessellation:
    out = t.copy()
    out.merge(m)
    return out


def apply_flip(t: TTessellation, f: Flip) -> TTessellation:
    out = t.copy()
    out.flip(f)
    return out


def enumerate_merges(t: TTessellation):
    return t.enumerate_merges()


def enumerate_flips(t: TTessellation):
    return t.enumerate_flips()


def split_total_mass(t: TTessellation) -> float:
    return t.split_total_mass()


def sample_split(t: TTessellation, rng) -> Split:
    return t.propose_split(rng).op


def statistics_basic(t: TTessellation):
    return t.statistics_basic()


def rebuild(t: TTessellation) -> TTessellation:
    """Fresh tessellation rebuilt from the internal segments alone."""
    return from_segments(t.domain, [(a, b, ln) for ln, a, b in t.internal_segments()])
