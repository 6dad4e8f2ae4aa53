"""Independent reference computations used by the tests.

Nothing here reuses the incremental bookkeeping of the package: counts
come from raw cell rings, flips from a global ray cast, line sampling from
a bounding-circle rejection sampler.
"""
import math

import numpy as np

from ttessel.geometry import ConvexPolygon, Line, chord
from ttessel.smf import SmfChain
from ttessel.models import ExponentialModel


def mc_area(xy, rng, n=200_000):
    """Hit-or-miss area estimate and its standard error."""
    poly = ConvexPolygon(xy)
    x0, y0, x1, y1 = poly.bbox()
    pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    frac = poly.contains_many(pts).mean()
    box = (x1 - x0) * (y1 - y0)
    return frac * box, math.sqrt(frac * (1 - frac) / n) * box


def circle_rejection_line(poly: ConvexPolygon, rng):
    """Isotropic line hitting poly: uniform over a bounding circle's lines, rejected on a miss."""
    c = poly.xy.mean(axis=0)
    r = float(np.hypot(*(poly.xy - c).T).max()) * 1.01
    while True:
        alpha = rng.uniform(0, math.pi)
        off = c[0] * math.cos(alpha) + c[1] * math.sin(alpha)
        line = Line(alpha, off + rng.uniform(-r, r))
        if chord(poly, line) is not None:
            return line


def recount_segments(tess):
    """(nseint, nnbseint, nbseint) from cell rings alone.

    Edges meeting at a vertex in a straight line belong to the same segment
    (union-find); a segment is internal unless it lies on the domain boundary.
    """
    pts = {}
    edges = set()
    for c in tess.cell_ids:
        ring = tess.cell_vertices(c)
        for k, v in enumerate(ring):
            pts[v] = np.array(tess.point(v))
            w = ring[(k + 1) % len(ring)]
            edges.add((min(v, w), max(v, w)))
    edges = sorted(edges)
    parent = list(range(len(edges)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    at = {}
    for i, (a, b) in enumerate(edges):
        at.setdefault(a, []).append(i)
        at.setdefault(b, []).append(i)
    for v, inc in at.items():
        for i in inc:
            for j in inc:
                if i >= j:
                    continue
                oi = edges[i][0] if edges[i][1] == v else edges[i][1]
                oj = edges[j][0] if edges[j][1] == v else edges[j][1]
                d1 = pts[oi] - pts[v]
                d2 = pts[oj] - pts[v]
                cross = d1[0] * d2[1] - d1[1] * d2[0]
                if abs(cross) <= 1e-9 * np.linalg.norm(d1) * np.linalg.norm(d2) and d1 @ d2 < 0:
                    parent[find(i)] = find(j)
    groups = {}
    for i in range(len(edges)):
        groups.setdefault(find(i), []).append(i)
    dom = tess.domain
    tol = 1e-7 * dom.diameter
    nnb = nb = 0
    for members in groups.values():
        a, b = edges[members[0]]
        mid = 0.5 * (pts[a] + pts[b])
        if dom.boundary_distance(mid) <= tol:
            continue
        if len(members) == 1:
            nnb += 1
        else:
            nb += 1
    return nnb + nb, nnb, nb


def global_flip_extension(tess, flip):
    """Where the blocked segment lands after a flip: first hit of its ray
    against every segment and domain side."""
    seg = tess.segment(flip.segment)
    vs = seg.verts
    v1 = vs[1] if flip.end == "first" else vs[-2]
    ext = tess.segment(tess.vertex_segments(v1)[1])
    ev = ext.verts
    prev = ev[1] if ev[0] == v1 else ev[-2]
    o = np.array(tess.point(v1))
    d = o - np.array(tess.point(prev))
    d /= np.linalg.norm(d)
    best = (math.inf, None)
    eps = 1e-9 * tess.domain.diameter
    for sid in tess.segment_ids:
        a, b = (np.array(p) for p in tess.segment_endpoints(sid))
        e = b - a
        den = d[0] * e[1] - d[1] * e[0]
        if abs(den) < 1e-14:
            continue
        r = a - o
        t = (r[0] * e[1] - r[1] * e[0]) / den
        s = (r[0] * d[1] - r[1] * d[0]) / den
        if t > eps and -1e-12 <= s <= 1 + 1e-12 and t < best[0]:
            best = (t, o + t * d)
    return best[1]


def chain_states(model, side, n, spacing, seed, burnin=2000):
    """n copies of states visited by one SMF chain."""
    ch = SmfChain(model, ConvexPolygon.rectangle(side), rng=seed)
    return ch.sample(n, burnin, spacing)


def random_tessellation(rng, min_cells=20, max_cells=200):
    """A CRTT-like tessellation with a cell count in [min_cells, max_cells]."""
    while True:
        side = rng.uniform(0.8, 2.2)
        theta = rng.uniform(-0.5, 1.0)
        ch = SmfChain(ExponentialModel.crtt(theta), ConvexPolygon.rectangle(side),
                      rng=int(rng.integers(2**31)))
        ch.run(int(rng.integers(1500, 6000)))
        if min_cells <= ch.state.n_cells <= max_cells and ch.state.statistics_basic()[1] >= 1:
            return ch.state


def brick_wall(rows=(6, 5, 6, 5, 5)):
    """Unit-square brick wall: full-width horizontal courses, staggered joints."""
    h = 1.0 / len(rows)
    segs = [((0.0, k * h), (1.0, k * h)) for k in range(1, len(rows))]
    offsets = {5: [0.2, 0.4, 0.6, 0.8], 6: [1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6]}
    prev = None
    for r, n in enumerate(rows):
        xs = offsets[n]
        if prev == n:  # same count as the course below: shift the joints
            xs = [x - 0.05 for x in xs]
        prev = n
        for x in xs:
            segs.append(((x, r * h), (x, (r + 1) * h)))
    return segs


def batch_means_se(x, n_batches=30):
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(b.std(ddof=1) / math.sqrt(n_batches))
