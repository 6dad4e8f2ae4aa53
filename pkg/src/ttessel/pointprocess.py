"""Finite point patterns: Papangelou intensities, Besag pseudolikelihood and
the dummy-point logistic criterion for exponential-family models."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .geometry import REL_TOL, ConvexPolygon, area


class PointProcessError(ValueError):
    pass


class SeparationError(PointProcessError):
    """The logistic criterion has no finite maximizer."""


class PointPattern:
    """Points inside a convex window, no two closer than the geometric tolerance."""

    def __init__(self, window: ConvexPolygon, points, check: bool = True):
        if not isinstance(window, ConvexPolygon):
            window = ConvexPolygon(window)
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        self.window = window
        self.points = pts
        self.eps = REL_TOL * window.diameter
        if check:
            if not np.all(np.isfinite(pts)):
                raise PointProcessError("non-finite coordinates")
            inside = window.contains_many(pts, tol=self.eps)
            if not np.all(inside):
                raise PointProcessError(f"point {pts[~inside][0].tolist()} lies outside the window")
            if len(pts) > 1 and cKDTree(pts).query_pairs(self.eps):
                raise PointProcessError("duplicate points")

    def __len__(self):
        return len(self.points)

    @property
    def area(self) -> float:
        return area(self.window)

    @classmethod
    def read_csv(cls, path, window: ConvexPolygon):
        rows = []
        with open(path, newline="") as fh:
            for line, rec in enumerate(csv.reader(row for row in fh if not row.startswith("#")), 1):
                if not rec or rec[0].strip().lower() == "x":
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except (ValueError, IndexError):
                    raise PointProcessError(f"{path}: record {line} is not an x,y pair: {rec}") from None
        return cls(window, np.array(rows).reshape(-1, 2))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for x, y in self.points:
                w.writerow([repr(float(x)), repr(float(y))])


class PpModel:
    """Homogeneous Poisson (t = n) or Strauss (t = (n, -pairs within radius))."""

    def __init__(self, name: str, theta, radius: float | None = None):
        if name not in ("poisson", "strauss"):
            raise ValueError(f"unknown point-process model {name!r}")
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        d = 1 if name == "poisson" else 2
        if theta.shape != (d,):
            raise ValueError(f"{name} needs {d} parameters")
        if name == "strauss" and not (radius and radius > 0):
            raise ValueError("strauss needs a positive interaction radius")
        self.name = name
        self.theta = theta
        self.radius = radius

    @classmethod
    def poisson(cls, theta=0.0):
        return cls("poisson", [theta])

    @classmethod
    def strauss(cls, theta, radius):
        return cls("strauss", theta, radius)

    @property
    def d(self) -> int:
        return len(self.theta)

    def with_theta(self, theta):
        return PpModel(self.name, theta, self.radius)

    def statistic(self, X: PointPattern):
        n = float(len(X))
        if self.name == "poisson":
            return np.array([n])
        pairs = len(cKDTree(X.points).query_pairs(self.radius)) if len(X) > 1 else 0
        return np.array([n, -float(pairs)])

    def increments(self, locations, X: PointPattern, exclude_self: bool = False):
        """t(u, X) for each location u; with exclude_self the locations are
        points of X and each is removed from X first."""
        loc = np.asarray(locations, dtype=float).reshape(-1, 2)
        ones = np.ones(len(loc))
        if self.name == "poisson":
            return ones[:, None]
        cnt = _kernels.neighbour_counts(loc, X.points, self.radius).astype(float)
        if exclude_self:
            cnt -= 1.0
        return np.column_stack([ones, -cnt])

    def data_increments(self, X: PointPattern):
        return self.increments(X.points, X, exclude_self=True)


def papangelou(model: PpModel, x, X: PointPattern, theta=None) -> float:
    th = model.theta if theta is None else np.asarray(theta, dtype=float)
    inc = model.increments(np.asarray(x, dtype=float), X)[0]
    return math.exp(float(th @ inc))


def quadrature(window: ConvexPolygon, resolution: int = 128):
    """Midpoint grid over the bounding box, kept inside the window.

    Weights are scaled to sum to the window area, so constants integrate
    exactly.
    """
    x0, y0, x1, y1 = window.bbox()
    gx = x0 + (np.arange(resolution) + 0.5) * (x1 - x0) / resolution
    gy = y0 + (np.arange(resolution) + 0.5) * (y1 - y0) / resolution
    pts = np.array(np.meshgrid(gx, gy)).reshape(2, -1).T
    pts = pts[window.contains_many(pts)]
    if len(pts) == 0:
        raise PointProcessError("quadrature resolution too coarse for this window")
    return pts, np.full(len(pts), area(window) / len(pts))


class _PlTerms:
    def __init__(self, model, X, resolution):
        self.data = model.data_increments(X)
        q, w = quadrature(X.window, resolution)
        self.quad = model.increments(q, X)
        self.weights = w


def lpl_pp(model: PpModel, X: PointPattern, theta=None, resolution: int = 128, _terms=None) -> float:
    """Besag log-pseudolikelihood with grid quadrature for the integral term."""
    th = model.theta if theta is None else np.asarray(theta, dtype=float)
    tm = _terms or _PlTerms(model, X, resolution)
    zd = tm.data @ th
    if np.any(zd == -np.inf):
        return -math.inf
    zq = tm.quad @ th
    return float(zd.sum() - tm.weights @ np.exp(zq))


def lpl_pp_gradient(model, X, theta=None, resolution: int = 128, _terms=None):
    th = model.theta if theta is None else np.asarray(theta, dtype=float)
    tm = _terms or _PlTerms(model, X, resolution)
    e = tm.weights * np.exp(tm.quad @ th)
    return tm.data.sum(axis=0) - tm.quad.T @ e


def lpl_pp_hessian(model, X, theta=None, resolution: int = 128, _terms=None):
    th = model.theta if theta is None else np.asarray(theta, dtype=float)
    tm = _terms or _PlTerms(model, X, resolution)
    e = tm.weights * np.exp(tm.quad @ th)
    return -(tm.quad.T * e) @ tm.quad


def fit_pl(model: PpModel, X: PointPattern, resolution: int = 128, max_iter: int = 100, tol: float = 1e-10):
    """Maximize lpl_pp by Newton's method with step halving."""
    tm = _PlTerms(model, X, resolution)
    if len(X) == 0:
        raise SeparationError("empty pattern: the pseudolikelihood has no finite maximizer")
    th = np.zeros(model.d)
    th[0] = math.log(len(X) / X.area)
    val = lpl_pp(model, X, th, _terms=tm)
    for _ in range(max_iter):
        g = lpl_pp_gradient(model, X, th, _terms=tm)
        h = lpl_pp_hessian(model, X, th, _terms=tm)
        try:
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            raise SeparationError("singular pseudolikelihood Hessian") from None
        t = 1.0
        while True:
            cand = th + t * step
            cv = lpl_pp(model, X, cand, _terms=tm)
            if cv >= val - 1e-12 * (1 + abs(val)) or t < 1e-12:
                break
            t *= 0.5
        th, val = cand, cv
        if np.max(np.abs(t * step)) < tol:
            break
    return th


def _rho_values(rho, pts):
    if callable(rho):
        vals = np.asarray(rho(pts), dtype=float).reshape(-1)
    else:
        vals = np.full(len(pts), float(rho))
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise PointProcessError("dummy intensity must be positive and finite at every point")
    return vals


def _linear_predictor(model, X, Y, rho):
    zx = model.data_increments(X)
    zy = model.increments(Y.points, X)
    off_x = -np.log(_rho_values(rho, X.points))
    off_y = -np.log(_rho_values(rho, Y.points))
    return zx, zy, off_x, off_y


def logistic_criterion(model: PpModel, X: PointPattern, Y: PointPattern, rho, theta=None) -> float:
    """Sum over X of log(lam/(lam+rho)) plus sum over Y of log(rho/(lam+rho))."""
    th = model.theta if theta is None else np.asarray(theta, dtype=float)
    if len(X) and len(Y):
        d, _ = cKDTree(Y.points).query(X.points)
        if np.any(d <= X.eps):
            raise PointProcessError("data and dummy points coincide")
    zx, zy, ox, oy = _linear_predictor(model, X, Y, rho)
    ex = zx @ th + ox
    ey = zy @ th + oy
    return float(-np.logaddexp(0.0, -ex).sum() - np.logaddexp(0.0, ey).sum())


def simulate_poisson(window: ConvexPolygon, intensity, rng, intensity_max: float | None = None):
    """Poisson process on the window; callable intensities need ``intensity_max``."""
    x0, y0, x1, y1 = window.bbox()
    box = (x1 - x0) * (y1 - y0)
    top = intensity_max if callable(intensity) else float(intensity)
    if top is None:
        raise ValueError("intensity_max is required for a non-constant intensity")
    n = rng.poisson(top * box)
    pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    pts = pts[window.contains_many(pts)]
    if callable(intensity):
        keep = rng.uniform(size=len(pts)) * top <= _rho_values(intensity, pts)
        pts = pts[keep]
    return PointPattern(window, pts, check=False)


@dataclass
class LogisticFit:
    theta: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    n_dummy: int


def fit_logistic(model: PpModel, X: PointPattern, rho, rng, rho_max: float | None = None,
                 max_iter: int = 100, tol: float = 1e-10, Y: PointPattern | None = None) -> LogisticFit:
    """Maximize the logistic criterion with a Poisson dummy pattern of intensity rho."""
    if len(X) == 0:
        raise SeparationError("no data points: the criterion increases without bound as theta_1 -> -inf")
    if Y is None:
        Y = simulate_poisson(X.window, rho, rng, rho_max)
    if len(Y) == 0:
        raise SeparationError("no dummy points: the criterion increases without bound as theta_1 -> +inf")
    zx, zy, ox, oy = _linear_predictor(model, X, Y, rho)
    Z = np.vstack([zx, zy])
    off = np.concatenate([ox, oy])
    resp = np.concatenate([np.ones(len(zx)), np.zeros(len(zy))])

    def value(th):
        eta = Z @ th + off
        return float(-(resp * np.logaddexp(0.0, -eta)).sum() - ((1 - resp) * np.logaddexp(0.0, eta)).sum())

    th = np.zeros(model.d)
    th[0] = math.log(len(X) / X.area)
    val = value(th)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = Z @ th + off
        p = 0.5 * (1.0 + np.tanh(0.5 * eta))  # logistic, overflow-free
        g = Z.T @ (resp - p)
        w = p * (1 - p)
        h = (Z.T * w) @ Z
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            raise SeparationError("singular information matrix: responses are separable") from None
        t = 1.0
        while True:
            cand = th + t * step
            cv = value(cand)
            if cv >= val - 1e-12 * (1 + abs(val)) or t < 1e-12:
                break
            t *= 0.5
        th, val = cand, cv
        if np.max(np.abs(th)) > 1e6:
            raise SeparationError(f"estimates diverge (theta={th.tolist()}): responses are separable")
        if np.max(np.abs(t * step)) < tol:
            converged = True
            break
    return LogisticFit(th, converged, it, val, len(Y))


def simulate_strauss(window: ConvexPolygon, theta, radius: float, rng, n_steps: int = 100_000,
                     start=None, capacity: int = 100_000) -> PointPattern:
    """Birth-death Metropolis-Hastings for the Strauss density exp(theta1 n - theta2 s_R)."""
    x0, y0, x1, y1 = window.bbox()
    births = []
    need = n_steps
    while need > 0:
        b = np.column_stack([rng.uniform(x0, x1, 2 * need + 16), rng.uniform(y0, y1, 2 * need + 16)])
        b = b[window.contains_many(b)][:need]
        births.append(b)
        need -= len(b)
    births = np.vstack(births)
    u_move = rng.uniform(size=n_steps)
    u_pick = rng.uniform(size=n_steps)
    u_acc = rng.uniform(size=n_steps)
    start = np.zeros((0, 2)) if start is None else np.asarray(start, dtype=float)
    pts, code = _kernels.strauss_birth_death(start, births, u_move, u_pick, u_acc,
                                             theta[0], theta[1], radius, area(window), capacity)
    if code:
        raise PointProcessError("point capacity exceeded; the model may be unstable (theta2 < 0)")
    return PointPattern(window, pts, check=False)


def subconfig_mean_check(nu_total: float, phi, n_mc: int, rng, max_points: int = 20):
    """Monte-Carlo check of E sum_{Y subset X} phi(Y) = exp(nu) E phi(X) for a
    Poisson process X of total mass nu on the unit square.

    Returns (lhs, rhs, z) with z the standardized paired difference.
    """
    lhs = np.empty(n_mc)
    rhs = np.empty(n_mc)
    scale = math.exp(nu_total)
    for i in range(n_mc):
        n = rng.poisson(nu_total)
        if n > max_points:
            raise PointProcessError(f"sampled pattern has {n} points, more than {max_points} to enumerate")
        pts = rng.uniform(size=(n, 2))
        acc = 0.0
        for k in range(n + 1):
            for sub in itertools.combinations(range(n), k):
                acc += phi(pts[list(sub)])
        lhs[i] = acc
        rhs[i] = scale * phi(pts)
    diff = lhs - rhs
    sd = diff.std(ddof=1) if n_mc > 1 else 0.0
    mean = diff.mean()
    if sd == 0.0:
        z = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    else:
        z = mean / (sd / math.sqrt(n_mc))
    return float(lhs.mean()), float(rhs.mean()), float(z)
