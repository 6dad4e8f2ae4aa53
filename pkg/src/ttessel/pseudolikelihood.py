"""Log-pseudolikelihood of exponential-family T-tessellation models.

The split integral is replaced by an average over uniform dummy splits.
Merge and flip terms are exact sums over the finitely many applicable
operators. ``nois`` alternates safeguarded Newton steps with growth of the
dummy-split sample.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .models import ExponentialModel
from .tessellation import TTessellation

log = logging.getLogger(__name__)

EXP_LIMIT = 700.0


class PseudoLikelihoodError(ValueError):
    pass


class SingularHessianError(PseudoLikelihoodError):
    pass


class NonFiniteError(PseudoLikelihoodError, OverflowError):
    pass


class DummySplitSet:
    """Uniform dummy splits of one tessellation with cached increments.

    Also carries the merge increment sum and the flip increments of the
    same tessellation, which never change while theta moves.
    """

    def __init__(self, model: ExponentialModel, tess: TTessellation, use_kernel: bool = True):
        self.model = model
        self.source = tess
        self.u = tess.u
        self.increments = np.empty((0, model.d))
        self.splits = []  # populated only on the slow path
        merges = [model.increment(tess, m) for m in tess.enumerate_merges()]
        self.merge_sum = np.sum(merges, axis=0) if merges else np.zeros(model.d)
        flips = []
        for f in tess.enumerate_flips():
            plan = tess.plan_flip(f)
            if plan is None:
                raise PseudoLikelihoodError(f"flip {f} is numerically degenerate on this tessellation")
            flips.append(model.increment_of_plan(tess, plan))
        self.flip_increments = np.array(flips).reshape(-1, model.d)
        if not (np.all(np.isfinite(self.merge_sum)) and np.all(np.isfinite(self.flip_increments))):
            raise NonFiniteError("merge or flip increments are not finite")
        self._flat = None
        self.use_kernel = use_kernel and model.split_increments_batch(_empty_batch()) is not None

    def __len__(self):
        return len(self.increments)

    def extend(self, m: int, rng):
        """Add m uniform dummy splits."""
        rng = np.random.default_rng(rng)
        if m <= 0:
            return self
        new = self._draw_kernel(m, rng) if self.use_kernel else self._draw_slow(m, rng)
        self.increments = np.vstack([self.increments, new])
        return self

    def _draw_slow(self, m, rng):
        tess, model = self.source, self.model
        rows = []
        for _ in range(m):
            plan = tess.propose_split(rng)
            self.splits.append(plan.op)
            rows.append(model.increment_of_plan(tess, plan))
        return np.array(rows)

    def _draw_kernel(self, m, rng):
        if self._flat is None:
            ids, offsets, vx, vy, ea, ep, ei, bound, areas = self.source.flat_cells()
            per = 2.0 * bound
            self._flat = (offsets, vx, vy, ea, ep, ei, bound, per / per.sum())
        offsets, vx, vy, ea, ep, ei, bound, prob = self._flat
        out = []
        need = m
        while need > 0:
            k = max(16, int(need * 1.7) + 8)
            cells = rng.choice(len(prob), size=k, p=prob)
            alpha = rng.uniform(0.0, math.pi, size=k)
            u_acc = rng.uniform(size=k)
            u_pos = rng.uniform(size=k)
            res = _kernels.split_candidates(offsets, vx, vy, ea, ep, ei, bound,
                                            cells, alpha, u_acc, u_pos, self.source.eps)
            ok = res["status"] == 1
            batch = {key: v[ok][:need] for key, v in res.items()}
            out.append(self.model.split_increments_batch(batch))
            need -= len(batch["status"])
        return np.vstack(out)

    @classmethod
    def draw(cls, model, tess, m: int, rng, use_kernel: bool = True):
        return cls(model, tess, use_kernel=use_kernel).extend(m, rng)


def _empty_batch():
    z = np.zeros(0)
    return {"area_a": z, "area_b": z, "angle_a": z, "angle_b": z, "length": z}


def _check_set(model, tess, S):
    if len(S) == 0:
        raise PseudoLikelihoodError("the dummy-split set is empty")
    if tess is not None and S.source is not tess:
        raise PseudoLikelihoodError("dummy splits were drawn on a different tessellation")
    if S.model.d != model.d:
        raise PseudoLikelihoodError("dummy splits were built for a model of another dimension")


def _exp_terms(theta, incs):
    z = incs @ theta
    if z.size and z.max() > EXP_LIMIT:
        raise NonFiniteError(f"exponent {z.max():.4g} overflows; theta={theta.tolist()}")
    return np.exp(z)


def lpl_discrete(model, tess, S: DummySplitSet, theta) -> float:
    """Dummy-split approximation of the log-pseudolikelihood at theta."""
    _check_set(model, tess, S)
    th = np.asarray(theta, dtype=float)
    es = _exp_terms(th, S.increments)
    ef = _exp_terms(th, S.flip_increments)
    scale = S.u / (math.pi * len(S))
    val = (-th @ S.merge_sum - scale * es.sum()
           - th @ S.flip_increments.sum(axis=0) - ef.sum())
    if not math.isfinite(val):
        raise NonFiniteError(f"lpl is not finite at theta={th.tolist()}")
    return float(val)


def lpl_gradient_discrete(model, tess, S: DummySplitSet, theta):
    _check_set(model, tess, S)
    th = np.asarray(theta, dtype=float)
    es = _exp_terms(th, S.increments)
    ef = _exp_terms(th, S.flip_increments)
    scale = S.u / (math.pi * len(S))
    g = (-S.merge_sum - scale * (S.increments.T @ es)
         - S.flip_increments.sum(axis=0) - S.flip_increments.T @ ef)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"gradient is not finite at theta={th.tolist()}")
    return g


def lpl_hessian_discrete(model, tess, S: DummySplitSet, theta):
    _check_set(model, tess, S)
    th = np.asarray(theta, dtype=float)
    es = _exp_terms(th, S.increments)
    ef = _exp_terms(th, S.flip_increments)
    scale = S.u / (math.pi * len(S))
    ts = S.increments
    tf = S.flip_increments
    h = -scale * (ts.T * es) @ ts - (tf.T * ef) @ tf
    h = 0.5 * (h + h.T)
    if not np.all(np.isfinite(h)):
        raise NonFiniteError(f"Hessian is not finite at theta={th.tolist()}")
    return h


def crtt_mple(tess_or_nnb, u: float | None = None) -> float:
    """Closed-form maximum pseudolikelihood estimate under the CRTT model.

    Pass a tessellation, or the number of non-blocking internal segments
    together with the total cell perimeter ``u``.
    """
    if isinstance(tess_or_nnb, TTessellation):
        _, nnb, _, u, _, _ = tess_or_nnb.statistics_basic()
    else:
        nnb = tess_or_nnb
        if u is None:
            raise ValueError("u is required with a raw segment count")
    if nnb < 1:
        raise PseudoLikelihoodError("no non-blocking internal segment: the estimate is -inf")
    if not u > 0:
        raise ValueError("u must be positive")
    return math.log(nnb * math.pi / u)


@dataclass
class NoisConfig:
    epsilon: float = 1.0
    delta: float = 0.005
    max_iterations: int = 150
    initial_theta: object = None  # None (zeros), "crtt-start", or a vector
    use_kernel: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class NoisResult:
    theta: np.ndarray
    trace: list = field(default_factory=list)  # (theta, lpl) per iteration, initial point first
    iterations: int = 0
    converged: bool = False
    n_dummy: int = 0

    def __iter__(self):
        yield self.theta
        yield self.trace


def initial_theta(model, tess, start):
    if start is None:
        return np.zeros(model.d)
    if isinstance(start, str):
        if start != "crtt-start":
            raise ValueError(f"unknown initial theta {start!r}")
        if not model.starts_with_nseint:
            raise ValueError("crtt-start needs nseint as the first statistic")
        th = np.zeros(model.d)
        th[0] = crtt_mple(tess)
        return th
    th = np.asarray(start, dtype=float).ravel()
    if th.shape != (model.d,):
        raise ValueError("initial theta has the wrong dimension")
    return th


def newton_direction(grad, hess):
    """Solve (-H) x = G.

    -H is rescaled to unit diagonal first, so the singularity test does
    not depend on the units of the statistics.
    """
    a = -np.asarray(hess, dtype=float)
    g = np.asarray(grad, dtype=float)
    diag = np.diag(a)
    if np.any(~(diag > 0)):
        raise SingularHessianError(
            "Hessian has a non-negative diagonal entry: a statistic never varies on this tessellation")
    d = 1.0 / np.sqrt(diag)
    corr = a * np.outer(d, d)
    eig = np.linalg.eigvalsh(corr)
    if eig.min() <= 1e-10:
        raise SingularHessianError(
            f"Hessian is singular or not negative definite (scaled eigenvalues {eig.tolist()}); "
            "the statistics may be collinear or the tessellation too small for this model")
    c = np.linalg.cholesky(corr)
    y = np.linalg.solve(c, d * g)
    return d * np.linalg.solve(c.T, y)


def nois(model: ExponentialModel, tess: TTessellation, config: NoisConfig | None = None, rng=None) -> NoisResult:
    """Newton optimization with an increasing dummy-split sample."""
    cfg = config or NoisConfig()
    rng = np.random.default_rng(rng)
    m = tess.statistics_basic()[1]
    if m < 1:
        raise PseudoLikelihoodError("the tessellation has no non-blocking internal segment")
    theta = initial_theta(model, tess, cfg.initial_theta)
    S = DummySplitSet.draw(model, tess, m, rng, use_kernel=cfg.use_kernel)
    L = lpl_discrete(model, tess, S, theta)
    result = NoisResult(theta.copy(), [(theta.copy(), L)], 0, False, len(S))
    if cfg.max_iterations == 0:
        result.converged = True
        return result
    theta0 = theta.copy()
    for k in range(1, cfg.max_iterations + 1):
        g = lpl_gradient_discrete(model, tess, S, theta)
        h = lpl_hessian_discrete(model, tess, S, theta)
        step = newton_direction(g, h)  # ascent: theta - eps H^-1 G
        base = lpl_discrete(model, tess, S, theta)
        eps = cfg.epsilon
        cand = theta
        for _ in range(60):
            cand = theta + eps * step
            try:
                val = lpl_discrete(model, tess, S, cand)
            except NonFiniteError:
                val = -math.inf
            if val >= base - 1e-12 * (1.0 + abs(base)):
                break
            eps *= 0.5
        else:
            cand = theta
        theta = cand
        S.extend(m, rng)
        L_new = lpl_discrete(model, tess, S, theta)
        if k == 1:
            delta_L = L_new - lpl_discrete(model, tess, S, theta0)
        else:
            delta_L = L_new - L
        L = L_new
        result.trace.append((theta.copy(), L))
        result.iterations = k
        log.debug("nois iteration %d theta=%s lpl=%.8g delta=%.3g", k, theta, L, delta_L)
        if abs(delta_L) <= cfg.delta * (abs(L) + cfg.delta):
            result.converged = True
            break
    result.theta = theta.copy()
    result.n_dummy = len(S)
    return result
