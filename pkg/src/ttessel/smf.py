"""Split/merge/flip Metropolis-Hastings-Green sampler for Gibbs T-tessellations."""
from __future__ import annotations

import logging
import math
from array import array

import numpy as np

from .geometry import ConvexPolygon
from .models import ExponentialModel
from .tessellation import (
    Flip,
    InvalidOperation,
    Merge,
    TTessellation,
    debug_enabled,
    rebuild,
    same_tessellation,
)

log = logging.getLogger(__name__)

REFRESH_EVERY = 50_000
MOVE_CODES = {0: "none", 1: "split", 2: "merge", 3: "flip"}


class ChainFrozenError(RuntimeError):
    """The chain does not renew its segments within the allowed budget."""


class SmfChain:
    """Markov chain targeting exp(theta . t(T)) relative to the CRTT reference.

    Proposals: a split drawn from the normalized split measure, a merge of a
    uniformly chosen non-blocking segment, or a flip chosen uniformly among
    the 2 * nbseint flips, with probabilities ``mix``.
    """

    def __init__(self, model: ExponentialModel, state, rng=None, mix=(1 / 3, 1 / 3, 1 / 3),
                 debug: bool | None = None, full_rebuild_check: bool = False):
        if isinstance(state, ConvexPolygon):
            state = TTessellation.empty(state)
        mix = tuple(float(x) for x in mix)
        if len(mix) != 3 or min(mix) <= 0 or abs(sum(mix) - 1.0) > 1e-12:
            raise ValueError("mix must be three positive probabilities summing to 1")
        self.state = state
        self.model = model
        self.mix = mix
        self.rng = np.random.default_rng(rng)
        self.debug = debug_enabled() if debug is None else debug
        self.full_rebuild_check = full_rebuild_check
        self.iteration = 0
        self._theta = np.asarray(model.theta, dtype=float)
        self._t = model.t(state)
        self.energy_trace = array("d")
        self.nseint_trace = array("l")
        self.nnb_trace = array("l")
        self.nb_trace = array("l")
        self.move_trace = array("b")
        self.births = {sid: 0 for sid in state.internal_segment_ids}
        self.deaths = {}
        self.proposed = {"split": 0, "merge": 0, "flip": 0}
        self.accepted = {"split": 0, "merge": 0, "flip": 0}

    @property
    def energy(self) -> float:
        return float(self._theta @ self._t)

    @property
    def statistics(self):
        return self._t.copy()

    def _ratio(self, plan, kind):
        tess = self.state
        ps, pm, pf = self.mix
        inc = self.model.increment_of_plan(tess, plan)
        lam = self.model.intensity(inc, self._theta)
        nm = len(tess.nonblocking)
        if kind == "split":
            nm_after = nm + plan.delta.nnb
            return lam * (pm / nm_after) / (ps * math.pi / tess.u), inc
        if kind == "merge":
            u_after = tess.u + plan.delta.u
            return lam * (ps * math.pi / u_after) / (pm / nm), inc
        nf = 2 * len(tess.blocking)
        return lam * nf / (nf + 2 * plan.delta.nb), inc

    def step(self) -> bool:
        tess = self.state
        rng = self.rng
        r = rng.uniform()
        ps, pm, _ = self.mix
        plan = None
        if r < ps:
            kind = "split"
            plan = tess.propose_split(rng)
        elif r < ps + pm:
            kind = "merge"
            nm = len(tess.nonblocking)
            if nm:
                plan = tess.plan_merge(Merge(tess.nonblocking.items[int(rng.integers(nm))]))
        else:
            kind = "flip"
            nf = 2 * len(tess.blocking)
            if nf:
                k = int(rng.integers(nf))
                plan = tess.plan_flip(Flip(tess.blocking.items[k >> 1], "first" if k & 1 == 0 else "last"))
        self.proposed[kind] += 1
        accepted = False
        if plan is not None:
            ratio, inc = self._ratio(plan, kind)
            if ratio >= 1.0 or rng.uniform() < ratio:
                accepted = True
                self._accept(plan, kind, inc)
        self.iteration += 1
        if self.iteration % REFRESH_EVERY == 0:
            # keep running sums honest over very long runs
            tess.refresh_totals()
            self._t = self.model.t(tess)
        self.energy_trace.append(float(self._theta @ self._t))
        s = tess.statistics_basic()
        self.nseint_trace.append(s[0])
        self.nnb_trace.append(s[1])
        self.nb_trace.append(s[2])
        self.move_trace.append({"split": 1, "merge": 2, "flip": 3}[kind] if accepted else 0)
        return accepted

    def _accept(self, plan, kind, inc):
        tess = self.state
        inverse = tess.apply(plan)
        self._t = self._t + inc
        self.accepted[kind] += 1
        it = self.iteration + 1
        if kind == "split":
            self.births[inverse.segment] = it
        elif kind == "merge":
            self.deaths[plan.op.segment] = it
        if self.debug:
            tess.check_invariants()
            if not np.allclose(self._t, self.model.t(tess), rtol=1e-9, atol=1e-9):
                raise InvalidOperation(f"statistic drift after {kind}: {self._t} vs {self.model.t(tess)}")
            if self.full_rebuild_check and not same_tessellation(tess, rebuild(tess)):
                raise InvalidOperation(f"incremental state differs from full rebuild after {kind}")

    def run(self, n_iterations: int):
        if n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        step = self.step
        for _ in range(n_iterations):
            step()
        return self

    def sample(self, n_samples: int, burnin: int, period: int):
        """Copies of the state at iterations burnin + k * period (relative to now)."""
        if min(n_samples, burnin, period) < 0:
            raise ValueError("n_samples, burnin and period must be >= 0")
        out = []
        self.run(burnin)
        for k in range(n_samples):
            if k:
                self.run(period)
            out.append(self.state.copy())
        return out

    def iter_samples(self, n_samples: int, burnin: int, period: int):
        """Like ``sample`` but yields the live state without copying."""
        self.run(burnin)
        for k in range(n_samples):
            if k:
                self.run(period)
            yield self.state

    # ------------------------------------------------------------------
    def renewal_fraction_curve(self, start: int, end: int, periods, min_windows: int = 10):
        """Average fraction of segments alive at a window start that are dead at its end.

        Windows are disjoint and tile [start, end). Returns NaN for periods
        with fewer than ``min_windows`` usable windows.
        """
        ids = [s for s, b in self.births.items() if b <= end]
        birth = np.array([self.births[s] for s in ids], dtype=float)
        death = np.array([self.deaths.get(s, math.inf) for s in ids], dtype=float)
        out = []
        for p in periods:
            p = int(p)
            fracs = []
            for s0 in range(start, end - p + 1, p):
                alive = (birth <= s0) & (death > s0)
                n_alive = int(alive.sum())
                if n_alive == 0:
                    continue
                fracs.append(float((alive & (death <= s0 + p)).sum()) / n_alive)
            out.append(float(np.mean(fracs)) if len(fracs) >= min_windows else math.nan)
        return np.array(out)

    def sampling_period(self, renewal_fraction: float = 0.75, pilot: int = 20000,
                        max_pilot: int = 2_000_000, min_windows: int = 10) -> int:
        """Smallest period after which, on average, ``renewal_fraction`` of the
        segments alive at the start of a period have died.

        Runs a pilot from the current state, doubling it until the criterion
        can be met with at least ``min_windows`` disjoint windows. Raises
        ChainFrozenError when the budget ``max_pilot`` is exhausted.
        """
        if not 0.0 < renewal_fraction < 1.0:
            raise ValueError("renewal_fraction must lie in (0, 1)")
        start = self.iteration
        length = 0
        target = max(int(pilot), min_windows)
        while True:
            self.run(target - length)
            length = target
            end = start + length
            pmax = length // min_windows
            if pmax >= 1:
                top = self.renewal_fraction_curve(start, end, [pmax], min_windows)[0]
                if not math.isnan(top) and top >= renewal_fraction:
                    lo, hi = 1, pmax  # invariant: hi satisfies the criterion
                    while lo < hi:
                        mid = (lo + hi) // 2
                        f = self.renewal_fraction_curve(start, end, [mid], min_windows)[0]
                        if not math.isnan(f) and f >= renewal_fraction:
                            hi = mid
                        else:
                            lo = mid + 1
                    log.info("sampling period %d from a pilot of %d iterations", hi, length)
                    return hi
            if length >= max_pilot:
                raise ChainFrozenError(
                    f"fewer than {renewal_fraction:.0%} of segments renewed within "
                    f"{length} pilot iterations")
            target = min(2 * length, max_pilot)

    def trace_rows(self):
        """(iteration, energy, nseint, nnbseint, nbseint, accepted_move_type) per step."""
        first = self.iteration - len(self.energy_trace) + 1
        for k in range(len(self.energy_trace)):
            yield (first + k, self.energy_trace[k], self.nseint_trace[k], self.nnb_trace[k],
                   self.nb_trace[k], MOVE_CODES[self.move_trace[k]])

    def clear_trace(self):
        for tr in (self.energy_trace, self.nseint_trace, self.nnb_trace, self.nb_trace, self.move_trace):
            del tr[:]


def step(chain: SmfChain) -> bool:
    return chain.step()


def run(chain: SmfChain, n_iterations: int):
    return chain.run(n_iterations)


def sampling_period(chain: SmfChain, renewal_fraction: float = 0.75, **kw) -> int:
    return chain.sampling_period(renewal_fraction, **kw)


def sample(chain: SmfChain, n_samples: int, burnin: int, period: int):
    return chain.sample(n_samples, burnin, period)
