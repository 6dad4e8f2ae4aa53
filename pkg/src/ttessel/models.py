"""Exponential-family Gibbs models on T-tessellations.

A model is a list of statistic components plus a parameter vector; the
unnormalized density is exp(theta . t(T)). Signs live in the components
(``NegA2`` stores -a2), so every model is literally theta . t.
"""
from __future__ import annotations

import math

import numpy as np

from .tessellation import Flip, InvalidOperation, Merge, Split, TTessellation


class StatComponent:
    """One coordinate of the statistic vector.

    Subclasses give the full value and the increments for each operator.
    ``split_batch`` may return increments for a batch of kernel-evaluated
    dummy splits, or None when the component needs the slow path.
    Increments may be -inf to forbid a move.
    """

    name = "custom"

    def full(self, t: TTessellation) -> float:
        raise NotImplementedError

    def split(self, t: TTessellation, plan) -> float:
        raise NotImplementedError

    def merge(self, t: TTessellation, plan) -> float:
        raise NotImplementedError

    def flip(self, t: TTessellation, plan) -> float:
        raise NotImplementedError

    def split_batch(self, batch):
        return None

    def of_plan(self, t, plan) -> float:
        if plan.kind == "split":
            return self.split(t, plan)
        if plan.kind == "merge":
            return self.merge(t, plan)
        return self.flip(t, plan)


class NSegInt(StatComponent):
    """Number of internal segments."""

    name = "nseint"

    def full(self, t):
        return float(t.statistics_basic()[0])

    def split(self, t, plan):
        return 1.0

    def merge(self, t, plan):
        return -1.0

    def flip(self, t, plan):
        return 0.0

    def split_batch(self, batch):
        return np.ones(len(batch["area_a"]))


class NegA2(StatComponent):
    """Minus the sum of squared cell areas."""

    name = "-a2"

    def full(self, t):
        return -t.statistics_basic()[4]

    def split(self, t, plan):
        return -plan.delta.a2

    merge = split
    flip = split

    def split_batch(self, batch):
        a1 = batch["area_a"]
        a2 = batch["area_b"]
        return (a1 + a2) ** 2 - a1 * a1 - a2 * a2


class NegAngleSum(StatComponent):
    """Minus the sum over internal T-vertices of pi/2 minus the acute junction angle."""

    name = "-angle_sum"

    def full(self, t):
        return -t.statistics_basic()[5]

    def split(self, t, plan):
        return -plan.delta.angle_sum

    merge = split
    flip = split

    def split_batch(self, batch):
        return -(batch["angle_a"] + batch["angle_b"])


BUILTIN_MODELS = ("crtt", "area", "angle")


class ExponentialModel:
    def __init__(self, components, theta, name: str = "custom", hereditary: bool = True):
        self.components = list(components)
        theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
        if len(self.components) < 1:
            raise ValueError("a model needs at least one statistic component")
        if theta.shape != (len(self.components),):
            raise ValueError(f"theta has {theta.size} entries, model has {len(self.components)} statistics")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        self.theta = theta
        self.name = name
        self.hereditary = hereditary

    # built-ins ---------------------------------------------------------
    @classmethod
    def crtt(cls, theta=0.0):
        return cls([NSegInt()], [float(np.ravel([theta])[0])], "crtt")

    @classmethod
    def area(cls, theta=(0.0, 0.0)):
        return cls([NSegInt(), NegA2()], theta, "area")

    @classmethod
    def angle(cls, theta=(0.0, 0.0)):
        return cls([NSegInt(), NegAngleSum()], theta, "angle")

    @classmethod
    def from_config(cls, cfg):
        name = cfg.get("model")
        if name not in BUILTIN_MODELS:
            raise ValueError(f"unknown model {name!r}; expected one of {BUILTIN_MODELS}")
        theta = cfg.get("theta")
        if theta is None:
            theta = [0.0] if name == "crtt" else [0.0, 0.0]
        return getattr(cls, name)(theta)

    def to_config(self):
        return {"model": self.name, "theta": [float(x) for x in self.theta]}

    def with_theta(self, theta):
        return ExponentialModel(self.components, theta, self.name, self.hereditary)

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def starts_with_nseint(self) -> bool:
        return isinstance(self.components[0], NSegInt)

    def __repr__(self):
        return f"ExponentialModel({self.name}, theta={self.theta.tolist()})"

    # statistics --------------------------------------------------------
    def t(self, tess: TTessellation):
        return np.array([c.full(tess) for c in self.components])

    def energy(self, tess: TTessellation, theta=None) -> float:
        th = self.theta if theta is None else theta
        return float(np.dot(th, self.t(tess)))

    def increment_of_plan(self, tess, plan):
        return np.array([c.of_plan(tess, plan) for c in self.components])

    def increment(self, tess: TTessellation, op):
        """t(op T) - t(T) for a Split, Merge or Flip (or a plan)."""
        plan = op if hasattr(op, "kind") else tess.plan(op)
        if plan is None:
            raise InvalidOperation(f"{op!r} is degenerate on this tessellation")
        return self.increment_of_plan(tess, plan)

    def split_increments_batch(self, batch):
        cols = []
        for c in self.components:
            col = c.split_batch(batch)
            if col is None:
                return None
            cols.append(np.asarray(col, dtype=float))
        return np.column_stack(cols)

    def intensity(self, increment, theta=None) -> float:
        """exp(theta . increment), zero when a component forbids the move."""
        inc = np.asarray(increment, dtype=float)
        if np.any(inc == -np.inf):
            return 0.0
        th = self.theta if theta is None else theta
        return math.exp(float(np.dot(th, inc)))

    def papangelou_split(self, tess, s: Split) -> float:
        return self.intensity(self.increment(tess, s))

    def papangelou_merge(self, tess, m: Merge) -> float:
        return self.intensity(self.increment(tess, m))

    def papangelou_flip(self, tess, f: Flip) -> float:
        return self.intensity(self.increment(tess, f))


# functional spellings
def t(model: ExponentialModel, tess: TTessellation):
    return model.t(tess)


def increment(model: ExponentialModel, tess: TTessellation, op):
    return model.increment(tess, op)


def papangelou_split(model, tess, s):
    return model.papangelou_split(tess, s)


def papangelou_merge(model, tess, m):
    return model.papangelou_merge(tess, m)


def papangelou_flip(model, tess, f):
    return model.papangelou_flip(tess, f)
