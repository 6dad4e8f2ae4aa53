"""Extended Kullback-Leibler divergence between finite non-negative measures."""
from __future__ import annotations

import math

import numpy as np


class FiniteMeasure:
    """Non-negative weights on a finite list of atoms."""

    def __init__(self, weights, support=None):
        w = np.asarray(weights, dtype=float).ravel()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        self.weights = w
        self.support = list(range(len(w))) if support is None else list(support)
        if len(self.support) != len(w):
            raise ValueError("support and weights differ in length")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        _aligned(self, other)
        return FiniteMeasure(self.weights + other.weights, self.support)


def _aligned(a, b):
    if a.support != b.support:
        raise ValueError("measures must share the same support indexing")


def _weights(m):
    return m.weights if isinstance(m, FiniteMeasure) else FiniteMeasure(m).weights


def extended_kl(alpha, beta) -> float:
    """sum_z beta_z (r log r + 1 - r), r = alpha_z / beta_z; +inf without domination."""
    if isinstance(alpha, FiniteMeasure) and isinstance(beta, FiniteMeasure):
        _aligned(alpha, beta)
    a = _weights(alpha)
    b = _weights(beta)
    if a.shape != b.shape:
        raise ValueError("measures must share the same support")
    if np.any((b == 0) & (a > 0)):
        return math.inf
    pos = b > 0
    a, b = a[pos], b[pos]
    # beta (r log r + 1 - r) = a log(a/b) + b - a, with 0 log 0 = 0
    # log a - log b rather than log(a / b): the ratio underflows for subnormal a
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogy = np.where(a > 0, a * (np.log(a) - np.log(b)), 0.0)
    return float(np.sum(xlogy + b - a))


def check_shift_lemma(alpha, beta, gamma):
    """(D(alpha, beta), D(alpha+gamma, beta+gamma), lhs >= rhs up to rounding).

    The rounding allowance is relative: 1e-12 * max(1, rhs).
    """
    a, b, g = _weights(alpha), _weights(beta), _weights(gamma)
    lhs = extended_kl(a, b)
    rhs = extended_kl(a + g, b + g)
    if math.isinf(rhs):
        return lhs, rhs, math.isinf(lhs)
    return lhs, rhs, bool(lhs >= rhs - 1e-12 * max(1.0, abs(rhs)))
