"""Decreasing frequency sequences of the geometric stick-breaking process.

The weights are ``w_j(p) = sum_{r >= j} phi(r; s, p) / r`` where ``phi`` is the
negative binomial pmf shifted to start at one. ``s = 2`` gives the geometric
sequence ``p (1 - p)**(j - 1)``; closed forms are used for ``s`` in {2, 3, 4}
and the defining tail sum for larger ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

CLOSED_FORM_SCALES = (2, 3, 4)

# relative size of the neglected remainder in truncated tail sums
_TAIL_RTOL = 1e-14
_CHUNK = 4096


@dataclass(frozen=True)
class WeightFamily:
    """Negative binomial scale ``s >= 2``; ``s = 2`` is the geometric process."""

    s: int = 2

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 2:
            raise ValueError(f"scale s must be an integer >= 2, got {self.s!r}")
        object.__setattr__(self, "s", int(self.s))

    @property
    def closed_form(self) -> bool:
        return self.s in CLOSED_FORM_SCALES


GEOMETRIC = WeightFamily(2)


def as_family(family) -> WeightFamily:
    if isinstance(family, WeightFamily):
        return family
    return WeightFamily(int(family))


def check_probability(p):
    """Validate a success probability strictly inside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError(f"success probability must lie in the open interval (0, 1), got {p!r}")
    return arr if arr.ndim else float(arr)


def _check_index(j, lowest=1, name="j"):
    arr = np.asarray(j)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.floor(arr) == arr):
            raise ValueError(f"{name} must be an integer")
        arr = arr.astype(np.int64)
    if np.any(arr < lowest):
        raise ValueError(f"{name} must be >= {lowest}")
    return arr


def _log_negbin(s: int, p, r):
    r = np.asarray(r, dtype=float)
    return (
        gammaln(r + s - 1.0) - gammaln(r) - gammaln(float(s))
        + s * np.log(p) + (r - 1.0) * np.log1p(-p)
    )


def negbin_pmf(s: int, p, r):
    """Shifted negative binomial pmf ``C(r+s-2, r-1) p**s (1-p)**(r-1)``, r >= 1."""
    as_family(s)
    p = check_probability(p)
    r = _check_index(r, 1, "r")
    return np.exp(_log_negbin(int(s), p, r))


def _closed_form_weight(s: int, p, j):
    j = np.asarray(j, dtype=float)
    q = 1.0 - p
    if np.all(1.0 - q == p):
        # q is exact, and pow keeps exact powers exact (ties w_j = x matter to counts)
        geo = p * np.power(q, j - 1.0)
    else:
        geo = p * np.exp((j - 1.0) * np.log1p(-p))
    if s == 2:
        return geo
    if s == 3:
        return geo * (1.0 + j * p) / 2.0
    return geo * (2.0 + 2.0 * j * p + j * p**2 + j**2 * p**2) / 6.0


def _tail_terms(s: int, p: float, start: int):
    """Yield chunks of ``phi(r)/r`` for r = start, start+1, ... in log space."""
    r0 = start
    while True:
        r = np.arange(r0, r0 + _CHUNK, dtype=float)
        yield r, np.exp(_log_negbin(s, p, r) - np.log(r))
        r0 += _CHUNK


def _remainder_bound(s: int, p: float, r_last: float, last_term: float) -> float:
    # term ratio q (r+s-1)/(r+1) decreases in r toward q
    ratio = (1.0 - p) * (r_last + s) / (r_last + 2.0)
    if ratio >= 1.0:
        return np.inf
    return last_term * ratio / (1.0 - ratio)


def _tail_sum_weight(s: int, p: float, j: int) -> float:
    total = 0.0
    for r, terms in _tail_terms(s, p, j):
        total += float(np.sum(terms[::-1]))
        bound = _remainder_bound(s, p, r[-1], terms[-1])
        if bound <= _TAIL_RTOL * total or (total == 0.0 and bound == 0.0):
            return total


def weight(family, p, j):
    """The j-th frequency ``w_j(p)``.

    Vectorizes over ``j`` (and over ``p`` for the closed-form scales).
    """
    family = as_family(family)
    p = check_probability(p)
    j = _check_index(j)
    if family.closed_form:
        return _closed_form_weight(family.s, p, j)
    if np.ndim(p):
        raise ValueError("array-valued p is supported only for s in {2, 3, 4}")
    if np.ndim(j) == 0:
        return _tail_sum_weight(family.s, p, int(j))
    return weights_upto(family, p, int(j.max()))[j - 1]


def weights_upto(family, p: float, J: int) -> np.ndarray:
    """Array ``[w_1(p), ..., w_J(p)]``."""
    family = as_family(family)
    p = check_probability(p)
    if J < 1:
        return np.empty(0)
    j = np.arange(1, J + 1)
    if family.closed_form:
        return _closed_form_weight(family.s, p, j)
    # w_j = w_{J+1} + sum_{r=j}^{J} phi(r)/r, accumulated from the top
    terms = np.exp(_log_negbin(family.s, p, j.astype(float)) - np.log(j))
    head = np.cumsum(terms[::-1])[::-1]
    return head + _tail_sum_weight(family.s, p, J + 1)


def tail_mass(family, p, J: int) -> float:
    """Mass beyond the first J weights, ``sum_{j > J} w_j(p)``.

    Closed forms for s in {2, 3, 4}; larger scales sum ``phi(r) (r - J) / r``
    with a ratio-bounded remainder.
    """
    family = as_family(family)
    p = check_probability(p)
    J = int(_check_index(J, 0, "J"))
    if J == 0:
        return 1.0
    q = 1.0 - p
    q_J = q**J if 1.0 - q == p else math.exp(J * math.log1p(-p))
    if family.s == 2:
        return q_J
    if family.s == 3:
        return q_J * (2.0 - p + (J + 1) * p) / 2.0
    if family.s == 4:
        return q_J * (1.0 + 2.0 * J * p / 3.0 + J * (J + 1) * p**2 / 6.0)
    # sum_{j>J} w_j = sum_{r>J} phi(r) (r - J) / r
    total = 0.0
    for r, terms in _tail_terms(family.s, p, J + 1):
        chunk = terms * (r - J)
        total += float(np.sum(chunk[::-1]))
        # successive-term ratio, decreasing in r for r > J
        rl = r[-1]
        ratio = (1.0 - p) * (rl + family.s - 1.0) / (rl + 1.0) * (rl + 1.0 - J) / (rl - J)
        if ratio < 1.0:
            bound = chunk[-1] * ratio / (1.0 - ratio)
            if bound <= _TAIL_RTOL * total or (total == 0.0 and bound == 0.0):
                return total


def log_weight_derivatives(family, p: float, k):
    """``log w(k)`` and its first three derivatives in a real index ``k >= 1``.

    Only defined for the closed-form scales, whose weights extend smoothly to
    real indices.
    """
    family = as_family(family)
    if not family.closed_form:
        raise ValueError("real-index extension requires s in {2, 3, 4}")
    k = np.asarray(k, dtype=float)
    log_q = np.log1p(-p)
    s = family.s
    if s == 2:
        y = np.log(p) + (k - 1.0) * log_q
        zero = np.zeros_like(k)
        return y, log_q + zero, zero, zero
    if s == 3:
        P, P1, P2, P3, c = 1.0 + k * p, p, 0.0, 0.0, 2.0
    else:
        P = 2.0 + 2.0 * k * p + k * p**2 + k**2 * p**2
        P1 = 2.0 * p + p**2 + 2.0 * k * p**2
        P2, P3, c = 2.0 * p**2, 0.0, 6.0
    L1 = P1 / P
    L2 = P2 / P - L1**2
    L3 = P3 / P - 3.0 * P1 * P2 / P**2 + 2.0 * L1**3
    y = np.log(p / c) + (k - 1.0) * log_q + np.log(P)
    return y, log_q + L1, L2 + 0.0 * k, L3 + 0.0 * k
