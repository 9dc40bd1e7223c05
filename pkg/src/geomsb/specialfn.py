"""Special functions: the distribution function ``f``, its primitives, Lambert W.

``f(t) = exp(-t) / -log(1 - exp(-t))`` is a distribution function on the
positive half line with mean equal to the Euler-Mascheroni constant. Its
primitive ``F`` and the iterated primitives ``kF`` drive the tail-count
asymptotics of the geometric stick-breaking process.
"""

from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np

from ._quadrature import graded_breaks, panel_rule

EULER_GAMMA = 0.57721566490153286061
INV_E = math.exp(-1.0)

_SERIES_TERMS = 60
_SERIES_SWITCH = 0.25  # use the u = exp(-t) power series below this u
_SMALL_T = 1e-8
# beyond this, F(x) = x - gamma + tail is used: the quadrature's rounding
# (~1e-15) would otherwise swamp the O(exp(-x)) correction
_F_TABLE_MAX = 20
_GRADED_LEVELS = 60
_PANEL_ORDER = 20


class LambertBranch(enum.Enum):
    PRINCIPAL = 0
    MINUS_ONE = -1


class LambertDomainError(ValueError):
    """Argument outside the real domain of the requested Lambert W branch."""


class LambertConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# f(t) and 1 - f(t)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _one_minus_f_coefficients() -> np.ndarray:
    """Power series of ``1 - f`` in ``u = exp(-t)``: ``sum_k a_k u**k``, k >= 1."""
    n = _SERIES_TERMS + 1
    # with L = -log(1-u) = sum u^k/k:  1 - f = ((L - u)/u) / (L/u)
    num = np.array([0.0] + [1.0 / (j + 1) for j in range(1, n)])
    den = np.array([1.0 / (j + 1) for j in range(n)])
    out = np.zeros(n)
    for i in range(n):
        out[i] = (num[i] - np.dot(out[:i], den[i:0:-1])) / den[0]
    out.setflags(write=False)
    return out


def _horner(coef, u):
    acc = np.zeros_like(u)
    for c in coef[::-1]:
        acc = acc * u + c
    return acc


def _neg_log_one_minus_exp(t):
    """``-log(1 - exp(-t))`` without cancellation at either end."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = t < _SMALL_T
    big = t > math.log(2.0)
    mid = ~(small | big)
    out[small] = -np.log(t[small]) + 0.5 * t[small]
    out[mid] = -np.log(-np.expm1(-t[mid]))
    out[big] = -np.log1p(-np.exp(-t[big]))
    return out


def _check_positive(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0.0)):
        raise ValueError(f"{name} must be positive")
    return arr


def one_minus_f(t):
    """``1 - f(t)``, accurate where ``f`` is close to one."""
    t = _check_positive(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    u = np.exp(-t)
    out = np.empty_like(t)
    tail = u < _SERIES_SWITCH
    coef = _one_minus_f_coefficients()
    out[tail] = u[tail] * _horner(coef[1:], u[tail])
    head = ~tail
    out[head] = 1.0 - u[head] / _neg_log_one_minus_exp(t[head])
    return float(out[0]) if scalar else out


def f_t(t):
    """``f(t) = exp(-t) / -log(1 - exp(-t))`` for t > 0; values lie in (0, 1)."""
    t = _check_positive(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    u = np.exp(-t)
    out = np.empty_like(t)
    tail = u < _SERIES_SWITCH
    out[tail] = 1.0 - one_minus_f(t[tail])
    head = ~tail
    out[head] = u[head] / _neg_log_one_minus_exp(t[head])
    return float(out[0]) if scalar else out


def _f_safe(t):
    # quadrature nodes never sit at 0, but graded panels can come close
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = f_t(t[pos])
    return out


def tail_integral_one_minus_f(x):
    """``int_x^inf (1 - f(t)) dt`` from the termwise-integrated power series (x >= 1)."""
    x = np.asarray(x, dtype=float)
    coef = _one_minus_f_coefficients()
    k = np.arange(len(coef), dtype=float)
    k[0] = 1.0
    u = np.exp(-x)
    return u * _horner(coef[1:] / k[1:], u)


# ---------------------------------------------------------------------------
# F and its fractional integrals
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _unit_graded_rule(levels: int):
    nodes, weights = panel_rule(graded_breaks(0.0, 1.0, levels), _PANEL_ORDER)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _graded_rule(x: float, levels: int = _GRADED_LEVELS):
    """Nodes/weights on [0, x]: geometric panels near 0, unit panels after 1."""
    if x <= 1.0:
        nodes, weights = _unit_graded_rule(levels)
        return x * nodes, x * weights
    else:
        m = int(math.ceil(x))
        head = graded_breaks(0.0, 1.0, levels)
        body = np.linspace(1.0, x, m)
        breaks = np.concatenate((head, body[1:]))
    return panel_rule(breaks, _PANEL_ORDER)


def _integrate_f_from_zero(x: float) -> float:
    if x == 0.0:
        return 0.0
    nodes, weights = _graded_rule(x)
    return float(np.dot(weights, _f_safe(nodes)))


@lru_cache(maxsize=1)
def _F_table() -> np.ndarray:
    """``F`` at the integers 0.._F_TABLE_MAX, accumulated panel by panel."""
    table = np.zeros(_F_TABLE_MAX + 1)
    table[1] = _integrate_f_from_zero(1.0)
    nodes, weights = panel_rule(np.array([0.0, 1.0]), _PANEL_ORDER)
    for k in range(1, _F_TABLE_MAX):
        table[k + 1] = table[k] + float(np.dot(weights, _f_safe(nodes + k)))
    table.setflags(write=False)
    return table


def F_cap(x):
    """Primitive ``F(x) = int_0^x f(s) ds`` for x >= 0.

    Cached unit-panel quadrature on [0, 20]; beyond that
    ``F(x) = x - gamma + int_x^inf (1 - f)`` with the series tail.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)):
        raise ValueError("x must be nonnegative")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    table = _F_table()
    far = arr >= _F_TABLE_MAX
    out[far] = arr[far] - EULER_GAMMA + tail_integral_one_minus_f(arr[far])
    below_one = arr < 1.0
    if np.any(below_one):
        xs = arr[below_one]
        ref, w = _unit_graded_rule(_GRADED_LEVELS)
        vals = np.empty_like(xs)
        for i in range(0, len(xs), 2048):
            chunk = xs[i:i + 2048, None]
            vals[i:i + 2048] = chunk[:, 0] * (_f_safe(chunk * ref[None, :]) @ w)
        out[below_one] = vals
    rest = ~(far | below_one)
    if np.any(rest):
        xs = arr[rest]
        k = np.floor(xs)
        ref, w = panel_rule(np.array([0.0, 1.0]), _PANEL_ORDER)
        span = (xs - k)[:, None]
        nodes = k[:, None] + span * ref[None, :]
        out[rest] = table[k.astype(int)] + span[:, 0] * (_f_safe(nodes) @ w)
    return float(out[0]) if scalar else out


def fractional_integral_F(k: int, x, method: str = "cauchy"):
    """Iterated primitive ``kF(x)``; ``0F = F``.

    ``method="cauchy"`` evaluates ``int_0^x (x - t)**k f(t) dt / k!``;
    ``method="iterated"`` integrates ``(k-1)F`` numerically, recursively down to
    ``F``. The iterated route costs O(nodes**k) and is meant for k <= 2.
    """
    if int(k) != k or k < 0:
        raise ValueError("order k must be a nonnegative integer")
    k = int(k)
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)):
        raise ValueError("x must be nonnegative")
    if k == 0:
        return F_cap(x)
    if method == "cauchy":
        fn = _cauchy_fractional
    elif method == "iterated":
        fn = _iterated_fractional
    else:
        raise ValueError(f"unknown method {method!r}")
    if arr.ndim == 0:
        return fn(k, float(arr))
    return np.array([fn(k, float(v)) for v in arr.ravel()]).reshape(arr.shape)


def _cauchy_fractional(k: int, x: float) -> float:
    if x == 0.0:
        return 0.0
    nodes, weights = _graded_rule(x)
    vals = (x - nodes) ** k * _f_safe(nodes)
    return float(np.dot(weights, vals)) / math.factorial(k)


def _iterated_fractional(k: int, x: float) -> float:
    return float(_iterated_values(k, np.array([x]))[0])


def _iterated_values(k: int, xs: np.ndarray) -> np.ndarray:
    """``kF`` at every point of ``xs`` by cumulative quadrature of ``(k-1)F``."""
    if k == 0:
        return F_cap(xs)
    top = max(float(xs.max()), 1.0)
    # F(t) ~ t / log(1/t) near 0, so a shallow grading suffices
    breaks = np.concatenate((graded_breaks(0.0, 1.0, 30), np.arange(2.0, math.ceil(top) + 1.0)))
    ref, w = panel_rule(np.array([0.0, 1.0]), _PANEL_ORDER)
    lo, width = breaks[:-1], np.diff(breaks)
    full_nodes = lo[:, None] + width[:, None] * ref[None, :]
    idx = np.clip(np.searchsorted(breaks, xs, side="right") - 1, 0, len(lo) - 1)
    start = breaks[idx]
    part_nodes = start[:, None] + (xs - start)[:, None] * ref[None, :]
    vals = _iterated_values(k - 1, np.concatenate((full_nodes.ravel(), part_nodes.ravel())))
    n_full = full_nodes.size
    panel_sums = width * (vals[:n_full].reshape(full_nodes.shape) @ w)
    cumulative = np.concatenate(([0.0], np.cumsum(panel_sums)))
    partial = (xs - start) * (vals[n_full:].reshape(part_nodes.shape) @ w)
    return cumulative[idx] + partial


def moment_integral(m: int, x: float) -> float:
    """``int_0^x t**m f(t) dt / m!``."""
    if x == 0.0:
        return 0.0
    nodes, weights = _graded_rule(x)
    return float(np.dot(weights, nodes**m * _f_safe(nodes))) / math.factorial(m)


# ---------------------------------------------------------------------------
# Lambert W on the real line
# ---------------------------------------------------------------------------

_HALLEY_TOL = 1e-13
_HALLEY_MAXITER = 50
_BRANCH_EPS = 4 * np.finfo(float).eps


def _branch_point_series(z, sign):
    # W = -1 + sign*eta - eta^2/3 + sign*11/72 eta^3 - 43/540 eta^4, eta = sqrt(2(1 + e z))
    eta = np.sqrt(np.maximum(2.0 * (1.0 + math.e * z), 0.0))
    return -1.0 + sign * eta - eta**2 / 3.0 + sign * 11.0 / 72.0 * eta**3 - 43.0 / 540.0 * eta**4


def _initial_guess(branch: LambertBranch, z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _initial_guess_unchecked(branch, z)


def _initial_guess_unchecked(branch: LambertBranch, z: np.ndarray) -> np.ndarray:
    near = 1.0 + math.e * z < 0.5
    if branch is LambertBranch.MINUS_ONE:
        lz = np.log(-z)
        far = lz - np.log(-lz)
        return np.where(near, _branch_point_series(z, -1.0), far)
    big = z > math.e
    lz = np.log(np.where(big, z, math.e))
    asym = lz - np.log(lz)
    mid = np.log1p(np.maximum(z, -0.3)) * 0.8
    guess = np.where(big, asym, mid)
    return np.where(near, _branch_point_series(z, 1.0), guess)


def _halley(w, z):
    for _ in range(_HALLEY_MAXITER):
        ew = np.exp(w)
        fw = w * ew - z
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * fw / (2.0 * np.where(wp1 == 0.0, 1e-300, wp1))
        step = np.where(denom == 0.0, 0.0, fw / np.where(denom == 0.0, 1.0, denom))
        w = w - step
        if np.all(np.abs(step) <= _HALLEY_TOL * np.maximum(np.abs(w), 1e-300)):
            break
    return w


def _bisect_wm1(z: float) -> float:
    # w e^w is decreasing on (-inf, -1]
    lo = -1.0
    hi = -1.0
    while hi * math.exp(hi) > z:
        hi *= 2.0
    a, b = hi, lo
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid * math.exp(mid) > z:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _bisect_w0(z: float) -> float:
    # w e^w is increasing on [-1, inf)
    a, b = -1.0, max(1.0, math.log1p(z) if z > 0 else 0.0)
    while b * math.exp(b) < z:
        b *= 2.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid * math.exp(mid) < z:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def lambert_w(branch, z):
    """Real Lambert W: solves ``w * exp(w) = z`` on the requested branch.

    ``PRINCIPAL`` is defined for z >= -1/e with w >= -1; ``MINUS_ONE`` for
    -1/e <= z < 0 with w <= -1. Halley iteration from branch-specific starting
    values, with a bisection fallback for points where Halley stalls.
    """
    branch = LambertBranch(branch) if not isinstance(branch, LambertBranch) else branch
    arr = np.asarray(z, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(np.isnan(arr)):
        raise LambertDomainError("z is NaN")
    at_bp = np.abs(arr + INV_E) <= _BRANCH_EPS
    if np.any((arr < -INV_E) & ~at_bp):
        raise LambertDomainError("z < -1/e is outside the real domain")
    if branch is LambertBranch.MINUS_ONE and np.any(arr >= 0.0):
        raise LambertDomainError("the W_-1 branch requires -1/e <= z < 0")
    out = np.empty_like(arr)
    out[at_bp] = -1.0
    work = ~at_bp
    if branch is LambertBranch.PRINCIPAL:
        zero = arr == 0.0
        out[zero] = 0.0
        work &= ~zero
    zw = arr[work]
    w = _halley(_initial_guess(branch, zw), zw)
    defect = np.abs(w * np.exp(w) - zw)
    bad = ~(defect <= 1e-12 * np.maximum(np.abs(zw), 1e-300))
    if branch is LambertBranch.MINUS_ONE:
        bad |= w > -1.0
    else:
        bad |= w < -1.0
    for i in np.flatnonzero(bad):
        fallback = _bisect_wm1 if branch is LambertBranch.MINUS_ONE else _bisect_w0
        w[i] = _halley(np.array([fallback(float(zw[i]))]), np.array([zw[i]]))[0]
        if not abs(w[i] * math.exp(w[i]) - zw[i]) <= 1e-12 * max(abs(zw[i]), 1e-300) * 10:
            raise LambertConvergenceError(f"Lambert W failed to converge at z={zw[i]!r}")
    out[work] = w
    return float(out[0]) if scalar else out


def lambert_wm1_two_term(z):
    """Two-term asymptote ``log(-z) - log(-log(-z))`` of ``W_-1`` as z -> 0-.

    A comparator only; it is O(1) off near the branch point.
    """
    arr = np.asarray(z, dtype=float)
    if np.any(~((arr > -INV_E) & (arr < 0.0))):
        raise LambertDomainError("two-term asymptote requires -1/e < z < 0")
    lz = np.log(-arr)
    out = lz - np.log(-lz)
    return float(out) if out.ndim == 0 else out
