"""Tail counts: how many weights are at least ``x``.

``nu_arrow_given_p`` counts ``#{j : w_j(p) >= x}`` for a fixed ``p``;
``nu_arrow`` averages that count over a prior on ``p``; ``m_of_x`` is the
smooth surrogate obtained by dropping the integer part, so that
``m(x) <= nu_arrow(x) <= m(x) + 1``.

For ``s = 3`` the inverse of ``m -> w_{m+1}(p)`` is available through the
``W_-1`` branch of the Lambert function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import specialfn
from ._quadrature import graded_breaks, integrate
from .priors import SuccessPrior
from .specialfn import INV_E, LambertBranch, lambert_w
from .weights import as_family, check_probability, weight, weights_upto

# cap on the number of exactly-integrated level sets in nu_arrow
LEVEL_CAP = 2**17
_SCAN_CHUNK = 4096
_ITER_TOL = 1e-15
_ITER_MAX = 500
# log(-z) below this underflows exp(); switch to the fixed-point scheme
_LOG_Z_FLOOR = -700.0


class TailMethod(enum.Enum):
    CLOSED_FORM = "closed_form"
    LAMBERT_W = "lambert_w"
    SCAN = "scan"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class TailCount:
    value: float
    method: TailMethod


def _check_threshold(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError(f"threshold x must lie in (0, 1), got {x!r}")
    return arr if arr.ndim else float(arr)


def x_tilde(x):
    """Root of ``w_1(p) = p (1 + p) / 2 = x`` for s = 3 (exact quadratic formula)."""
    x = np.asarray(x, dtype=float)
    out = 4.0 * x / (1.0 + np.sqrt(1.0 + 8.0 * x))
    return out if out.ndim else float(out)


def support_lower(family, x) -> float:
    """Smallest p with ``w_1(p) >= x``."""
    family = as_family(family)
    if family.s == 2:
        return x
    if family.s == 3:
        return x_tilde(x)
    raise ValueError("support_lower is implemented for s in {2, 3}")


# ---------------------------------------------------------------------------
# counts for a fixed p
# ---------------------------------------------------------------------------


def nu_arrow_scan(family, p: float, x: float) -> int:
    """Linear scan ``#{j : w_j(p) >= x}``; authoritative oracle for the closed forms."""
    family = as_family(family)
    p = check_probability(p)
    x = _check_threshold(x)
    count = 0
    start = 1
    while True:
        w = weights_upto(family, p, start + _SCAN_CHUNK - 1)[start - 1:]
        below = np.flatnonzero(w < x)
        if below.size:
            return count + int(below[0])
        count += len(w)
        start += _SCAN_CHUNK


def _reconcile(family, p: float, x: float, guess: int) -> int:
    """Adjust a floor-formula count so that ``w_c >= x > w_{c+1}`` holds exactly."""
    c = max(int(guess), 0)
    while c > 0 and weight(family, p, c) < x:
        c -= 1
    while weight(family, p, c + 1) >= x:
        c += 1
    return c


def nu_arrow_given_p(family, p, x) -> int:
    """Number of weights ``w_j(p) >= x``.

    s = 2 uses ``floor(log(x/p)/log(1-p) + 1)``, s = 3 uses
    ``floor(m(x, p) + 1)``; other scales fall back to the scan. Floor results are
    reconciled against direct weight comparisons, which settles exact ties
    ``w_j(p) = x`` on the side of counting them.
    """
    family = as_family(family)
    p = check_probability(p)
    x = _check_threshold(x)
    if weight(family, p, 1) < x:
        return 0
    if family.s == 2:
        guess = math.floor(math.log(x / p) / math.log1p(-p) + 1.0)
    elif family.s == 3:
        guess = math.floor(m_given_p_s3(x, p) + 1.0)
    else:
        return nu_arrow_scan(family, p, x)
    return _reconcile(family, p, x, guess)


def tail_count(family, p, x) -> TailCount:
    family = as_family(family)
    method = {2: TailMethod.CLOSED_FORM, 3: TailMethod.LAMBERT_W}.get(family.s, TailMethod.SCAN)
    return TailCount(float(nu_arrow_given_p(family, p, x)), method)


def nu_arrow_given_p_array(family, p, x: float) -> np.ndarray:
    """Vectorized floor-formula counts over an array of p (no reconciliation)."""
    family = as_family(family)
    p = np.asarray(check_probability(p), dtype=float)
    w1 = weight(family, p, 1)
    if family.s == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.log(x / p) / np.log1p(-p)
    elif family.s == 3:
        g = _m_s3(x, p)
    else:
        raise ValueError("vectorized counts are implemented for s in {2, 3}")
    return np.where(w1 >= x, np.floor(g + 1.0), 0.0)


# ---------------------------------------------------------------------------
# s = 3 inversion
# ---------------------------------------------------------------------------


def _check_s3_precondition(x, p):
    w1 = p * (1.0 + p) / 2.0
    if np.any(w1 < x):
        raise ValueError("no nonnegative solution: w_1(p) < x")


def lambert_argument(x, p):
    """``z = (2 x log(1-p) / p**2) exp((1+p)/p log(1-p))`` and ``log(-z)``."""
    p = np.asarray(p, dtype=float)
    log_q = np.log1p(-p)
    log_mz = np.log(2.0 * x) + np.log(-log_q) - 2.0 * np.log(p) + (1.0 + p) / p * log_q
    return -np.exp(log_mz), log_mz


def _fixed_point_s3(x, p, m0, tol=_ITER_TOL, maxiter=_ITER_MAX):
    p = np.asarray(p, dtype=float)
    log_q = np.log1p(-p)
    m1 = np.log(x / p) / log_q
    m = np.asarray(m0, dtype=float)
    for _ in range(maxiter):
        new = m1 - np.log(0.5 * (1.0 + p + p * m)) / log_q
        done = np.all(np.abs(new - m) <= tol * np.maximum(1.0, np.abs(new)))
        m = new
        if done:
            break
    return m


def _m_s3(x, p):
    """Vectorized inverse of ``w_{m+1}(p) = x`` (s = 3), no precondition check."""
    p = np.asarray(p, dtype=float)
    log_q = np.log1p(-p)
    z, log_mz = lambert_argument(x, p)
    ok = log_mz > _LOG_Z_FLOOR
    m = np.empty_like(p)
    if np.any(ok):
        zz = np.maximum(z[ok], -INV_E)
        W = lambert_w(LambertBranch.MINUS_ONE, zz)
        pk, lq = p[ok], log_q[ok]
        A = (1.0 + pk) / pk * lq
        delta = W - A
        # one Newton step on log(-(A + delta)) + delta = log(-c), c = 2x log(1-p)/p^2,
        # removes the cancellation in W - A for small p
        log_mc = np.log(2.0 * x) + np.log(-lq) - 2.0 * np.log(pk)
        resid = np.log(-(A + delta)) + delta - log_mc
        delta = delta - resid / (1.0 + 1.0 / (A + delta))
        m[ok] = delta / lq
    if np.any(~ok):
        pk = p[~ok]
        m[~ok] = _fixed_point_s3(x, pk, np.log(x / pk) / np.log1p(-pk))
    return np.maximum(m, 0.0)


def m_given_p_s3(x, p):
    """Real ``m >= 0`` with ``p (1-p)**m (1 + p + p m) / 2 = x`` (s = 3).

    Solved through ``W_-1``; when ``z`` underflows the fixed-point scheme
    ``m <- log(x/p)/log(1-p) - log((1+p+pm)/2)/log(1-p)`` is iterated in log
    space instead.
    """
    x = _check_threshold(x)
    p = check_probability(p)
    _check_s3_precondition(x, p)
    m = _m_s3(x, np.atleast_1d(p))
    return m if np.ndim(p) else float(m[0])


def m_iterative_s3(x, p, k: int):
    """k-th iterate ``m_(k)`` of the fixed-point scheme, ``m_(1) = log(x/p)/log(1-p)``."""
    x = _check_threshold(x)
    p = check_probability(p)
    _check_s3_precondition(x, p)
    if k < 1:
        raise ValueError("iteration count k must be >= 1")
    log_q = np.log1p(-np.asarray(p, dtype=float))
    m1 = np.log(x / np.asarray(p)) / log_q
    m = m1
    for _ in range(k - 1):
        m = m1 - np.log(0.5 * (1.0 + p + p * m)) / log_q
    return m if np.ndim(m) else float(m)


# ---------------------------------------------------------------------------
# prior averages
# ---------------------------------------------------------------------------


def _argmax_p(s: int, j: np.ndarray) -> np.ndarray:
    j = j.astype(float)
    if s == 2:
        return 1.0 / j
    return (j + np.sqrt(5.0 * j**2 + 4.0 * j)) / (2.0 * j * (j + 1.0))


def _log_w(s: int, p, j):
    out = np.log(p) + (j - 1.0) * np.log1p(-p)
    if s == 3:
        out = out + np.log1p(j * p) - math.log(2.0)
    return out


def _max_level(s: int, x: float) -> int:
    """Largest j whose weight reaches x for some p."""
    def reaches(j):
        jj = np.array([float(j)])
        return _log_w(s, _argmax_p(s, jj), jj)[0] >= math.log(x)

    lo, hi = 1, 2
    while reaches(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reaches(mid):
            lo = mid
        else:
            hi = mid
    return lo


def level_intervals(s: int, x: float, j: np.ndarray, iters: int = 80):
    """Endpoints ``a_j <= b_j`` of ``{p : w_j(p) >= x}`` for j >= 2 (vectorized bisection)."""
    j = np.asarray(j, dtype=float)
    log_x = math.log(x)
    pstar = _argmax_p(s, j)
    # left root in log p on [log x, log p*]
    lo = np.full_like(j, log_x)
    hi = np.log(pstar)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = _log_w(s, np.exp(mid), j) >= log_x
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    a = np.exp(hi)
    # right root in log(1-p) on [log(x/(j+1)), log(1-p*)]
    lo = np.full_like(j, log_x) - np.log(j + 1.0)
    hi = np.log1p(-pstar)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = _log_w(s, -np.expm1(mid), j) >= log_x
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    b = -np.expm1(hi)
    return a, b


def _g_of_p(s: int, x: float, p):
    if s == 2:
        return np.log(x / p) / np.log1p(-p)
    return _m_s3(x, p)


def nu_arrow(prior: SuccessPrior, family, x: float, level_cap: int = LEVEL_CAP) -> float:
    """Prior average ``int nu_arrow(x, p) pi(p) dp`` for s in {2, 3}.

    The count is a step function of ``p``, so it is integrated exactly as
    ``sum_j Pi({p : w_j(p) >= x})``; each level set is an interval because
    ``w_j`` is unimodal in ``p``. Levels beyond ``level_cap`` live on a short
    interval near ``p ~ x`` where the count is replaced by its sawtooth mean
    ``m(x, p) + 1/2``.
    """
    family = as_family(family)
    if family.s not in (2, 3):
        raise ValueError("prior-averaged tail count supports s in {2, 3}")
    x = _check_threshold(x)
    s = family.s
    lower = support_lower(family, x)
    if lower >= 1.0:
        return 0.0
    total = float(prior.mass_between(lower, 1.0))
    j_max = _max_level(s, x)
    J0 = min(j_max, level_cap)
    if J0 >= 2:
        j = np.arange(2, J0 + 1, dtype=float)
        a, b = level_intervals(s, x, j)
        total += float(np.sum(prior.mass_between(a, b)[::-1]))
    if j_max > J0:
        a, b = level_intervals(s, x, np.array([J0 + 1.0]))
        ta, tb = -math.log(b[0]), -math.log(a[0])

        def integrand(t):
            p = np.exp(-t)
            extra = np.maximum(_g_of_p(s, x, p) + 0.5 - J0, 0.0)
            return extra * prior.density_t(t) * p

        breaks = np.linspace(tb, ta, 9)[::-1] if tb < ta else np.array([tb, ta])
        value, _ = integrate(integrand, np.sort(breaks), rtol=1e-10)
        total += value
    return total


def _m_s2_integrand(prior: SuccessPrior, L: float):
    def g(t):
        return (L - t) * prior.density_t(t) * specialfn._f_safe(t)
    return g


def _log_breaks(upper: float, levels: int = 60) -> np.ndarray:
    if upper <= 1.0:
        return graded_breaks(0.0, upper, levels)
    head = graded_breaks(0.0, 1.0, levels)
    body = np.linspace(1.0, upper, int(math.ceil(upper)))
    return np.concatenate((head, body[1:]))


def m_of_x(prior: SuccessPrior, family, x: float, rtol: float = 1e-10) -> float:
    """Smooth surrogate ``m(x)`` with ``m(x) <= nu_arrow(x) <= m(x) + 1``.

    s = 2: ``int_0^{log 1/x} (log(1/x) - t) pi(e^-t) f(t) dt``.
    s = 3: ``int_{x~}^1 m(x, p) pi(p) dp`` with ``m(x, p)`` from the Lambert path.
    """
    family = as_family(family)
    x = _check_threshold(x)
    if family.s == 2:
        L = -math.log(x)
        value, _ = integrate(_m_s2_integrand(prior, L), _log_breaks(L), order=20, rtol=rtol)
        return value
    if family.s == 3:
        upper = -math.log(x_tilde(x))

        def g(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            inside = (t > 0.0) & (t < upper)
            p = np.exp(-t[inside])
            out[inside] = _m_s3(x, p) * prior.density_t(t[inside]) * p
            return out

        # p = exp(-t) must stay below 1 in floating point
        value, _ = integrate(g, _log_breaks(upper, 36), order=20, rtol=rtol)
        return value
    raise ValueError("m_of_x supports s in {2, 3}")
