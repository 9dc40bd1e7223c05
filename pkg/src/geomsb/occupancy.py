"""Expected number of occupied boxes, exact and Poissonized.

``E(K_n | p) = sum_j 1 - (1 - w_j)**n`` and ``Phi(t | p) = sum_j 1 - exp(-t w_j)``,
plus their averages over a prior on ``p``.

Everything is parameterized by ``tau = log(1/p)`` so that ``p`` close to one
(``tau`` below machine epsilon) stays accurate. For ``p >= SMALL_P`` the series
is summed directly with a certified truncation; for smaller ``p`` the sum over
the box index is replaced by its Euler-Maclaurin expansion, whose remainder is
controlled by powers of ``|log(1-p)|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from ._quadrature import graded_breaks, integrate, panel_rule
from .priors import SuccessPrior
from .weights import as_family, check_probability, tail_mass, weights_upto

SMALL_P = 0.02
# binomial terms with n w above this are 1 to double precision
SATURATION = 36.0
# Euler-Maclaurin panels in kappa = (k - 1)|log(1-p)|
_EM_PANEL = 0.5
# the Euler-Maclaurin integral stops where X w(k) / |log(1-p)| drops below this
_EM_TAIL = 1e-12
_DIRECT_CHUNK = 2**21
_PRIOR_RTOL = 1e-11


@dataclass(frozen=True)
class Kernel:
    """``binomial``: 1 - (1-w)**size; ``poisson``: 1 - exp(-size w)."""

    kind: str
    size: float

    def __post_init__(self):
        if self.kind not in ("binomial", "poisson"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if not self.size > 0:
            raise ValueError("sample size / Poisson time must be positive")

    def value(self, log_w):
        with np.errstate(divide="ignore", over="ignore"):
            w = np.exp(log_w)
            if self.kind == "poisson":
                return -np.expm1(-self.size * w)
            out = -np.expm1(self.size * np.log1p(-w))
            return np.where(self.size * w > SATURATION, 1.0, out)

    def y_derivatives(self, log_w):
        """First three derivatives of the kernel with respect to ``log w``."""
        X = self.size
        w = np.exp(log_w)
        if self.kind == "poisson":
            u = X * w
            e = np.exp(-u)
            return u * e, (u - u**2) * e, (u - 3 * u**2 + u**3) * e
        with np.errstate(divide="ignore", invalid="ignore"):
            l1 = np.log1p(-w)
            a1 = X * w * np.exp((X - 1.0) * l1)
            a2 = X * (X - 1.0) * w**2 * np.exp((X - 2.0) * l1)
            a3 = X * (X - 1.0) * (X - 2.0) * w**3 * np.exp((X - 3.0) * l1)
        a1, a2, a3 = (np.nan_to_num(a, nan=0.0) for a in (a1, a2, a3))
        return a1, a1 - a2, a1 - 3.0 * a2 + a3


def _check_n(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"sample size n must be a positive integer, got {n!r}")
    return int(n)


def _check_t(t) -> float:
    t = float(t)
    if not t > 0.0:
        raise ValueError(f"Poisson time t must be positive, got {t!r}")
    return t


def _check_eps(eps) -> float:
    eps = float(eps)
    if not 0.0 < eps <= 1e-3:
        raise ValueError(f"truncation tolerance must lie in (0, 1e-3], got {eps!r}")
    return eps


# ---------------------------------------------------------------------------
# closed-form scales in the tau coordinate
# ---------------------------------------------------------------------------


def _poly(s: int, p, k):
    """Polynomial factor P(k), its k-derivatives and the normalizer c of w_k."""
    if s == 2:
        one = np.ones_like(k)
        return one, 0.0 * k, 0.0 * k, 0.0 * k, 1.0
    if s == 3:
        return 1.0 + k * p, p + 0.0 * k, 0.0 * k, 0.0 * k, 2.0
    P = 2.0 + 2.0 * k * p + k * p**2 + k**2 * p**2
    return P, 2.0 * p + p**2 + 2.0 * k * p**2, 2.0 * p**2 + 0.0 * k, 0.0 * k, 6.0


def _log_q(tau):
    """``log(1 - e^-tau)`` accurate at both ends."""
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(tau > math.log(2.0), np.log1p(-np.exp(-tau)), np.log(-np.expm1(-tau)))


def _log_w(s: int, lp, lq, p, k):
    P = _poly(s, p, k)
    return lp + (k - 1.0) * lq + np.log(P[0]) - math.log(P[4])


def _tail_mass(s: int, lq, p, J):
    q_J = np.exp(J * lq)
    if s == 2:
        return q_J
    if s == 3:
        return q_J * (1.0 + J * p / 2.0)
    return q_J * (1.0 + 2.0 * J * p / 3.0 + J * (J + 1.0) * p**2 / 6.0)


def _direct_cutoff(s: int, X: float, eps: float, lp, lq, p):
    """Per-row J with ``X * sum_{j > J} w_j <= eps`` (ratio-bounded geometric tail)."""
    J = np.maximum(np.ceil(np.log(eps / X) / lq), 1.0)
    for _ in range(200):
        k1 = J + 1.0
        ratio = np.exp(lq) * _poly(s, p, k1 + 1.0)[0] / _poly(s, p, k1)[0]
        bound = X * np.exp(_log_w(s, lp, lq, p, k1)) / (1.0 - ratio)
        bad = ~((ratio < 1.0) & (bound <= eps))
        if not np.any(bad):
            return J.astype(np.int64)
        J = np.where(bad, np.ceil(1.25 * J) + 1.0, J)
    raise RuntimeError("truncation search did not converge")


def _direct_sum(kernel: Kernel, s: int, tau, eps: float):
    lp = -tau
    lq = _log_q(tau)
    p = np.exp(lp)
    J = _direct_cutoff(s, kernel.size, eps, lp, lq, p)
    out = np.empty_like(tau)
    # rows with similar J share a chunk
    order = np.argsort(J)
    start = 0
    while start < len(order):
        stop = start + 1
        while stop < len(order) and (stop - start + 1) * J[order[stop]] <= _DIRECT_CHUNK:
            stop += 1
        rows = order[start:stop]
        Jmax = int(J[rows].max())
        j = np.arange(1, Jmax + 1, dtype=float)[None, :]
        log_w = _log_w(s, lp[rows, None], lq[rows, None], p[rows, None], j)
        terms = kernel.value(log_w)
        terms = np.where(j <= J[rows, None], terms, 0.0)
        # beyond J the kernel is linear in w to within (X w)**2
        tail = kernel.size * _tail_mass(s, lq[rows], p[rows], J[rows].astype(float))
        out[rows] = terms[:, ::-1].sum(axis=1) + tail
        start = stop
    return out


def _em_sum(kernel: Kernel, s: int, tau):
    """Euler-Maclaurin evaluation of ``sum_{k >= 1} G(log w(k))`` for small p."""
    lp = -tau[:, None]
    lq = _log_q(tau)[:, None]
    p = np.exp(lp)
    a = -lq
    X = kernel.size
    c = _poly(s, p, np.ones_like(p))[4]
    # kappa_end solves X w / a = _EM_TAIL
    base = np.log(X / (c * _EM_TAIL)) + lp - np.log(a)
    kappa = np.maximum(base, 1.0)
    for _ in range(8):
        kappa = np.maximum(base + np.log(_poly(s, p, 1.0 + kappa / a)[0]), 1.0)
    k_end = float(np.ceil(kappa.max() / _EM_PANEL)) * _EM_PANEL
    nodes, weights = panel_rule(np.arange(0.0, k_end + 0.5 * _EM_PANEL, _EM_PANEL))
    k = 1.0 + nodes[None, :] / a
    g = kernel.value(_log_w(s, lp, lq, p, k))
    integral = (g @ weights[:, None]) / a
    # analytic tail beyond kappa_end, where the kernel is linear in w
    k_last = 1.0 + k_end / a
    P_last = _poly(s, p, k_last)
    slope = lq + P_last[1] / P_last[0]
    integral = integral + X * np.exp(_log_w(s, lp, lq, p, k_last)) / np.abs(slope)
    # boundary corrections at k = 1
    one = np.ones_like(p)
    P, P1, P2, P3, _ = _poly(s, p, one)
    L1 = P1 / P
    y1 = lq + L1
    y2 = P2 / P - L1**2
    y3 = P3 / P - 3.0 * P1 * P2 / P**2 + 2.0 * L1**3
    y0 = _log_w(s, lp, lq, p, one)
    G1, G2, G3 = kernel.y_derivatives(y0)
    g1 = G1 * y1
    g3 = G3 * y1**3 + 3.0 * G2 * y1 * y2 + G1 * y3
    total = integral + kernel.value(y0) / 2.0 - g1 / 12.0 + g3 / 720.0
    return total[:, 0]


def occupancy_tau(kernel: Kernel, family, tau, eps: float = 1e-10):
    """Vectorized ``sum_j kernel(w_j(e^-tau))`` over an array of ``tau = log(1/p)``."""
    family = as_family(family)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(~(tau > 0.0)) or np.any(~np.isfinite(tau)):
        raise ValueError("tau = log(1/p) must be positive and finite")
    out = np.empty_like(tau)
    if not family.closed_form:
        for i, ti in enumerate(tau):
            out[i] = _general_scale_sum(kernel, family, math.exp(-ti), eps)
        return out
    small = tau > -math.log(SMALL_P)
    if np.any(~small):
        out[~small] = _direct_sum(kernel, family.s, tau[~small], eps)
    if np.any(small):
        chunk = 512
        idx = np.flatnonzero(small)
        for i in range(0, len(idx), chunk):
            rows = idx[i:i + chunk]
            out[rows] = _em_sum(kernel, family.s, tau[rows])
    return out


def _general_scale_sum(kernel: Kernel, family, p: float, eps: float) -> float:
    J = max(1, int(math.ceil(math.log(eps / kernel.size) / math.log1p(-p))))
    while kernel.size * tail_mass(family, p, J) > eps:
        J = int(1.25 * J) + 1
    w = weights_upto(family, p, J)
    tail = kernel.size * tail_mass(family, p, J)
    return float(np.sum(kernel.value(np.log(w))[::-1])) + tail


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _given_p(kernel: Kernel, family, p, eps) -> float:
    p = check_probability(p)
    if np.ndim(p):
        raise ValueError("p must be a scalar")
    eps = _check_eps(eps)
    return float(occupancy_tau(kernel, family, -math.log(p), eps)[0])


def expected_Kn_given_p(family, p, n, eps: float = 1e-10) -> float:
    """``E(K_n | p) = sum_j 1 - (1 - w_j(p))**n`` with absolute error at most ``eps``."""
    value = _given_p(Kernel("binomial", _check_n(n)), family, p, eps)
    # a single draw occupies exactly one box; the sum only matches this to rounding
    return 1.0 if n == 1 else value


def phi_given_p(family, p, t, eps: float = 1e-10) -> float:
    """Poissonized mean ``sum_j 1 - exp(-t w_j(p))`` with absolute error at most ``eps``."""
    return _given_p(Kernel("poisson", _check_t(t)), family, p, eps)


def _prior_breaks(prior: SuccessPrior, upper: float) -> np.ndarray:
    # features of the integrand sit at tau ~ n**(-1/j) near zero; grade geometrically
    levels = 64
    if prior.shape != int(prior.shape):
        levels = max(levels, math.ceil(17.0 / (min(prior.shape, 1.0) * math.log10(2.0))) + 1)
    head = graded_breaks(0.0, min(1.0, upper), levels)
    if upper <= 1.0:
        return head
    body = np.linspace(1.0, upper, int(math.ceil(upper - 1.0)) + 1)
    return np.concatenate((head, body[1:]))


def _prior_average(kernel: Kernel, prior: SuccessPrior, family, eps: float) -> float:
    eps = _check_eps(eps)
    family = as_family(family)
    # the count lies between its value at tau = T and size for tau > T, so
    # charging the lower end leaves an error below size * P(tau > T) <= eps
    T = prior.log_cutoff(eps / kernel.size)
    beyond = float(gammaincc(prior.shape, T))
    tail = beyond * float(occupancy_tau(kernel, family, T, eps * 1e-2)[0])

    def integrand(tau):
        return occupancy_tau(kernel, family, tau, eps * 1e-2) * prior.density_t(tau) * np.exp(-tau)

    value, _ = integrate(integrand, _prior_breaks(prior, T), rtol=_PRIOR_RTOL, atol=eps)
    return value + tail


def expected_Kn(prior: SuccessPrior, family, n, eps: float = 1e-10) -> float:
    """Prior average of ``E(K_n | p)``; absolute error about ``2 eps``."""
    kernel = Kernel("binomial", _check_n(n))
    if n == 1:
        _check_eps(eps)
        as_family(family)
        return 1.0
    return _prior_average(kernel, prior, family, eps)


def phi(prior: SuccessPrior, family, t, eps: float = 1e-10) -> float:
    """Prior average of ``Phi(t | p)``; usable up to t ~ 1e16."""
    return _prior_average(Kernel("poisson", _check_t(t)), prior, family, eps)


@dataclass(frozen=True)
class PoissonizationGap:
    exact: float
    poissonized: float
    gap: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.gap <= self.bound


def poissonization_gap(prior_or_p, family, n, eps: float = 1e-10) -> PoissonizationGap:
    """``|E(K_n) - Phi(n)|`` next to the bound ``(2/n) Phi(n)``.

    ``prior_or_p`` is either a :class:`SuccessPrior` or a fixed success probability.
    """
    n = _check_n(n)
    if n < 2:
        raise ValueError("the Poissonization bound needs n >= 2")
    if isinstance(prior_or_p, SuccessPrior):
        exact = expected_Kn(prior_or_p, family, n, eps)
        poisson = phi(prior_or_p, family, float(n), eps)
    else:
        exact = expected_Kn_given_p(family, prior_or_p, n, eps)
        poisson = phi_given_p(family, prior_or_p, float(n), eps)
    return PoissonizationGap(exact, poisson, abs(exact - poisson), 2.0 / n * poisson)
