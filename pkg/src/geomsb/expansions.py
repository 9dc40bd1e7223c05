"""Two-term asymptotic expansions of tail counts and expected occupancy.

Each ``expand_*`` function returns an :class:`ExpansionReport` holding the
labelled expansion terms, a numerically exact reference value and the
residual scaled by the order of the first neglected term. Exactly one of
``n`` (fixed sample size, reference ``E(K_n)``), ``t`` (Poisson time,
reference ``Phi(t)``) or ``x`` (threshold, reference ``nu_arrow(x)``) is
given.

Second-order corrections for ``E(K_n)`` carry two labelled parts: the
``-gamma L`` type term of the tail count and the Tauberian correction
``-c gamma ell(1/n)``. They are reported separately so cancellations are
visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._quadrature import graded_breaks, integrate
from .occupancy import expected_Kn, expected_Kn_given_p, phi
from .priors import LogGamma, LogGammaRho, SuccessPrior, Uniform
from .specialfn import EULER_GAMMA, INV_E, _f_safe
from .tail_measure import nu_arrow, nu_arrow_given_p
from .weights import check_probability

DEFAULT_EPS = 1e-10
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class ExpansionReport:
    """One evaluation of an expansion against its reference value.

    ``normalized_residual`` is ``residual / scale`` with ``scale`` the order
    of the neglected remainder (``o(scale)`` or ``O(scale)``).
    """

    name: str
    argument_kind: str
    argument: float
    terms: tuple[tuple[str, float], ...]
    reference: float
    reference_method: str
    scale: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def predicted_total(self) -> float:
        return math.fsum(v for _, v in self.terms)

    @property
    def residual(self) -> float:
        return self.reference - self.predicted_total

    @property
    def normalized_residual(self) -> float:
        return self.residual / self.scale

    @property
    def ratio(self) -> float:
        """``reference / predicted_total``."""
        return self.reference / self.predicted_total

    def term(self, label: str) -> float:
        for name, value in self.terms:
            if name == label:
                return value
        raise KeyError(label)


def _one_argument(n, t, x) -> tuple[str, float]:
    given = [(k, v) for k, v in (("n", n), ("t", t), ("x", x)) if v is not None]
    if len(given) != 1:
        raise ValueError("give exactly one of n, t or x")
    return given[0]


def _log_argument(kind: str, value: float, lower_n: float = 3.0) -> float:
    """``L = log n``, ``log t`` or ``log(1/x)`` after domain checks."""
    if kind == "x":
        if not 0.0 < value < INV_E:
            raise ValueError(f"x must lie in (0, 1/e), got {value!r}")
        return -math.log(value)
    if kind == "n" and (int(value) != value or value < lower_n):
        raise ValueError(f"n must be an integer >= {lower_n:g}, got {value!r}")
    if kind == "t" and not value >= lower_n:
        raise ValueError(f"t must be >= {lower_n:g}, got {value!r}")
    return math.log(value)


def _occupancy_reference(prior: SuccessPrior, s: int, kind: str, value: float, eps: float):
    if kind == "n":
        return expected_Kn(prior, s, int(value), eps), "expected_Kn"
    return phi(prior, s, float(value), eps), "phi"


def _tail_reference(prior: SuccessPrior, s: int, x: float):
    return nu_arrow(prior, s, x), "nu_arrow"


# ---------------------------------------------------------------------------
# fixed p
# ---------------------------------------------------------------------------


def fixed_p_floor_term(p: float, n: int) -> int:
    """``floor(log(n p)/|log(1-p)| + 1)``, evaluated exactly at integer boundaries."""
    if n * p >= 1.0:
        return nu_arrow_given_p(2, p, 1.0 / n)
    return math.floor(math.log(n * p) / -math.log1p(-p) + 1.0)


def expand_fixed_p(p: float, n: int, eps: float = DEFAULT_EPS) -> ExpansionReport:
    """Geometric weights with fixed p: ``floor(log(np)/|log(1-p)| + 1) + gamma/|log(1-p)|``.

    The floor term is kept as is, so the residual carries a sawtooth of unit
    amplitude in ``log(np)/|log(1-p)|``.
    """
    p = check_probability(p)
    if int(n) != n or n < 2:
        raise ValueError("n must be an integer >= 2")
    n = int(n)
    a = -math.log1p(-p)
    terms = (
        ("floor", float(fixed_p_floor_term(p, n))),
        ("gamma/|log(1-p)|", EULER_GAMMA / a),
    )
    reference = expected_Kn_given_p(2, p, n, eps)
    return ExpansionReport("fixed-p", "n", float(n), terms, reference, "expected_Kn_given_p", 1.0)


# ---------------------------------------------------------------------------
# uniform prior, geometric weights
# ---------------------------------------------------------------------------


def expand_uniform_s2(n=None, t=None, x=None, eps: float = DEFAULT_EPS) -> ExpansionReport:
    """Uniform prior, s = 2.

    x form: ``L**2/2 - gamma L`` against ``nu_arrow(x)`` with an O(1) remainder.
    n or t form: ``L**2/2`` with the two cancelling ``gamma L`` parts listed,
    against ``E(K_n)`` or ``Phi(t)`` with an o(L) remainder.
    """
    kind, value = _one_argument(n, t, x)
    L = _log_argument(kind, value)
    prior = Uniform()
    if kind == "x":
        terms = (("L^2/2", 0.5 * L**2), ("-gamma L", -EULER_GAMMA * L))
        reference, method = _tail_reference(prior, 2, value)
        return ExpansionReport("uniform-s2", kind, value, terms, reference, method, 1.0)
    terms = (
        ("L^2/2", 0.5 * L**2),
        ("-gamma L", -EULER_GAMMA * L),
        ("tauberian", EULER_GAMMA * L),
    )
    reference, method = _occupancy_reference(prior, 2, kind, value, eps)
    notes = ("tail-count -gamma L and tauberian +gamma L cancel",)
    return ExpansionReport("uniform-s2", kind, value, terms, reference, method, L, notes)


# ---------------------------------------------------------------------------
# gamma-transform priors
# ---------------------------------------------------------------------------


def expand_loggamma_m(m: int, n=None, t=None, x=None, eps: float = DEFAULT_EPS) -> ExpansionReport:
    """LogGamma(m) prior, s = 2.

    n or t form: ``L**(m+2)/(m+2)! + gamma L**(m+1)/(m+1)!`` against ``E(K_n)``
    or ``Phi(t)``, remainder ``o(L**(m+1))``. The second term is the
    Tauberian correction ``-c gamma ell(1/n)`` with ``c = (-1)**(m+2)/(m+1)!``
    and ``ell(x) = (log x)**(m+1)``.
    x form: ``L**(m+2)/(m+2)!`` against ``nu_arrow(x)``, remainder ``O(L**m)``.
    """
    if int(m) != m or m < 0:
        raise ValueError("m must be a nonnegative integer")
    m = int(m)
    if m == 0:
        return expand_uniform_s2(n=n, t=t, x=x, eps=eps)
    kind, value = _one_argument(n, t, x)
    L = _log_argument(kind, value)
    prior = LogGamma(m)
    lead = ("L^(m+2)/(m+2)!", L ** (m + 2) / math.factorial(m + 2))
    if kind == "x":
        reference, method = _tail_reference(prior, 2, value)
        return ExpansionReport(f"loggamma-{m}", kind, value, (lead,), reference, method, L**m)
    terms = (lead, ("tauberian", EULER_GAMMA * L ** (m + 1) / math.factorial(m + 1)))
    reference, method = _occupancy_reference(prior, 2, kind, value, eps)
    return ExpansionReport(f"loggamma-{m}", kind, value, terms, reference, method, L ** (m + 1))


def expand_rho(rho: float, n=None, t=None, eps: float = DEFAULT_EPS) -> ExpansionReport:
    """LogGammaRho(rho) prior, s = 2: leading term ``L**(rho+2)/Gamma(rho+3)`` only.

    The normalized residual is the relative error, since no second-order term
    is available for general rho.
    """
    rho = float(rho)
    if not rho > -1.0:
        raise ValueError("rho must exceed -1")
    kind, value = _one_argument(n, t, None)
    L = _log_argument(kind, value)
    predicted = L ** (rho + 2.0) / math.gamma(rho + 3.0)
    terms = (("L^(rho+2)/Gamma(rho+3)", predicted),)
    reference, method = _occupancy_reference(LogGammaRho(rho), 2, kind, value, eps)
    notes = ("second-order term unavailable",)
    return ExpansionReport(f"rho-{rho:g}", kind, value, terms, reference, method, predicted, notes)


# ---------------------------------------------------------------------------
# negative binomial weights, s = 3
# ---------------------------------------------------------------------------


def expand_negbin_s3(n=None, t=None, x=None, eps: float = DEFAULT_EPS) -> ExpansionReport:
    """Uniform prior, s = 3.

    x form: ``L**2/2 + L log L - gamma L - (1 + log 2) L`` against
    ``nu_arrow(x)``; n or t form adds the Tauberian ``+gamma L``. Residuals are
    reported relative to ``L``.
    """
    kind, value = _one_argument(n, t, x)
    L = _log_argument(kind, value)
    if L <= 1.0:
        raise ValueError("log argument must exceed 1")
    terms = [
        ("L^2/2", 0.5 * L**2),
        ("L log L", L * math.log(L)),
        ("-gamma L", -EULER_GAMMA * L),
        ("-(1+log 2) L", -(1.0 + LOG2) * L),
    ]
    prior = Uniform()
    if kind == "x":
        reference, method = _tail_reference(prior, 3, value)
        return ExpansionReport("negbin-s3", kind, value, tuple(terms), reference, method, L)
    terms.insert(3, ("tauberian", EULER_GAMMA * L))
    reference, method = _occupancy_reference(prior, 3, kind, value, eps)
    notes = ("tail-count -gamma L and tauberian +gamma L cancel",)
    return ExpansionReport("negbin-s3", kind, value, tuple(terms), reference, method, L, notes)


def negbin_gap_ratio(t: float, eps: float = DEFAULT_EPS) -> float:
    """``(Phi_3(t) - Phi_2(t)) / (log t log log t)`` under the uniform prior."""
    L = math.log(t)
    if L <= 1.0:
        raise ValueError("t must exceed e")
    gap = phi(Uniform(), 3, t, eps) - phi(Uniform(), 2, t, eps)
    return gap / (L * math.log(L))


# ---------------------------------------------------------------------------
# de Haan constant and r(x)
# ---------------------------------------------------------------------------


def de_haan_estimate(tail_fn: Callable[[float], float], x: float, lam: float,
                     ell: Callable[[float], float]) -> float:
    """``(tail_fn(lam x) - tail_fn(x)) / (ell(x) log lam)``, an estimate of c."""
    log_lam = math.log(lam)
    if log_lam == 0.0:
        raise ValueError("lambda must differ from 1")
    scale = ell(x)
    if scale == 0.0:
        raise ValueError("auxiliary function vanishes at x")
    return (tail_fn(lam * x) - tail_fn(x)) / (scale * log_lam)


def de_haan_constant(m: int) -> float:
    """Limit constant ``(-1)**(m+2)/(m+1)!`` for LogGamma(m) with ``ell = (log x)**(m+1)``."""
    return (-1.0) ** (m + 2) / math.factorial(m + 1)


def log_power(k: int) -> Callable[[float], float]:
    """Auxiliary function ``x -> (log x)**k``."""
    return lambda x: math.log(x) ** k


def _r_breaks(x: float) -> np.ndarray:
    head = graded_breaks(0.0, 1.0, 60)
    if x <= 2.0:
        return np.concatenate((head, [x]))
    # log(1 + (x - t) f) varies on the scale x - t + 1; grade toward t = x
    k = int(math.ceil(math.log2(x - 1.0)))
    tail = x - (x - 1.0) * 0.5 ** np.arange(1, k + 1)
    return np.unique(np.concatenate((head, tail, [x])))


def r_of_x(x: float, rtol: float = 1e-12) -> float:
    """``r(x) = int_0^x log(1 + (x - t) f(t)) f(t) dt`` for x > 1."""
    x = float(x)
    if not x > 1.0:
        raise ValueError("r(x) is defined here for x > 1")

    def integrand(t):
        ft = _f_safe(t)
        return np.log1p((x - t) * ft) * ft

    value, _ = integrate(integrand, _r_breaks(x), order=20, rtol=rtol)
    return value


def r_remainder(x: float) -> float:
    """``r(x) - x log x + x``, of order ``log x``."""
    return r_of_x(x) - x * math.log(x) + x
