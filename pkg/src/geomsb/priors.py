"""Priors on the success probability ``p`` and quadrature in ``t = log(1/p)``.

All three families are of the form ``p = exp(-X)`` with ``X`` gamma distributed
with unit rate: Uniform (shape 1), LogGamma(m) (shape m+1) and LogGammaRho(rho)
(shape 1+rho). In the ``t`` coordinate the density becomes
``pi(exp(-t)) exp(-t) = t**(shape-1) exp(-t) / Gamma(shape)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammainc, gammaincc, gammainccinv, gammaln

from ._quadrature import DEFAULT_ORDER, MAX_PANELS, graded_breaks, panel_rule, split_breaks
from .weights import check_probability

UNIFORM = "uniform"
LOGGAMMA = "loggamma"
RHO = "rho"


@dataclass(frozen=True)
class SuccessPrior:
    """Prior on p; ``param`` is m for LogGamma and rho for LogGammaRho."""

    kind: str = UNIFORM
    param: float = 0.0

    def __post_init__(self):
        if self.kind == UNIFORM:
            object.__setattr__(self, "param", 0.0)
        elif self.kind == LOGGAMMA:
            if int(self.param) != self.param or self.param < 0:
                raise ValueError("LogGamma(m) requires a nonnegative integer m")
            object.__setattr__(self, "param", int(self.param))
        elif self.kind == RHO:
            if not self.param > -1.0:
                raise ValueError("LogGammaRho(rho) requires rho > -1")
            object.__setattr__(self, "param", float(self.param))
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @property
    def shape(self) -> float:
        """Gamma shape of ``X = log(1/p)``."""
        return 1.0 + float(self.param)

    @property
    def label(self) -> str:
        if self.kind == UNIFORM:
            return "uniform"
        if self.kind == LOGGAMMA:
            return f"loggamma:{self.param}"
        return f"rho:{self.param:g}"

    def density(self, p):
        return density(self, p)

    def density_t(self, t):
        """``pi(exp(-t))`` as a function of ``t = log(1/p)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == UNIFORM:
            return np.ones_like(t)
        a = self.param
        with np.errstate(divide="ignore"):
            return np.exp(a * np.log(t) - gammaln(a + 1.0))

    def cdf(self, p):
        """``P(p' <= p)`` for p in [0, 1]."""
        p = np.asarray(p, dtype=float)
        if self.kind == UNIFORM:
            return np.clip(p, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return gammaincc(self.shape, -np.log(p))

    def mass_between(self, a, b):
        """``P(a <= p <= b)``; accurate for narrow intervals near zero."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == UNIFORM:
            return b - a
        with np.errstate(divide="ignore"):
            ta, tb = -np.log(a), -np.log(b)
        # lower tail of X near 0 (p near 1), upper tail otherwise
        upper = gammaincc(self.shape, tb) - gammaincc(self.shape, ta)
        lower = gammainc(self.shape, ta) - gammainc(self.shape, tb)
        return np.where(tb < self.shape, lower, upper)

    def log_cutoff(self, eps: float) -> float:
        """Smallest ``T`` with ``P(log(1/p) > T) <= eps``."""
        return float(gammainccinv(self.shape, eps))


def Uniform() -> SuccessPrior:
    return SuccessPrior(UNIFORM)


def LogGamma(m: int) -> SuccessPrior:
    return SuccessPrior(LOGGAMMA, m)


def LogGammaRho(rho: float) -> SuccessPrior:
    return SuccessPrior(RHO, rho)


def parse_prior(text: str) -> SuccessPrior:
    """Parse ``uniform``, ``loggamma:m`` or ``rho:v``."""
    kind, _, value = text.strip().lower().partition(":")
    if kind == UNIFORM and not value:
        return Uniform()
    if kind == LOGGAMMA and value:
        m = float(value)
        if m != int(m):
            raise ValueError(f"loggamma parameter must be an integer, got {value!r}")
        return LogGamma(int(m))
    if kind == RHO and value:
        return LogGammaRho(float(value))
    raise ValueError(f"cannot parse prior {text!r}; expected uniform, loggamma:m or rho:v")


def density(prior: SuccessPrior, p):
    """Prior density: 1, ``(-log p)**m / m!`` or ``(-log p)**rho / Gamma(1+rho)``."""
    p = check_probability(p)
    out = prior.density_t(-np.log(p))
    return out if np.ndim(out) else float(out)


def sample_p(prior: SuccessPrior, rng: np.random.Generator, size=None):
    """Draw ``p = exp(-X)``, ``X ~ gamma(shape, 1)``; uniform priors sample directly."""
    if prior.kind == UNIFORM:
        p = np.asarray(rng.random(size))
    else:
        p = np.exp(-np.asarray(rng.gamma(prior.shape, 1.0, size)))
    # zero-measure boundary hits
    bad = ~((p > 0.0) & (p < 1.0))
    if np.any(bad):
        if p.ndim == 0:
            return sample_p(prior, rng, size)
        p[bad] = sample_p(prior, rng, int(bad.sum()))
    return p if p.ndim else float(p)


def _rough_at_zero(prior: SuccessPrior) -> bool:
    # t**(shape-1) is a polynomial only for integer shapes
    return prior.shape != int(prior.shape)


def log_coordinate_breaks(prior: SuccessPrior, upper: float, panels: int) -> np.ndarray:
    """Uniform panels on [0, upper]; the first panel is graded if the density is not smooth at 0."""
    breaks = np.linspace(0.0, upper, panels + 1)
    if _rough_at_zero(prior):
        # mass of the innermost panel ~ h**shape must drop below 1e-17
        depth = math.ceil(17.0 / (min(prior.shape, 1.0) * math.log10(2.0))) + 1
        head = graded_breaks(0.0, breaks[1], depth)
        breaks = np.concatenate((head, breaks[2:]))
    return breaks


def log_coordinate_quadrature(prior: SuccessPrior, upper: float, panels: int, order: int = DEFAULT_ORDER):
    """Nodes ``t`` and combined weights ``pi(e^-t) e^-t w`` for ``int_0^upper g(t) pi(e^-t) e^-t dt``."""
    if not upper > 0.0:
        raise ValueError("upper limit must be positive")
    if panels < 1:
        raise ValueError("panels must be >= 1")
    nodes, weights = panel_rule(log_coordinate_breaks(prior, upper, panels), order)
    return nodes, weights * prior.density_t(nodes) * np.exp(-nodes)


def integrate_log_coordinate(
    prior: SuccessPrior,
    g: Callable[[np.ndarray], np.ndarray],
    upper: float,
    panels: int | None = None,
    rtol: float = 1e-10,
    atol: float = 0.0,
    order: int = DEFAULT_ORDER,
    max_panels: int = MAX_PANELS,
) -> tuple[float, float]:
    """``int_0^upper g(t) pi(e^-t) e^-t dt`` with panel doubling until converged."""
    if panels is None:
        panels = max(4, int(math.ceil(upper)))
    breaks = log_coordinate_breaks(prior, upper, panels)

    def total(br):
        nodes, w = panel_rule(br, order)
        return float(np.dot(w * prior.density_t(nodes) * np.exp(-nodes), g(nodes)))

    old = total(breaks)
    while True:
        breaks = split_breaks(breaks)
        new = total(breaks)
        err = abs(new - old)
        if err <= rtol * abs(new) + atol or len(breaks) - 1 >= max_panels:
            return new, err
        old = new
