"""Monte Carlo simulation of the number of distinct boxes K_n.

Replicate ``r`` draws from its own stream ``SeedSequence(seed, spawn_key=(r,))``,
so results do not depend on how replicates are spread over workers, and the
reduction runs in replicate order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .priors import SuccessPrior, Uniform, sample_p
from .weights import WeightFamily, as_family, check_probability

MAX_REPS = 2**31
_SEED_LIMIT = 2**64


@dataclass(frozen=True)
class McConfig:
    n: int
    reps: int
    seed: int = 0
    prior: SuccessPrior = Uniform()
    family: WeightFamily = WeightFamily(2)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ValueError("reps must be a positive integer")
        if self.reps > MAX_REPS:
            raise ValueError(f"reps must not exceed {MAX_REPS}")
        if int(self.seed) != self.seed or not 0 <= self.seed < _SEED_LIMIT:
            raise ValueError("seed must be an integer in [0, 2**64)")
        object.__setattr__(self, "family", as_family(self.family))


@dataclass(frozen=True)
class McResult:
    mean_Kn: float
    std_error: float
    reps: int
    seed: int

    def within(self, value: float, k: float = 3.0) -> bool:
        """Whether ``value`` lies within ``k`` standard errors of the mean."""
        return abs(self.mean_Kn - value) <= k * self.std_error


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent stream for one replicate, derived from ``(seed, replicate)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate,)))


def _geometric_failures(p: float, rng: np.random.Generator, size):
    # inversion: floor(log U / log(1 - p)) with U in (0, 1]
    u = 1.0 - rng.random(size)
    return np.floor(np.log(u) / math.log1p(-p))


def sample_box_index(family, p, rng: np.random.Generator, size=None, method: str = "composition"):
    """Box index j drawn with probability ``w_j(p)``.

    ``composition``: ``r = 1 +`` sum of s geometric failure counts, then j
    uniform on ``1..r``. ``direct`` (s = 2 only): ``j = 1 +`` one geometric
    failure count. Indices are returned as floats, exact below 2**53.
    """
    family = as_family(family)
    p = check_probability(p)
    shape = () if size is None else tuple(int(k) for k in np.atleast_1d(size))
    if method == "direct":
        if family.s != 2:
            raise ValueError("the direct sampler exists only for s = 2")
        j = 1.0 + _geometric_failures(p, rng, shape)
    elif method == "composition":
        r = 1.0 + _geometric_failures(p, rng, (family.s,) + shape).sum(axis=0)
        # guard against U * r rounding up to r
        j = np.minimum(np.floor(rng.random(shape) * r) + 1.0, r)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return float(j) if np.ndim(j) == 0 else j


def sample_Kn(prior: SuccessPrior, family, n: int, rng: np.random.Generator) -> int:
    """Draw p from the prior, then n box indices; return the number of distinct boxes."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    p = sample_p(prior, rng)
    boxes = sample_box_index(family, p, rng, size=int(n))
    return len(set(boxes.tolist()))


def _replicate_block(args) -> np.ndarray:
    config, start, stop = args
    out = np.empty(stop - start, dtype=np.int64)
    for i, r in enumerate(range(start, stop)):
        out[i] = sample_Kn(config.prior, config.family, config.n, replicate_rng(config.seed, r))
    return out


def simulate_Kn(config: McConfig, workers: int = 1) -> np.ndarray:
    """Per-replicate K_n values in replicate order."""
    if workers <= 1 or config.reps < 2 * workers:
        return _replicate_block((config, 0, config.reps))
    bounds = np.linspace(0, config.reps, 4 * workers + 1).astype(int)
    blocks = [(config, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(_replicate_block, blocks)))


def mc_mean_Kn(config: McConfig, workers: int = 1) -> McResult:
    """Replicate mean of K_n and its standard error ``sd / sqrt(reps)``."""
    values = simulate_Kn(config, workers).astype(float)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(config.reps)) if config.reps > 1 else 0.0
    return McResult(mean, se, config.reps, config.seed)
