"""Geometric stick-breaking weights, occupancy counts and their asymptotics."""

from .expansions import (
    ExpansionReport,
    de_haan_estimate,
    expand_fixed_p,
    expand_loggamma_m,
    expand_negbin_s3,
    expand_rho,
    expand_uniform_s2,
    r_of_x,
    r_remainder,
)
from .montecarlo import McConfig, McResult, mc_mean_Kn, sample_box_index, sample_Kn
from .occupancy import (
    expected_Kn,
    expected_Kn_given_p,
    phi,
    phi_given_p,
    poissonization_gap,
)
from .priors import LogGamma, LogGammaRho, SuccessPrior, Uniform, density, parse_prior, sample_p
from .specialfn import (
    EULER_GAMMA,
    F_cap,
    LambertBranch,
    LambertDomainError,
    f_t,
    fractional_integral_F,
    lambert_w,
    lambert_wm1_two_term,
)
from .tail_measure import (
    TailCount,
    m_given_p_s3,
    m_iterative_s3,
    m_of_x,
    nu_arrow,
    nu_arrow_given_p,
    nu_arrow_scan,
)
from .weights import GEOMETRIC, WeightFamily, negbin_pmf, tail_mass, weight, weights_upto

__version__ = "0.1.0"
