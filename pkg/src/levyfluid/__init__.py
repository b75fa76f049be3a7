"""Stationary analysis of Levy-driven tree fluid networks.

Analytic joint transforms of buffer contents and busy/idle ages, an exact
reflection solver for piecewise-linear inputs and a Monte Carlo oracle built
on sup-functionals of the free process.
"""
from .model import (
    ConstantJumps,
    ExponentialJumps,
    LevyComponentSpec,
    MixtureJumps,
    PreconditionError,
    SpecError,
    TreeNetworkSpec,
    ValidationReport,
    derive_tandem,
    priority_network,
    single_cp_tandem,
    tandem,
    validate_network,
)
from .levy import LaplaceExponent, SamplePath, exponent, exponents, sample_path
from .skorokhod import extract_ages, reflect_explicit, reflect_fixed_point
from .fluctuation import build_X, stationary_summary, summarize_path
from .transforms import (
    busy_periods,
    conditioned_XG,
    fluctuation_identity,
    idle_vector,
    priority_WE,
    quasi_product_XG,
    single_cp,
    tandem_WB,
)
from .montecarlo import compare, estimate_stationary, estimate_transform

__version__ = "0.1.0"
