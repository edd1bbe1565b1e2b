"""Pathwise chaos decompositions of difference schemes.

Increments of functions of random walks and difference schemes split
exactly into a martingale part, a drift part, and orthogonal correction
terms.  The package computes those decompositions, runs backward
induction on scheme lattices with discrete Feynman-Kac source terms, and
estimates high-dimensional scheme expectations with Walsh-function
drivers by plain and quasi Monte Carlo.
"""

__version__ = "1.0.0"

from ._backend import backend_name
from .basis import (
    IncrementLaw,
    OrthonormalSystem,
    WalshIndex,
    full_walsh_indices,
    gram_schmidt_basis,
    rademacher,
    walsh_block_signs,
    walsh_driver_vector,
    walsh_eval,
)
from .dif import (
    ChaosDecomposition,
    StatePoint,
    decompose_multidim,
    decompose_scheme,
    decompose_spanning,
    decompose_walk_1d,
    decompose_weak_scheme,
    spanning_defect,
)
from .errors import ChaostepError
from .fdsolver import (
    ErrorBound,
    LatticeSolution,
    PolynomialFlow,
    backward_solve,
    consistency_defect,
    error_bound_decomposition,
    feynman_kac_source,
)
from .montecarlo import (
    DesignReport,
    EstimatorConfig,
    EstimatorRun,
    FloorReport,
    OrderFit,
    design_report,
    estimate,
    hedging_defect,
    third_moment_floor,
    weak_order,
)
from .polynomials import Polynomial
from .scheme import (
    DriverSource,
    Path,
    SchemeField,
    enumerate_terminal,
    expectation_terminal,
    simulate_path,
)

__all__ = [
    "__version__",
    "backend_name",
    "IncrementLaw",
    "OrthonormalSystem",
    "WalshIndex",
    "full_walsh_indices",
    "gram_schmidt_basis",
    "rademacher",
    "walsh_block_signs",
    "walsh_driver_vector",
    "walsh_eval",
    "ChaosDecomposition",
    "StatePoint",
    "decompose_multidim",
    "decompose_scheme",
    "decompose_spanning",
    "decompose_walk_1d",
    "decompose_weak_scheme",
    "spanning_defect",
    "ChaostepError",
    "ErrorBound",
    "LatticeSolution",
    "PolynomialFlow",
    "backward_solve",
    "consistency_defect",
    "error_bound_decomposition",
    "feynman_kac_source",
    "DesignReport",
    "EstimatorConfig",
    "EstimatorRun",
    "FloorReport",
    "OrderFit",
    "design_report",
    "estimate",
    "hedging_defect",
    "third_moment_floor",
    "weak_order",
    "Polynomial",
    "DriverSource",
    "Path",
    "SchemeField",
    "enumerate_terminal",
    "expectation_terminal",
    "simulate_path",
]
