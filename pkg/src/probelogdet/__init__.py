"""Matrix-free log-determinants of sparse SPD precision matrices.

``log det Q = tr log Q`` is estimated with probing vectors from a distance-k
graph coloring (or Hutchinson's estimator), ``log(Q) v`` is approximated by a
rational contour quadrature, and all its shifted systems share one Krylov
sequence.
"""

from .estimator import SPDEGaussianMRF
from .krylov import ConvergenceError, SolverConfig, apply_log, cg_solve, cocg_m_solve, shifted_quadratic_forms
from .likelihood import (
    GaussLinearModel,
    Posterior,
    gauss_linear_objective,
    gmrf_neg_loglik,
    posterior_mode,
    sample_gmrf_dense,
    sample_spde,
)
from .logdet import (
    LogDetEstimate,
    NotPositiveDefiniteError,
    logdet_exact_dense,
    logdet_hutchinson,
    logdet_probing,
)
from .optimize import OptimizerTrace, fit_hyperparams, parse_schedule
from .probing import (
    Coloring,
    ProbingVector,
    color_distance_k,
    estimate_probing_distance,
    is_valid_coloring,
    probing_vectors,
)
from .quadrature import (
    QuadratureRule,
    SpectralBounds,
    build_log_quadrature,
    choose_order,
    estimate_spectral_bounds,
)
from .sparse import AdjacencyGraph, CsrMatrix, graph_distance_ball, read_matrix_market, write_matrix_market
from .spde import GridSpec, Hyperparams, build_operator, build_precision, precision_spectral_bounds

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "Coloring",
    "ConvergenceError",
    "CsrMatrix",
    "GaussLinearModel",
    "GridSpec",
    "Hyperparams",
    "LogDetEstimate",
    "NotPositiveDefiniteError",
    "OptimizerTrace",
    "Posterior",
    "ProbingVector",
    "QuadratureRule",
    "SPDEGaussianMRF",
    "SolverConfig",
    "SpectralBounds",
    "apply_log",
    "build_log_quadrature",
    "build_operator",
    "build_precision",
    "cg_solve",
    "choose_order",
    "cocg_m_solve",
    "color_distance_k",
    "estimate_probing_distance",
    "estimate_spectral_bounds",
    "fit_hyperparams",
    "gauss_linear_objective",
    "gmrf_neg_loglik",
    "graph_distance_ball",
    "is_valid_coloring",
    "logdet_exact_dense",
    "logdet_hutchinson",
    "logdet_probing",
    "parse_schedule",
    "posterior_mode",
    "precision_spectral_bounds",
    "probing_vectors",
    "read_matrix_market",
    "sample_gmrf_dense",
    "sample_spde",
    "shifted_quadratic_forms",
    "write_matrix_market",
]
