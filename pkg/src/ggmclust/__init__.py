"""Variable clustering by marginal likelihood of block-structured Gaussian graphical models."""

__version__ = "0.1.0"

from .admm import AdmmConfig, MapSolution, solve_map
from .candidates import CandidateSet, GlassoConfig, graphical_lasso, linkage_candidates, spectral_candidates
from .core import Clustering, Hyperparams, NotPositiveDefiniteError, SampleStats, canonicalize
from .evaluation import aggregate, anmi, format_cell
from .marginal import VariationalFit, analytic_log_marginal_basic, variational_log_marginal
from .mcmc import ChibEstimate, McmcConfig, chib_log_marginal, gelman_rubin_mpsrf
from .selection import Criterion, SelectionResult, posterior_over_k, select
from .synth import SynthSpec, generate_dataset

__all__ = [
    "AdmmConfig",
    "MapSolution",
    "solve_map",
    "CandidateSet",
    "GlassoConfig",
    "graphical_lasso",
    "linkage_candidates",
    "spectral_candidates",
    "Clustering",
    "Hyperparams",
    "NotPositiveDefiniteError",
    "SampleStats",
    "canonicalize",
    "aggregate",
    "anmi",
    "format_cell",
    "VariationalFit",
    "analytic_log_marginal_basic",
    "variational_log_marginal",
    "ChibEstimate",
    "McmcConfig",
    "chib_log_marginal",
    "gelman_rubin_mpsrf",
    "Criterion",
    "SelectionResult",
    "posterior_over_k",
    "select",
    "SynthSpec",
    "generate_dataset",
]
