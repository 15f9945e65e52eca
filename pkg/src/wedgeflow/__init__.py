"""Heat flow and Hardy inequalities in curved planar wedges."""

__version__ = "0.1.0"

from .geometry import ThetaProfile, WedgeParams, builtin_profile, metric_at, twist_constants
from .assembly import WedgeGrid, FormMatrices, make_grid, assemble_h, assemble_forms
from .spectral import EigenResult, exact_spectrum, lowest_eigenpairs, eigenvalue_trajectory
from .evolve import DecayFit, SelfSimilarState, run_and_fit, prepare_initial
from .hardy import GlobalHardyCertificate, certify_global, local_hardy_constant, angular_poincare

__all__ = [
    "ThetaProfile",
    "WedgeParams",
    "builtin_profile",
    "metric_at",
    "twist_constants",
    "WedgeGrid",
    "FormMatrices",
    "make_grid",
    "assemble_h",
    "assemble_forms",
    "EigenResult",
    "exact_spectrum",
    "lowest_eigenpairs",
    "eigenvalue_trajectory",
    "DecayFit",
    "SelfSimilarState",
    "run_and_fit",
    "prepare_initial",
    "GlobalHardyCertificate",
    "certify_global",
    "local_hardy_constant",
    "angular_poincare",
]
