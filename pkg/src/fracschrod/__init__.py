"""Restricted fractional Schrodinger operators on bounded domains.

Dense discretization of ``(-Delta)^{alpha/2} - V`` with exterior Dirichlet
condition, its ground state and torsion function, Doob transforms, the
constants of the two-sided ground state / torsion comparison, and the
critical Hardy ladder.
"""

from .critical import CriticalLadder, run_ladder
from .doob import ComparisonReport, ConstantLedger, DoobForm, build_doob, build_ledger, compare, solve_w
from .domain import Grid, build_box, build_interval
from .errors import AssemblyError, ConfigurationError, FracSchrodError, NotSubcriticalError, NumericalError
from .operator import NonlocalForm, assemble, normalization_constant
from .potential import PotentialSpec, critical_constant, evaluate, relative_bound
from .spectral import GreenData, SpectralResult, eigensolve, green_matrix, heat_kernel, torsion

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "ComparisonReport", "ConfigurationError", "ConstantLedger", "CriticalLadder", "DoobForm",
    "FracSchrodError", "GreenData", "Grid", "NonlocalForm", "NotSubcriticalError", "NumericalError",
    "PotentialSpec", "SpectralResult", "assemble", "build_box", "build_doob", "build_interval", "build_ledger",
    "compare", "critical_constant", "eigensolve", "evaluate", "green_matrix", "heat_kernel",
    "normalization_constant", "relative_bound", "run_ladder", "solve_w", "torsion",
]
