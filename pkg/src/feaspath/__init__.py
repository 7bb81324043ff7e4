"""Certified feasible transition paths for AC optimal power flow.

The package builds convex inner approximations of the OPF feasible set
around a feasible base point and chains them into piece-wise-linear paths
of control setpoints along which the nonlinear power-flow equations and all
operational limits provably hold.
"""

from .cases import (Branch, Bus, BusKind, FeasiblePath, Generator, Network,
                    load_case, parse_case, read_path, write_case, write_path)
from .errors import (CaseParseError, CaseValidationError, CertificationError,
                     ConfigError, DivergenceError, FeaspathError,
                     PowerFlowError, SingularJacobianError, SolverError,
                     UnsupportedCostError)
from .powerflow import (FeasibilityReport, OperatingPoint, build_grid,
                        check_feasibility, solve_pf)

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "BusKind", "FeasiblePath", "Generator", "Network",
    "load_case", "parse_case", "read_path", "write_case", "write_path",
    "FeasibilityReport", "OperatingPoint", "build_grid", "check_feasibility",
    "solve_pf",
    "FeaspathError", "CaseParseError", "CaseValidationError",
    "UnsupportedCostError", "PowerFlowError", "DivergenceError",
    "SingularJacobianError", "SolverError", "CertificationError",
    "ConfigError",
]
