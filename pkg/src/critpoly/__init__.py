"""Bond percolation thresholds from critical polynomials on semi-infinite cylinders."""

from .connectivity import ConnectivityState, SectorTag, StateSpace, close_state_space
from .extrapolate import Series, ScalingFit, extrapolate_pc
from .lattice import LatticeSpec, ParityError, catalog, get_lattice, instantiate, parse_lattice_file
from .oracle import CriticalPolynomial, critical_polynomial, torus_basis
from .threshold import ResultLedger, SolverConfig, ThresholdRecord, find_threshold
from .transfer import BondWeight, Precision, leading_eigenvalue

__version__ = "0.1.0"

__all__ = [
    "BondWeight",
    "ConnectivityState",
    "CriticalPolynomial",
    "LatticeSpec",
    "ParityError",
    "Precision",
    "ResultLedger",
    "ScalingFit",
    "SectorTag",
    "Series",
    "SolverConfig",
    "StateSpace",
    "ThresholdRecord",
    "catalog",
    "close_state_space",
    "critical_polynomial",
    "extrapolate_pc",
    "find_threshold",
    "get_lattice",
    "instantiate",
    "leading_eigenvalue",
    "parse_lattice_file",
    "torus_basis",
]
