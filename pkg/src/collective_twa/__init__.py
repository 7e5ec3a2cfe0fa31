"""Truncated Wigner approximation for collective spontaneous emission of two-level atoms."""

__version__ = "0.1.0"

from .couplings import CouplingMatrices, build_matrices, dicke_override, dipole_kernel, factorize
from .errors import (
    DegenerateGeometryError,
    IntegratorFailureError,
    InvalidArgumentError,
    KernelInconsistencyError,
    NumericalBlowupError,
    ScenarioError,
    SingularKernelError,
    TWAError,
    UndefinedDirectionError,
    UnsupportedScenarioError,
)
from .geometry import AtomEnsemble, DriveField, build_square_lattice, sample_gaussian_cloud
from .observables import MomentAccumulator, ObservableContext
from .phase_space import InitialState, PhasePoint, sample_initial
from .sde import SimConfig, run_ensemble, run_trajectory
