"""Energy-conserving discrete-gradient solver for the semilinear
Klein-Gordon equation with quantitative stability/convergence diagnostics."""

from .kernels import active_backend, available_backends, set_backend
from .lattice import Field, GridSpec, central_diff, shift_forward, wide_laplacian
from .scheme import (
    FieldState,
    NonConvergence,
    NonFinite,
    PhysicsParams,
    SolverConfig,
    evolve,
    hamiltonian_density,
    nonlinear_discrete_gradient,
    residual,
    step,
    total_hamiltonian,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    "available_backends",
    "set_backend",
    "Field",
    "GridSpec",
    "shift_forward",
    "central_diff",
    "wide_laplacian",
    "PhysicsParams",
    "FieldState",
    "SolverConfig",
    "NonConvergence",
    "NonFinite",
    "nonlinear_discrete_gradient",
    "hamiltonian_density",
    "total_hamiltonian",
    "residual",
    "step",
    "evolve",
]
