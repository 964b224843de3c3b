"""Positivity-preserving, energy-dissipating finite-volume solver for
multi-species drift-diffusion with nonlocal (convolution-type) interactions."""
from .conv import KernelOperator, conv_direct, conv_fast, conv_pointwise_regularized
from .diagnostics import (DiagnosticsRecord, chemical_potential, discrete_dissipation, discrete_energy,
                          error_norms, fit_order, total_mass)
from .errors import (ConfigError, InvalidArgument, InvariantViolation, KernelDomainError, NonlocalFVError,
                     QuadratureFailure, SolverFailure)
from .field import ExternalPotential, FieldSet, SpeciesState, assemble_fields
from .grid import Grid1D, Grid2D, build_grid_1d, build_grid_2d, cell_volume
from .kernels import KernelSpec, eval_kernel, precompute_tensor_1d, precompute_tensor_2d
from .scheme import Model, PoissonRobin1D, RobinBC, StepConfig, run_transient, step, step_1d, step_2d

__version__ = "0.1.0"
