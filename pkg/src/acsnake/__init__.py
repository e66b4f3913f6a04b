"""Steady states, snaking bifurcations, and stability of discrete Allen-Cahn lattices.

Shallow Gaussian networks are trained as root-finders for the lattice system
with (stochastic) Levenberg-Marquardt; pseudo-arclength continuation in weight
space traces snaking branches, and a positivity-constrained eigen network
classifies linear stability. Direct lattice numerics provide the ground truth.
"""

from .lattice import (LatticeSpec, ModelParams, StateField, build_spec,
                      laplacian_at, linearized_operator, residual,
                      solution_norm, state_jacobian)
from .network import (InputMode, NetworkShape, forward, init_weights,
                      transform_index, transform_indices, weight_jacobian)
from .solver import (LMConfig, SolveTrace, SolverFailure, SubsetSpec, lm_solve,
                     sample_subset, stochastic_lm_solve)
from .pinn import PinnProblem, solve_fixed_mu, solve_on_primary_branch
from .continuation import (BranchPoint, BranchResult, ContinuationParams,
                           StepFailure, constraint_residual, correct,
                           init_branch, predict, trace_branch)
from .stability import (EigenFailure, EigenResult, annotate_branch,
                        classify_stability, eigen_residual,
                        solve_largest_eigenpair)
from .oracle import (DirectSystem, direct_largest_eigenpair, direct_solve,
                     direct_trace_branch, mu_at_norm)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
