"""Newton-type solver for switched-system optimal control with free switching instants.

The problem is transcribed by direct multiple shooting; each Newton direction
is computed by a Riccati recursion extended with switching-time variables.
"""
from .kkt_oracle import DenseKkt, assemble, reduced_hessian_spectrum, solve_dense
from .model import ModelError, ProblemSpec, Subsystem, SwitchedModel, check_derivatives, eval_hamiltonian
from .problems import REGISTRY, get_problem
from .riccati import (AssumptionViolation, CholeskyFailure, Direction, NonpositiveXi, RiccatiFactors,
                      backward_pass, forward_pass, newton_direction)
from .solver import ConvergenceLog, Solution, SolverConfig, Status, fraction_to_boundary, solve
from .transcription import (GridError, GridLayout, Iterate, Residuals, StageData, SwitchCollision, build_grid,
                            compute_residuals, linearize, opt_error)

__version__ = "0.1.0"
