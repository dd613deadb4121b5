"""Divergence-exact mixed finite elements for incompressible MHD.

The electric field is discretized with edge elements and the magnetic
field with face elements, so the discrete Faraday update keeps div B = 0
exactly; Picard, symmetric-Picard and Newton linearizations share the same
block structure, and the symmetric variant pairs with a weighted-norm
block-preconditioned MINRES solve.
"""

from .assembly import (BlockSystem, Params, SourceData, apply_essential_bcs,
                       assemble_convection, assemble_lorentz_coupling,
                       assemble_newton, assemble_operator, assemble_picard,
                       assemble_symmetric_picard, get_context)
from .derham import DeRhamComplex, build_complex, discrete_div, interpolate
from .diagnostics import (EnergyLedger, divb_monitor, l2_errors,
                          manufactured_sources, observed_orders,
                          weighted_norms)
from .fem_core import QuadratureRule, eval_basis, push_forward, quadrature
from .linalg import (BlockPreconditioner, SingularMatrixError, SparseLU,
                     build_block_preconditioner, minres, sparse_lu_solve)
from .mesh import MeshError, TetMesh, generate_structured_cube
from .solver import (SolverError, State, StepSizeWarning, initialize_state,
                     run_transient, solve_nonlinear_step, step_linearized)
from .state import zero_state

__all__ = [
    "BlockPreconditioner", "BlockSystem", "DeRhamComplex", "EnergyLedger",
    "MeshError", "Params", "QuadratureRule", "SingularMatrixError",
    "SolverError", "SourceData", "SparseLU", "State", "StepSizeWarning",
    "TetMesh", "apply_essential_bcs", "assemble_convection",
    "assemble_lorentz_coupling", "assemble_newton", "assemble_operator",
    "assemble_picard", "assemble_symmetric_picard",
    "build_block_preconditioner", "build_complex", "discrete_div",
    "divb_monitor", "eval_basis", "generate_structured_cube", "get_context",
    "initialize_state", "interpolate", "l2_errors", "manufactured_sources",
    "minres", "observed_orders", "push_forward", "quadrature",
    "run_transient", "solve_nonlinear_step", "sparse_lu_solve",
    "step_linearized", "weighted_norms", "zero_state",
]

__version__ = "0.1.0"
