"""Sparse (maximum hands-off) control of graphon-coupled linear systems.

The package discretizes graphon integral operators, solves the L1 and
non-convex sparse control problems on piecewise-constant controls,
certifies bang-off-bang structure, tests spectral controllability and
compares graphon-limit controls with controls of finite networks.
"""

from .controllability import ControllabilityReport, spectral_check
from .dynamics import (ControlSignal, DiscretizedSystem, TerminalMap, build_terminal_map, matrix_exponential,
                       propagate, switching_function, terminal_state)
from .errors import (AdmissibilityError, CapacityError, DivergenceError, DomainError, HandsOffError,
                     PenaltyError, RefinementError, ShapeError, ValidationError)
from .graphon import (EXAMPLE1, HALFPLANE, CutNormResult, GraphonSpec, OperatorMatrix, SandwichReport,
                      builtin_graphon, check_sandwich, constant_graphon, cut_norm, discretize_operator,
                      eval_graphon, graphon_difference, load_step_csv, midpoints, operator_norm,
                      project_to_step, save_step_csv, step_graphon_from_adjacency)
from .network import (ConvergenceRecord, FiniteNetwork, LimitSystem, build_lifted_system, convergence_experiment,
                       example3_limit, example3_network, lift, verify_approximation,
                       verify_assumption3)
from .penalties import (PenaltySpec, builtin_penalty, l1_penalty, lp_penalty, mcp_penalty, numeric_prox,
                        prox_l1_box, validate_penalty)
from .solvers import (BangOffBangReport, SolveReport, SolverOptions, bang_off_bang_certificate, brute_force_l0,
                      evaluate_cost, solve_l1, solve_nonconvex, sparsity_rate)

__version__ = "0.1.0"

import types as _types

__all__ = [name for name, obj in list(globals().items())
           if not name.startswith("_") and not isinstance(obj, _types.ModuleType)]
