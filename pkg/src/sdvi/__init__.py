"""Euler scheme and projection solvers for stochastic differential variational inequalities."""

from .analysis import (ConvergenceReport, EnsembleResult, PathError, discrete_h_norm,
                       ensemble_h_norm, estimate_strong_order, fit_order, run_ensemble)
from .core import (Box, ConvexSet, DimensionError, NonFiniteError, NonnegOrthant, PathSolution,
                   ProblemConstants, ProductSet, SdviError, SdviProblem, WholeSpace,
                   distance_to_set, product, project)
from .examples import (BridgeParams, CircuitParams, bridge_constants, bridge_vi_oracle,
                       build_bridge, build_circuit, circuit_constants, default_solver_config)
from .sampler import (BrownianPath, Scenario, TimeGrid, coarsen, make_grid, sample_brownian,
                      stream_key)
from .stepper import EulerConfig, PicardConfig, euler_path, interpolate_state, picard_path
from .vi import (AssumptionReport, ViSolveResult, ViSolverConfig, contraction_factor,
                 lipschitz_bound_mprime, optimal_rho, solve_vi, verify_assumptions)

__version__ = "0.1.0"
