"""Chern-Simons Higgs equation for the p-Laplacian on connected finite graphs.

Solves ``Delta_p u = lam e^u (e^u - 1) + f`` with explicit a priori bounds,
upper/lower-solution iteration, constrained minimisation, homotopy
continuation and Brouwer degree computation.
"""

from ._kernels import BACKEND
from .degree import (
    DegreeReport,
    FFamily,
    GFamily,
    NonRegularError,
    det_sign,
    global_degree,
    jacobian_F,
    jacobian_G,
    jacobian_p_laplacian,
    local_degree,
    spectral_gap_check,
    spectrum,
)
from .estimates import (
    AprioriBounds,
    HypothesisError,
    ProblemData,
    check_bound,
    compute_bounds,
    small_eps_bounds,
)
from .graph import (
    DegenerateWeightError,
    Exponent,
    Graph,
    GraphError,
    PoincareEstimateError,
    complete_graph,
    cycle_graph,
    f_weighted_mean,
    gradient_p_energy,
    integral,
    integration_by_parts_check,
    mean,
    p_laplacian,
    path_graph,
    poincare_constant,
    random_connected_graph,
)
from .solvers import (
    Bracket,
    SolveReport,
    SolverConfig,
    SolverError,
    constrained_minimize,
    construct_bracket,
    csh_residual,
    eq33_residual,
    follow_main_branch,
    homotopy_track,
    minimize_small_eps_energy,
    monotone_iterate,
    multistart_solutions,
    newton_solve,
    small_eps_multistart,
    solve_csh,
    solve_small_eps,
)

__version__ = "0.1.0"
