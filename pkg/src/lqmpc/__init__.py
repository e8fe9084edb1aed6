"""Performance-bound analysis for linear-quadratic MPC.

Riccati/Bellman operator machinery, computable suboptimality bounds,
amplified terminal-cost design, polytopic invariant sets, a dense QP
solver with condensed MPC, closed-loop studies, and a CLI harness.
"""

from .matcore import (
    WeightedNorm,
    build_weighted_norm,
    induced_two_norm,
    is_stable,
    min_eigenvalue,
    psd_order_holds,
    solve_dlyap,
    spectral_radius,
    symmetrize,
)
from .riccati import (
    GainPolicy,
    LqSystem,
    bellman_op,
    closed_loop_cost,
    greedy_gain,
    in_region_of_decreasing,
    iterate_bellman,
    policy_bellman_op,
    solve_dare,
    zeta_dare,
)
from .bounds import (
    BoundsReport,
    actual_gap,
    alpha_const,
    beta_const,
    contraction_bound,
    full_report,
    gap_of_policy,
    monotone_bound,
    newton_bound,
    newton_gamma,
)
from .polytope import (
    HPolytope,
    LpResult,
    bounding_box,
    contains,
    lp_solve,
    maximal_invariant_set,
    remove_redundancy,
    sample_interior,
    vertices_2d,
    volume,
    volume_mc,
)
from .qp import QpProblem, QpSolution, condense_mpc, solve_qp
from .cmpc import (
    ConstrainedProblem,
    CostMapGrid,
    MpcController,
    MpcStep,
    TerminalDesign,
    approx_optimal_cost,
    bellman_apply,
    boundary_points,
    closed_loop_cost_fn,
    feasible_region_grid,
    mpc_policy,
    suboptimality_map,
)
from .scenarios import Scenario, ScenarioError, builtin_names, load_scenario

__version__ = "1.0.0"
