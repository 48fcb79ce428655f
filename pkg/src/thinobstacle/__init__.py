"""Numerical laboratory for the variable-coefficient thin obstacle problem.

Solves the Signorini problem with W^{1,p} coefficients on the unit ball at
desk scale and measures the quantitative structure of its solutions: growth
and regularity exponents, vanishing orders, blow-up limits, leading-order
expansions at regular contact-boundary points, contact-boundary geometry
(graph, Lipschitz/Hoelder norms, Reifenberg flatness), comparison barriers
over Whitney decompositions, and the degenerate splitting equation.
"""

from .grid import (
    Cone,
    Grid,
    GridSpec,
    SlitSet,
    annulus_norm,
    build_grid,
    cone_membership,
    distance_field,
    flat_slit,
    graph_slit,
    hausdorff_distance,
    make_slit,
)
from .coefficients import (
    AssumptionReport,
    Inhomogeneity,
    MetricField,
    ObstacleField,
    check_assumptions,
    grad_lp_norm,
    make_identity,
    make_perturbed,
    reflect_extend,
    restrict_half,
)
from .profiles import (
    AsymptoticFrame,
    anisotropic_profile,
    eval_profile,
    frame_at,
    identity_frame,
    model_gradient_scale,
    model_solution,
    normalization_constant,
)
from .solver import (
    DiscreteOperator,
    ProblemSpec,
    SolutionField,
    SolveReport,
    assemble_operator,
    compute_energy,
    flux_jump,
    normalize_interior,
    solve_linear,
    solve_psor,
    subtract_obstacle,
    upper_flux,
)

__version__ = "0.1.0"
