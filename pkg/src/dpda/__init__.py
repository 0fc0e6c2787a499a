"""Distributed primal-dual solvers for composite convex optimization over networks.

Three solvers share one vectorized layout over agents:

* :class:`StaticSolver` for consensus with private conic constraints on a
  fixed graph,
* :class:`DynamicSolver` for the same problem over time-varying graphs with
  inexact gossip averaging,
* :class:`ResourceSolver` for a conic constraint coupling all agents.
"""

from .cones import (
    Cone,
    FreeCone,
    NonnegativeOrthant,
    ProductCone,
    SecondOrderCone,
    ZeroCone,
    cone_distance,
    project_cone,
    project_polar,
)
from .dual_bound import NotSlaterError, SlaterCertificate, compute_r_tilde, dual_radius, slater_certificate
from .dynamic import DynamicSolver, consensus_schedule, dpda_d_run, dpda_d_step, total_communications
from .errors import ConfigError, SolverDivergedError
from .functions import (
    HalfSquaredNormOfSubblock,
    IndicatorBall,
    IndicatorBox,
    L1Norm,
    LeastSquares,
    Quadratic,
    SeparableSum,
    WeightedLinearPlusNonneg,
    Zero,
    ZeroSmooth,
    prox_apply,
    smooth_eval,
)
from .metrics import RunReport, compute_metrics, theta1, theta_dynamic, theta_resource
from .network import (
    Graph,
    MixingProcess,
    algebraic_connectivity,
    generate_graph,
    incidence_apply,
    laplacian_apply,
    metropolis_matrix,
    mixing_constants,
    multi_consensus,
)
from .oracle import CentralSolution, solve_centralized
from .problems import (
    AgentProblem,
    ResourceAgentProblem,
    StepSizes,
    select_stepsizes_dynamic,
    select_stepsizes_resource,
    select_stepsizes_static,
)
from .resource import ResourceSolver, dpda_r_run, dpda_r_step
from .static import StaticSolver, dpda_s_run, dpda_s_step

__version__ = "0.1.0"
