"""CLF-CBF quadratic-program controllers, their equilibria, and a Lyapunov-shaping fix."""

from .equilibria import (
    EquilibriumReport,
    find_boundary_equilibria,
    find_interior_equilibria,
    numeric_closed_loop_jacobian,
    stability_tangent_test,
)
from .errors import ClfCbfError, ConfigError, DegenerateQP, InfeasibleQP
from .models import CircularObstacleCbf, ClassKappa, ControlAffineSystem, QuadraticClf, builtin_system
from .nominal import NominalController, NominalGains, solve_nominal
from .qp import Constraint, QpProblem, QpSolution, solve_active_set
from .scenario import Scenario
from .shaped import ShapedController, ShapedGains, ShapedState, solve_shaped
from .simulate import SimConfig, TrajectoryRecord, simulate_nominal, simulate_shaped, sweep

__version__ = "0.1.0"
