"""Isogeometric solver for frictionless contact with a rigid plane.

NURBS discretizations of an elastic body (linear or Neo-Hookean) in
unilateral contact with a rigid half-space, formulated as an augmented
Lagrangian with a degree p-2 multiplier space on the contact boundary and
solved by a semismooth (active-set) Newton method. The :mod:`bench`
module reproduces Hertz-contact convergence studies; ``iga-contact run``
is the command-line entry point.
"""

__version__ = "0.1.0"

from .bench import (  # noqa: F401
    BenchmarkResult,
    HertzAnalytic,
    Scenario,
    error_norms,
    fit_rate,
    get_scenario,
    hertz_solution,
    run_benchmark,
)
from .contact import (  # noqa: F401
    ActiveSet,
    AugmentedParams,
    RigidPlane,
    build_projection_data,
)
from .elasticity import Material  # noqa: F401
from .geometry import (  # noqa: F401
    BoundaryFace,
    NurbsPatch,
    make_box,
    make_octant_sphere,
    make_quarter_disc,
)
from .solver import (  # noqa: F401
    NewtonConfig,
    NonConvergenceError,
    SolverError,
    solve_linear_contact,
    solve_nonlinear_contact,
)
from .spaces import DualSpace, PrimalSpace, build_dual, build_primal  # noqa: F401
from .splines import KnotVector, TensorBasis  # noqa: F401
