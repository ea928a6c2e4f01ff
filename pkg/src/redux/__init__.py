"""Offline/online model-order reduction for a nonlinear parametric heat-conduction
benchmark: finite-element truth solver, snapshot POD, Galerkin reduced basis,
DEIM, hyper-reduction and Monte Carlo uncertainty quantification."""

from .deim import collateral_basis, deim_offline, deim_solve, training_matrix
from .errors import ReduxError
from .fem import fe_solve, temperature
from .galerkin_rb import rb_solve
from .hyper_reduction import hr_offline, hr_solve
from .mesh import Mesh, generate_plate_with_hole, generate_unit_square
from .model import ParameterVector
from .pod import collect_snapshots, parameter_grid, pod_basis

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "ParameterVector",
    "ReduxError",
    "collateral_basis",
    "collect_snapshots",
    "deim_offline",
    "deim_solve",
    "fe_solve",
    "generate_plate_with_hole",
    "generate_unit_square",
    "hr_offline",
    "hr_solve",
    "parameter_grid",
    "pod_basis",
    "rb_solve",
    "temperature",
    "training_matrix",
]
