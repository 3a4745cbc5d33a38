"""L2-1sigma finite element solver for time-fractional nonlocal diffusion.

Solves ``D_t^alpha u - a(l(u)) Laplacian(u) = f`` with ``l(u)`` the spatial
integral of ``u``, using graded time meshes, P1 elements and Newton's method
on a sparse bordered system.
"""

from .fem import assemble, build_mesh, error_norms, l_functional, load_vector, ritz_project
from .fractime import L21SigmaOperator, PCoefficients, TimeMesh, build_graded_mesh
from .harness import ConvergenceReport, StudyConfig, diagnose, observed_order, run_study
from .linalg import BorderedSystem, matvec, solve_bordered, solve_spd
from .problems import ProblemSpec, caputo_power, example1, example2, get_problem
from .stepper import SolverConfig, SolverError, SolverRun, run

__version__ = "0.1.0"
