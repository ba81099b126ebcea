"""Numerical laboratory for elliptic systems with rough coefficients on Lipschitz domains."""
from .coefficients import (CarlesonDensity, CoefficientField, EllipticityReport, carleson_density,
                           identity_tensor, lame_admissibility, lame_tensor, legendre_constants,
                           normalize_a00, sup_norm, zero_top_row)
from .config import ScenarioConfig, load_config
from .diagnostics import (AveragedField, BoundaryFunctional, CarlesonReport, caccioppoli_ratio,
                          carleson_embedding_ratio, carleson_norm, good_lambda_counts, hl_maximal,
                          l2_average, level_set, ntmax, ntmax_tilde, poincare_ratio,
                          square_function, stopping_time)
from .errors import *  # noqa: F401,F403
from .grid import (ConeSpec, DomainSpec, GridFunction, build_domain, cone_cells, cone_nodes,
                   dist_to_boundary, strip, surface_ball)
from .kernels import BACKEND
from .pullback import (MollifierSpec, PullbackMap, build_pullback, flatten_problem, mollify_phi,
                       pushforward_coeffs, rho_jacobian, rho_map)
from .scenarios import ScenarioReport, __version__, emit, run
from .solver import (SolveStats, WeakSystem, assemble, height_sweep, manufactured_residual,
                     solve_dirichlet, solve_strip)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
