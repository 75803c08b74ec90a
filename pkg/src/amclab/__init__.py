"""Numerical laboratory for generalized affine mean curvature equations.

Solves and cross-verifies the second boundary value problem

    U^ij w_ij = f,   w = G'(det D^2 u)   in Omega,
    u = phi,         w = psi             on the boundary,

for a strictly concave potential G, on uniformly convex planar domains,
with closed-form radial solutions and Legendre-transform duality as the
independent oracles.
"""

from .errors import (
    AmcError, BarrierError, ConfigError, ConvergenceError, DomainError,
    EllipticityError, GridError, RangeError, ResolutionError,
)
from .gfun import GFunction, ConditionReport, check_conditions, eval_bundle, invert_w
from .geometry import ConvexDomain, DiscreteDomain, Barrier, boundary_geometry, build_barrier, build_grid
from .discrete_ops import (
    ScalarField, TensorField, apply_L, differentiate, lp_norm, norms, sobolev4_mass,
)
from .radial import RadialSolution, blowup_profile, make_case, radial_operator

__version__ = "0.1.0"
