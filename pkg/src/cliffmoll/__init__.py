"""Clifford-valued fields: mollification, smooth approximation, and Dirac-type boundary value problems."""

__version__ = "0.1.0"

from .algebra import Blade, GradientPotential, Multivector, gp, mv_conj, mv_mul, vector_embed
from .alexander import AlexanderReport, alexander_check
from .dirac import (CalibrationError, DiracConfig, apply_dirac, calibrate_kernel, cauchy_kernel,
                    check_regular, kernel_field)
from .grid import (Ball, BoundaryMesh, Box, CliffordField, Domain, EmptyDomainError, FieldFormatError, Grid,
                   ball_domain, boundary_mesh, box_domain, build_grid, constant_field, read_field,
                   sample_field, shrink_domain, write_field)
from .integrals import (BoundaryData, SolveReport, borel_pompeiu_residual, boundary_data, cauchy_integral,
                        solve_bvp, solve_nhbvp, teodorescu, trace_from_field)
from .mollify import (SmoothApproxError, UnderResolvedError, global_smooth_approx, layer_decomposition,
                      mollify_clifford, mollify_scalar, partition_of_unity, phi)
from .norms import NormSpec, StencilError, holder_seminorm, lp_norm, sobolev_norm, sup_norm

__all__ = [
    "AlexanderReport", "Ball", "Blade", "BoundaryData", "BoundaryMesh", "Box", "CalibrationError",
    "CliffordField", "DiracConfig", "Domain", "EmptyDomainError", "FieldFormatError", "GradientPotential",
    "Grid", "Multivector", "NormSpec", "SmoothApproxError", "SolveReport", "StencilError",
    "UnderResolvedError", "alexander_check", "apply_dirac", "ball_domain", "borel_pompeiu_residual",
    "boundary_data", "boundary_mesh", "box_domain", "build_grid", "calibrate_kernel", "cauchy_integral",
    "cauchy_kernel", "check_regular", "constant_field", "global_smooth_approx", "gp", "holder_seminorm",
    "kernel_field", "layer_decomposition", "lp_norm", "mollify_clifford", "mollify_scalar", "mv_conj",
    "mv_mul", "partition_of_unity", "phi", "read_field", "sample_field", "shrink_domain", "sobolev_norm",
    "solve_bvp", "solve_nhbvp", "sup_norm", "teodorescu", "trace_from_field", "vector_embed", "write_field",
]
