"""Nine-point Laplace-Beltrami discretisations on almost-smooth surfaces."""

from varietyfd.surface_fd.assemble import assemble_surface, radial_targets
from varietyfd.surface_fd.weights import (
    derivative_weights_2d,
    laplacian_weights_2d,
    quadratic_fit_operator,
)

__all__ = [
    "assemble_surface",
    "derivative_weights_2d",
    "laplacian_weights_2d",
    "quadratic_fit_operator",
    "radial_targets",
]
