"""Finite-difference discretisations of ``-Delta u + c u = f`` on curves."""

from varietyfd.curve_fd.global_scheme import GlobalParam, assemble_global, metric_from_param
from varietyfd.curve_fd.local_scheme import assemble_local_tangential, tangential_coordinates
from varietyfd.curve_fd.reference import locate_parameters, periodic_lagrange
from varietyfd.curve_fd.stencils import fornberg_weights, stencil_weights_1d
from varietyfd.curve_fd.system import DiscreteSystem, Solution, solve_cyclic_banded, solve_system

__all__ = [
    "DiscreteSystem",
    "GlobalParam",
    "Solution",
    "assemble_global",
    "assemble_local_tangential",
    "fornberg_weights",
    "locate_parameters",
    "metric_from_param",
    "periodic_lagrange",
    "solve_cyclic_banded",
    "solve_system",
    "stencil_weights_1d",
    "tangential_coordinates",
]
