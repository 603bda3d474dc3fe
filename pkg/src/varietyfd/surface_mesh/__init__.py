"""Point sets, tangent frames and stencils on almost-smooth surfaces."""

from varietyfd.surface_mesh.chart import SurfaceSingularChart
from varietyfd.surface_mesh.generator import RevolutionGenerator, sample_surface
from varietyfd.surface_mesh.mesh import (
    SurfaceMesh,
    build_surface_mesh,
    stencil_local_coords,
    tangent_basis,
)

__all__ = [
    "RevolutionGenerator",
    "SurfaceMesh",
    "SurfaceSingularChart",
    "build_surface_mesh",
    "sample_surface",
    "stencil_local_coords",
    "tangent_basis",
]
