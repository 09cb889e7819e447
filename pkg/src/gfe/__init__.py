"""Geodesic finite elements for maps into spheres, hyperbolic space and R^n."""
from .errors import GfeError
from .interpolation import GfeFunction, GfeVectorField, evaluate, evaluate_differential, geodesic_interpolate
from .manifold import Euclidean, Hyperbolic2, Sphere2, get_manifold
from .mesh import build_uniform_mesh, refine

__version__ = "0.1.0"

__all__ = [
    "Euclidean",
    "GfeError",
    "GfeFunction",
    "GfeVectorField",
    "Hyperbolic2",
    "Sphere2",
    "build_uniform_mesh",
    "evaluate",
    "evaluate_differential",
    "geodesic_interpolate",
    "get_manifold",
    "refine",
]
