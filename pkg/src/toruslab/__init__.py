"""toruslab: numerical laboratory for geodesic flows on Riemannian 2-tori."""

from .metric import MetricSpec, TrigPoly, TrigPoly2D, build_metric, load_metric
from .flow import PhasePoint, Trajectory, integrate, unit_phase_point

__version__ = "0.1.0"

__all__ = [
    "MetricSpec",
    "TrigPoly",
    "TrigPoly2D",
    "build_metric",
    "load_metric",
    "PhasePoint",
    "Trajectory",
    "integrate",
    "unit_phase_point",
    "__version__",
]
