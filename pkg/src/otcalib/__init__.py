"""Transport-induced pseudo-Riemannian geometry: metrics, calibrations, mass and curvature checks."""

from .cost import CostField, eval_cost, get_cost, mixed_hessian
from .domain import DensitySpec, DomainSpec, gaussian, uniform
from .errors import OTCalibError
from .geometry import MetricAtPoint, TangentPlane, base_metric, conformal_metric
from .graph import GraphSurface
from .transport import TransportMap, gaussian_map, solve_1d_monotone, solve_discrete

__version__ = "0.1.0"

__all__ = [
    "CostField", "DensitySpec", "DomainSpec", "GraphSurface", "MetricAtPoint", "OTCalibError",
    "TangentPlane", "TransportMap", "base_metric", "conformal_metric", "eval_cost", "gaussian",
    "gaussian_map", "get_cost", "mixed_hessian", "solve_1d_monotone", "solve_discrete", "uniform",
    "__version__",
]
