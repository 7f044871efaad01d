"""Local quantum estimation of optomechanical coupling strengths."""

__version__ = "0.1.0"

from .estimation import EstimationReport, estimate, local_qfim, qfim, quadrature_fi  # noqa: E402
from .model import REFERENCE_PARAMS, PhysicalParams, steady_state  # noqa: E402

__all__ = [
    "EstimationReport",
    "REFERENCE_PARAMS",
    "PhysicalParams",
    "__version__",
    "estimate",
    "local_qfim",
    "qfim",
    "quadrature_fi",
    "steady_state",
]
