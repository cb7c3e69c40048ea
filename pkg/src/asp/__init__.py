"""Agentic scene policies: open-vocabulary object maps, an agent tool layer,
affordance-driven skills and affordance-guided navigation, exercised in a
deterministic kinematic simulator."""

from .errors import ASPError
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["ASPError", "KERNEL_BACKEND", "__version__"]
