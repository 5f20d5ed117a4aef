"""Three-dimensional slow-fast reduction of the Hodgkin-Huxley equations."""
from .model_core import GateKind, ModelParameters, FullState, ReducedState, rescale_current

__version__ = "0.1.0"

__all__ = ["GateKind", "ModelParameters", "FullState", "ReducedState", "rescale_current",
           "__version__"]
