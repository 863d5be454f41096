"""livetalk: a live Smalltalk-style runtime with hosted collector policies."""

from .kernel.bootstrap import boot
from .memory import GCConfig
from .runtime import Runtime

__version__ = "0.1.0"
__all__ = ["boot", "GCConfig", "Runtime", "__version__"]
