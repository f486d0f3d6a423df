"""Run-time interval observers for dynamical systems with embedded feedforward networks."""

from ._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "cli", "config", "expr", "lp", "monitor", "nn", "plant", "synthesis"]
