"""covert-uav - joint UAV trajectory, power and jammer design for covert communication."""

__version__ = "0.1.0"

from .main import main

__all__ = ["main"]
