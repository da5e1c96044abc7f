"""Conic solver backends."""

from .base import ConicBackend
from .cvxpy import CvxpyBackend


def get_backend(solver: str = "CLARABEL") -> ConicBackend:
    """Backend for the named solver."""
    return CvxpyBackend(solver)


__all__ = ["ConicBackend", "CvxpyBackend", "get_backend"]
