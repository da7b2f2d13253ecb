"""Minimal reverse-mode tensor engine."""

from . import ops
from . import kernels
from .kernels import BACKEND, set_threads
from .tensor import DomainError, Graph, ShapeError, Tensor

__all__ = ["BACKEND", "DomainError", "Graph", "ShapeError", "Tensor", "ops", "set_threads"]
