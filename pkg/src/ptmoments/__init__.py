"""Entanglement detection from moments of the partial transpose."""
from .linalg import Bipartition, DensityOperator, PureState, partial_transpose

__all__ = ["Bipartition", "DensityOperator", "PureState", "partial_transpose"]
