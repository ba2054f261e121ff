"""Recurrence detection, amplitude amplification and hidden tensor structure for small unitaries."""
from .errors import RecurlabError
from .linalg import UnitaryMatrix, haar_unitary, eigendecompose_unitary, kron, svd

__all__ = ["RecurlabError", "UnitaryMatrix", "haar_unitary", "eigendecompose_unitary", "kron", "svd"]
