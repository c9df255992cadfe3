import logging
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..exceptions import NumericalError

logger = logging.getLogger(__name__)


def factorize(matrix: Any, label: str) -> spla.SuperLU:
    """Sparse LU of a square matrix; failures become NumericalError."""
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as e:
        logger.error(f"Factorization of {label} failed: {e}")
        raise NumericalError(f"Factorization of {label} failed: {e}", {"matrix": label, "shape": list(matrix.shape)})


def solve_factorized(lu: spla.SuperLU, b: np.ndarray) -> np.ndarray:
    """Apply a real factorization to a real or complex right-hand side."""
    if np.iscomplexobj(b):
        return lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    return lu.solve(np.ascontiguousarray(b, dtype=float))
