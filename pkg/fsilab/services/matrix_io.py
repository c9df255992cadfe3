import logging
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, sp.spmatrix]


def write_coordinate_matrix(path: Union[str, Path], matrix: ArrayLike) -> int:
    """Write "rows cols nnz" then one "i j value" line per stored entry, 0-based, 17 significant digits.
    
    Returns nnz. Exact zeros of a dense matrix are not stored.
    """
    coo = sp.coo_matrix(matrix)
    coo.sum_duplicates()
    coo.eliminate_zeros()
    if np.iscomplexobj(coo.data):
        raise ValueError("Coordinate dump supports real matrices only")
    rows, cols = coo.shape
    with open(path, "w") as f:
        f.write(f"{rows} {cols} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.17g}\n")
    logger.debug(f"Wrote {rows}x{cols} matrix with {coo.nnz} entries to {path}")
    return int(coo.nnz)


def read_coordinate_matrix(path: Union[str, Path]) -> sp.csr_matrix:
    """Inverse of write_coordinate_matrix."""
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: header must be 'rows cols nnz'")
        rows, cols, nnz = (int(x) for x in header)
        body = np.loadtxt(f, ndmin=2) if nnz else np.zeros((0, 3))
    if body.shape[0] != nnz:
        raise ValueError(f"{path}: header announces {nnz} entries, found {body.shape[0]}")
    return sp.csr_matrix(
        (body[:, 2], (body[:, 0].astype(int), body[:, 1].astype(int))),
        shape=(rows, cols),
    )
