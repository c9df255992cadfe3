import numpy as np
import pytest
import scipy.sparse as sp

from fsilab.services.matrix_io import read_coordinate_matrix, write_coordinate_matrix


def test_header_and_entries(tmp_path):
    path = tmp_path / "m.txt"
    nnz = write_coordinate_matrix(path, np.array([[0.0, 1.5], [-2.0, 0.0], [0.0, 0.1]]))
    assert nnz == 3
    lines = path.read_text().splitlines()
    assert lines[0] == "3 2 3"
    assert lines[1:] == ["0 1 1.5", "1 0 -2", "2 1 0.10000000000000001"]


def test_round_trip_is_exact(tmp_path, rng):
    matrix = sp.random(30, 20, density=0.2, random_state=np.random.RandomState(5), format="csr")
    matrix.data = rng.standard_normal(matrix.nnz) * 1e-7
    path = tmp_path / "m.txt"
    write_coordinate_matrix(path, matrix)
    back = read_coordinate_matrix(path)
    assert back.shape == matrix.shape
    assert (back != matrix).nnz == 0


def test_empty_matrix(tmp_path):
    path = tmp_path / "empty.txt"
    assert write_coordinate_matrix(path, sp.csr_matrix((4, 5))) == 0
    back = read_coordinate_matrix(path)
    assert back.shape == (4, 5) and back.nnz == 0


def test_complex_matrix_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_coordinate_matrix(tmp_path / "c.txt", np.array([[1.0 + 1.0j]]))


def test_malformed_files_rejected(tmp_path):
    bad_header = tmp_path / "h.txt"
    bad_header.write_text("3 3\n0 0 1.0\n")
    with pytest.raises(ValueError):
        read_coordinate_matrix(bad_header)
    short = tmp_path / "s.txt"
    short.write_text("3 3 2\n0 0 1.0\n")
    with pytest.raises(ValueError):
        read_coordinate_matrix(short)
