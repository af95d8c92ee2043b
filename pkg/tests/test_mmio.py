import numpy as np
import pytest
import scipy.sparse as sp

from subspace_opt.errors import InvalidInput
from subspace_opt.kernels import SparseMatrix
from subspace_opt.mmio import read_matrix, read_vector, write_matrix, write_vector


def test_dense_round_trip(tmp_path):
    A = np.random.default_rng(0).standard_normal((5, 3))
    write_matrix(tmp_path / "a.mtx", A)
    assert np.array_equal(read_matrix(tmp_path / "a.mtx"), A)


def test_sparse_round_trip_keeps_exact_name(tmp_path):
    M = sp.random(20, 7, density=0.2, random_state=1, format="csr")
    write_matrix(tmp_path / "m.dat", SparseMatrix.from_scipy(M))
    assert (tmp_path / "m.dat").exists()
    B = read_matrix(tmp_path / "m.dat")
    assert isinstance(B, SparseMatrix)
    assert np.array_equal(B.to_dense(), M.toarray())


def test_coordinate_indices_are_one_based(tmp_path):
    p = tmp_path / "c.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real general\n2 3 1\n1 3 5.0\n")
    B = read_matrix(p).to_dense()
    assert B[0, 2] == 5.0 and np.count_nonzero(B) == 1


def test_vector_formats(tmp_path):
    x = np.array([1.5, -2.0, 3.25])
    write_vector(tmp_path / "x.vec", x)
    assert np.array_equal(read_vector(tmp_path / "x.vec"), x)
    (tmp_path / "plain.txt").write_text("1 2\n3\n")
    assert np.array_equal(read_vector(tmp_path / "plain.txt"), [1, 2, 3])


def test_missing_header_rejected(tmp_path):
    p = tmp_path / "bad.mtx"
    p.write_text("2 2 1\n1 1 1.0\n")
    with pytest.raises(InvalidInput):
        read_matrix(p)
