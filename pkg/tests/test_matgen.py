import numpy as np
import pytest
from pydantic import ValidationError

from rcholqr.errors import DmatFormatError
from rcholqr.matgen import DMAT_HEADER, DMAT_MAGIC, embedded_identity, load_dmat, random_orthogonal, save_dmat
from rcholqr.models import MatrixSpec
from rcholqr.rng import make_rng


@pytest.mark.parametrize("kappa", [1.0, 1e3, 1e6])
def test_synthesize_spectrum(make_matrix, kappa):
    A = make_matrix(500, 10, kappa, seed=7)
    s = np.linalg.svd(A, compute_uv=False)
    assert A.shape == (500, 10)
    assert abs(s[0] - 1.0) <= 1e-12
    assert abs(s[0] / s[-1] - kappa) <= 1e-8 * kappa


def test_synthesize_is_seeded(make_matrix):
    assert np.array_equal(make_matrix(200, 5, 1e4, seed=1), make_matrix(200, 5, 1e4, seed=1))
    assert not np.array_equal(make_matrix(200, 5, 1e4, seed=1), make_matrix(200, 5, 1e4, seed=2))


def test_single_column(make_matrix):
    A = make_matrix(50, 1, 1.0)
    assert abs(np.linalg.norm(A) - 1.0) <= 1e-14


def test_matrix_spec_validation():
    with pytest.raises(ValidationError):
        MatrixSpec(m=5, n=10, kappa=10.0)
    with pytest.raises(ValidationError):
        MatrixSpec(m=10, n=5, kappa=0.5)


def test_random_orthogonal():
    Q = random_orthogonal(300, 20, make_rng(4))
    assert np.max(np.abs(Q.T @ Q - np.eye(20))) <= 1e-13
    with pytest.raises(ValueError):
        random_orthogonal(3, 4, make_rng(0))


def test_embedded_identity():
    A = embedded_identity(1000, 10)
    assert np.array_equal(A[:10], np.eye(10))
    assert 0.0 < np.max(np.abs(A[10:])) <= 1e-6
    assert not np.any(embedded_identity(1000, 10, noise=0.0)[10:])


def test_dmat_round_trip(tmp_path, make_matrix):
    A = make_matrix(37, 4, 1e8, seed=9)
    path = tmp_path / "a.dmat"
    save_dmat(path, A)
    raw = path.read_bytes()
    assert raw[:8] == DMAT_MAGIC
    assert len(raw) == DMAT_HEADER.size + 8 * 37 * 4
    assert np.array_equal(load_dmat(path), A)


def test_dmat_format_errors(tmp_path):
    short = tmp_path / "short.dmat"
    short.write_bytes(b"DMAT")
    with pytest.raises(DmatFormatError):
        load_dmat(short)

    magic = tmp_path / "magic.dmat"
    magic.write_bytes(DMAT_HEADER.pack(b"NOTADMAT", 1, 1) + np.zeros(1).tobytes())
    with pytest.raises(DmatFormatError):
        load_dmat(magic)

    length = tmp_path / "length.dmat"
    length.write_bytes(DMAT_HEADER.pack(DMAT_MAGIC, 2, 2) + np.zeros(3).tobytes())
    with pytest.raises(DmatFormatError):
        load_dmat(length)
