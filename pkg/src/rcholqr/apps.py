"""
Applications of the randomized factorization: randomized SVD with power iteration
(pluggable orthogonalizer) and the sketch-preconditioned least-squares solver.
"""
import time
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import io, sparse
from scipy.linalg import cho_solve, solve_triangular

from .cholqr import cholesky_qr2, householder_qr, rqr_cholesky_qr, sketch_preconditioner
from .errors import DimensionMismatch, MatrixMarketFormatError
from .kernels import as_dense, cholesky_upper, gram, qr_rless, right_trisolve
from .log_context import log_to_active_run
from .models import RSVDResult, SketchConfig, SketchStrategy
from .rng import derive_seed, make_rng


class Orthogonalizer(str, Enum):
    qr = "qr"            # HouseholderQR
    rqr = "rqr"          # rQR-CholeskyQR
    cholqr2 = "cholqr2"


def as_csr(A) -> sparse.csr_matrix:
    """Canonical CSR (sorted, duplicate-free indices, float64 values)."""
    M = sparse.csr_matrix(A, dtype=np.float64)
    M.sum_duplicates()
    M.sort_indices()
    if not np.all(np.isfinite(M.data)):
        raise ValueError("Sparse matrix contains NaN or Inf entries.")
    return M


def read_matrix_market(path) -> sparse.csr_matrix:
    """Real or integer coordinate-format Matrix Market file (1-based indices) as CSR."""
    path = Path(path)
    # scipy reports a missing file as a missing banner
    if not path.is_file():
        raise FileNotFoundError(f"No such Matrix Market file: {path}")
    try:
        rows, cols, entries, fmt, fld, symmetry = io.mminfo(str(path))
    except ValueError as e:
        raise MatrixMarketFormatError(f"{path}: {e}") from e
    if fmt != "coordinate":
        raise MatrixMarketFormatError(f"{path}: only the coordinate format is supported, got '{fmt}'.")
    if fld not in ("real", "integer", "pattern"):
        raise MatrixMarketFormatError(f"{path}: unsupported field '{fld}'.")
    try:
        M = io.mmread(str(path))
    except ValueError as e:
        raise MatrixMarketFormatError(f"{path}: {e}") from e
    return as_csr(M)


def random_sparse(m: int, n: int, density: float, seed: int) -> sparse.csr_matrix:
    """About density*m*n standard normal entries at uniformly drawn positions (collisions are summed)."""
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}.")
    rng = make_rng(seed)
    nnz = max(1, int(round(density * m * n)))
    rows = rng.integers(0, m, size=nnz)
    cols = rng.integers(0, n, size=nnz)
    vals = rng.standard_normal(nnz)
    return as_csr(sparse.coo_matrix((vals, (rows, cols)), shape=(m, n)))


def gaussian_start(n: int, k: int, seed: int) -> np.ndarray:
    """The n x k starting block X of rsvd_power."""
    return make_rng(seed).standard_normal((n, k))


def orthogonalize(Y: np.ndarray, orth: Orthogonalizer, seed: int = 0,
                  strategy: SketchStrategy = SketchStrategy.gaussian) -> np.ndarray:
    """
    Orthonormal basis of range(Y). Power-iterated blocks of sparse matrices are
    concentrated on few rows, which uniform row sampling tends to miss, so the
    rQR orthogonalizer sketches with a Gaussian projection unless told otherwise.
    """
    orth = Orthogonalizer(orth)
    if orth == Orthogonalizer.qr:
        return householder_qr(Y, r_less=True).q
    if orth == Orthogonalizer.cholqr2:
        return cholesky_qr2(Y, r_less=True).q
    m, k = Y.shape
    return rqr_cholesky_qr(Y, SketchConfig(strategy=strategy, size=min(m, 2 * k), seed=seed), r_less=True).q


def _finish(A, Y: np.ndarray, iterations: int, orth_times) -> RSVDResult:
    # SVD of the small n x k matrix A^T Y = U~ S V^T, then U = A U~ left unnormalized
    u_tilde, sigma, _ = np.linalg.svd(np.asarray(A.T @ Y), full_matrices=False)
    return RSVDResult(u=np.asarray(A @ u_tilde), sigma=sigma, v=u_tilde, iterations=iterations,
                      per_iteration_orth_time=list(orth_times))


def rsvd_power(A, k: int, K: int, orth: Orthogonalizer = Orthogonalizer.qr, seed: int = 0,
               strategy: SketchStrategy = SketchStrategy.gaussian) -> RSVDResult:
    """
    Rank-k randomized SVD with K rounds of power iteration.

    per_iteration_orth_time[0] is the initial orthogonalization and entry i the two
    orthogonalizations of round i, in seconds. rQR-CholeskyQR draws every sketch
    from a fresh seed derived from (seed, call counter). `strategy` picks its sketch
    (uniform or gaussian).
    """
    A = as_csr(A)
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise DimensionMismatch(f"Rank k={k} must satisfy 1 <= k <= min(m, n)={min(m, n)}.")
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}.")
    orth = Orthogonalizer(orth)
    calls = 0

    def timed_orth(Y):
        nonlocal calls
        start = time.perf_counter()
        Q = orthogonalize(Y, orth, derive_seed(seed, calls), strategy)
        calls += 1
        return Q, time.perf_counter() - start

    Y, t0 = timed_orth(np.asarray(A @ gaussian_start(n, k, seed)))
    orth_times = [t0]
    for i in range(K):
        Z, t1 = timed_orth(np.asarray(A.T @ Y))
        Y, t2 = timed_orth(np.asarray(A @ Z))
        orth_times.append(t1 + t2)
        log_to_active_run(f"[RSVD] {orth.value} iteration {i + 1}/{K}: orth {1e3 * (t1 + t2):.2f} ms")
    return _finish(A, Y, K, orth_times)


def rsvd_vanilla(A, k: int, seed: int = 0, omega: Optional[np.ndarray] = None) -> RSVDResult:
    """Y = A^T Omega, SVD of Y = U~ S V^T, U = A U~; Omega is m x k Gaussian unless given."""
    A = as_csr(A)
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise DimensionMismatch(f"Rank k={k} must satisfy 1 <= k <= min(m, n)={min(m, n)}.")
    if omega is None:
        omega = make_rng(seed).standard_normal((m, k))
    elif omega.shape != (m, k):
        raise DimensionMismatch(f"Omega must be {m} x {k}, got {omega.shape}.")
    return _finish(A, omega, 0, [])


def _check_ls(A, b):
    A = as_dense(A)
    b = np.asarray(b, dtype=np.float64).ravel()
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"b has length {b.shape[0]} but A has {A.shape[0]} rows.")
    return A, b


def ls_solve(A, b, cfg: SketchConfig = None) -> np.ndarray:
    """
    min ||Ax - b|| through the preconditioned normal equations: R1 from a sketch of A,
    B = A R1^-1, y = (B^T B)^-1 B^T b by Cholesky, x = R1^-1 y.
    """
    A, b = _check_ls(A, b)
    R1, _, _ = sketch_preconditioner(A, qr_rless, cfg or SketchConfig())
    B = right_trisolve(A, R1)
    C = cholesky_upper(gram(B))
    y = cho_solve((C, False), B.T @ b)
    return solve_triangular(R1, y, lower=False)


def normal_equations_solve(A, b) -> np.ndarray:
    """x = (A^T A)^-1 A^T b by Cholesky with no preconditioning."""
    A, b = _check_ls(A, b)
    C = cholesky_upper(gram(A))
    return cho_solve((C, False), A.T @ b)
