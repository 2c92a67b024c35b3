"""
Sequential dense kernels every CholeskyQR variant is assembled from.

Matrices are 2-D float64 numpy arrays. Heavy lifting goes to BLAS/LAPACK through
scipy; the one exception is the right triangular solve, which runs an elementwise
back substitution so each output row depends only on its own input row. That keeps
row-block parallel solves bitwise identical to the sequential one.
"""
import numpy as np
from scipy import linalg
from scipy.linalg import blas, lapack

from . import settings
from .errors import CholeskyBreakdown, DimensionMismatch, NoConvergence, SingularTriangular

UNIT_ROUNDOFF = 2.0 ** -52
SVD_MAX_ORDER = 512


def as_dense(A, name: str = "A") -> np.ndarray:
    """Validate a dense algorithm input: 2-D, float64, finite."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got {A.ndim} dimensions.")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf entries.")
    return A


def check_upper(R, name: str = "R") -> np.ndarray:
    R = as_dense(R, name)
    if R.shape[0] != R.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {R.shape}.")
    if np.any(np.tril(R, -1) != 0.0):
        raise ValueError(f"{name} has nonzero entries below the diagonal.")
    return R


def positive_diagonal(R: np.ndarray) -> np.ndarray:
    """Flip row signs so the diagonal is nonnegative (exact: only signs change)."""
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    return R * signs[:, None]


def gram(A) -> np.ndarray:
    """G = A^T A, symmetric to the bit."""
    A = as_dense(A)
    # A.T is Fortran-ordered for a C-ordered A, so dsyrk reads it without a copy
    upper = blas.dsyrk(1.0, A.T, trans=0, lower=0)
    upper = np.triu(upper)
    return upper + np.triu(upper, 1).T


def cholesky_upper(G) -> np.ndarray:
    """Upper Cholesky factor R with R^T R = G and a positive diagonal."""
    G = as_dense(G, "G")
    if G.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"G must be square, got {G.shape}.")
    if not np.allclose(G, G.T, rtol=1e-12, atol=0.0):
        raise ValueError("G must be symmetric.")
    c, info = lapack.dpotrf(G, lower=0, clean=1)
    if info > 0:
        # LAPACK reports the 1-based order of the failing leading minor
        raise CholeskyBreakdown(pivot_index=info - 1)
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}.")
    return np.triu(c)


def _back_substitute_into(A: np.ndarray, R: np.ndarray, out: np.ndarray, chunk: int = None):
    """
    Solve X R = A row by row into `out` (same shape as A).

    Column j of X is (a_j - sum_{k<j} x_k r_kj) / r_jj, accumulated left to right
    with elementwise operations only. Chunking over rows just keeps the working set
    in cache; it cannot change a single bit of the result.
    """
    m, n = A.shape
    chunk = chunk or settings.TRISOLVE_CHUNK
    for start in range(0, m, chunk):
        stop = min(m, start + chunk)
        a = np.asfortranarray(A[start:stop])
        x = np.empty((stop - start, n), order="F")
        tmp = np.empty(stop - start)
        for j in range(n):
            acc = a[:, j].copy()
            for k in range(j):
                np.multiply(x[:, k], R[k, j], out=tmp)
                np.subtract(acc, tmp, out=acc)
            np.divide(acc, R[j, j], out=x[:, j])
        out[start:stop] = x


def right_trisolve(A, R) -> np.ndarray:
    """X with X R = A, by back substitution; R^{-1} is never formed."""
    A = as_dense(A)
    R = check_upper(R)
    if A.shape[1] != R.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[1]} columns but R has order {R.shape[0]}.")
    zero = np.flatnonzero(np.diag(R) == 0.0)
    if zero.size:
        raise SingularTriangular(int(zero[0]))
    X = np.empty(A.shape, order="F")
    _back_substitute_into(A, R, X)
    return X


def qr_rless(A1) -> np.ndarray:
    """R factor of a Householder QR of A1 (l >= n), nonnegative diagonal. Q is never built."""
    A1 = as_dense(A1, "A1")
    l, n = A1.shape
    if l < n:
        raise ValueError(f"A1 needs at least as many rows as columns, got {A1.shape}.")
    r = np.linalg.qr(A1, mode="r")
    return positive_diagonal(np.triu(r[:n]))


def lu_factors(A1):
    """
    Row-partially-pivoted LU of an l x n matrix (l >= n).

    Returns (perm, L, U) with A1[perm] = L @ U, L unit lower trapezoidal (l x n)
    and U upper triangular (n x n).
    """
    A1 = as_dense(A1, "A1")
    l, n = A1.shape
    if l < n:
        raise ValueError(f"A1 needs at least as many rows as columns, got {A1.shape}.")
    lu, piv, info = lapack.dgetrf(A1)
    if info < 0:
        raise ValueError(f"dgetrf rejected argument {-info}.")
    if info > 0:
        raise SingularTriangular(info - 1, "zero pivot column in LU")
    perm = np.arange(l)
    for i, p in enumerate(piv[:n]):
        perm[i], perm[p] = perm[p], perm[i]
    L = np.tril(lu, -1)
    L[:n, :n] += np.eye(n)
    return perm, L, np.triu(lu[:n])


def lu_upper(A1) -> np.ndarray:
    return lu_factors(A1)[2]


def svd_values(M) -> np.ndarray:
    """Singular values in descending order (diagnostics and generation only)."""
    M = as_dense(M, "M")
    if min(M.shape) > SVD_MAX_ORDER:
        raise ValueError(f"svd_values is limited to min(m, n) <= {SVD_MAX_ORDER}, got {M.shape}.")
    try:
        return linalg.svdvals(M, check_finite=False)
    except linalg.LinAlgError as e:
        raise NoConvergence(f"SVD did not converge: {e}") from e
