"""
Seeded test matrices: prescribed geometric spectrum, adversarial coherence, and the
`.dmat` binary container.
"""
import struct
from pathlib import Path

import numpy as np

from .errors import DmatFormatError
from .kernels import as_dense
from .models import MatrixSpec
from .rng import make_rng

# 16-byte header: 8-byte magic, rows (u32), cols (u32), little-endian; payload is row-major <f8
DMAT_MAGIC = b"DMATF64\x00"
DMAT_HEADER = struct.Struct("<8sII")


def random_orthogonal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Thin orthogonal factor of a standard Gaussian rows x cols matrix (Haar distributed)."""
    if rows < cols:
        raise ValueError(f"random_orthogonal needs rows >= cols, got {rows} x {cols}.")
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    # fixing the signs of R makes the frame Haar distributed instead of QR-convention biased
    return q * np.where(np.diag(r) < 0.0, -1.0, 1.0)


def singular_values(n: int, kappa: float) -> np.ndarray:
    """diag(1, s^(1/(n-1)), ..., s) with s = 1/kappa."""
    if n == 1:
        return np.ones(1)
    return kappa ** (-np.arange(n) / (n - 1))


def synthesize(spec: MatrixSpec) -> np.ndarray:
    """A = U Sigma V^T with ||A||_2 = 1 and cond(A) = kappa."""
    rng = make_rng(spec.seed)
    u = random_orthogonal(spec.m, spec.n, rng)
    v = random_orthogonal(spec.n, spec.n, rng)
    return np.ascontiguousarray((u * singular_values(spec.n, spec.kappa)) @ v.T)


def embedded_identity(m: int, n: int, seed: int = 0, noise: float = 1e-8) -> np.ndarray:
    """[I_n; E] with E tiny Gaussian noise: full rank but maximally coherent."""
    if m < n:
        raise ValueError(f"embedded_identity needs m >= n, got {m} x {n}.")
    A = np.zeros((m, n))
    A[:n] = np.eye(n)
    if m > n:
        A[n:] = noise * make_rng(seed).standard_normal((m - n, n))
    return A


def save_dmat(path, A):
    A = as_dense(A)
    rows, cols = A.shape
    with open(Path(path), "wb") as f:
        f.write(DMAT_HEADER.pack(DMAT_MAGIC, rows, cols))
        f.write(np.ascontiguousarray(A, dtype="<f8").tobytes())


def load_dmat(path) -> np.ndarray:
    with open(Path(path), "rb") as f:
        header = f.read(DMAT_HEADER.size)
        if len(header) != DMAT_HEADER.size:
            raise DmatFormatError(f"{path}: truncated header.")
        magic, rows, cols = DMAT_HEADER.unpack(header)
        if magic != DMAT_MAGIC:
            raise DmatFormatError(f"{path}: bad magic {magic!r}.")
        payload = f.read()
    if len(payload) != 8 * rows * cols:
        raise DmatFormatError(f"{path}: expected {rows * cols} values, found {len(payload) // 8}.")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)
