"""
Sketches A1 = P A: uniform and leverage row extraction, and the Gaussian ensemble.
"""
from typing import Optional

import numpy as np

from .errors import ZeroLeverageRow
from .kernels import as_dense
from .models import Sketch, SketchConfig, SketchStrategy
from .rng import make_rng

# columns of Omega generated per block; fixed so a projection seed always means the same Omega
GAUSSIAN_BLOCK = 4096


def _size(A: np.ndarray, cfg: SketchConfig, size: Optional[int]) -> int:
    m, n = A.shape
    l = cfg.resolve_size(m, n) if size is None else size
    if not n <= l <= m:
        raise ValueError(f"Sketch size l={l} must satisfy n={n} <= l <= m={m}.")
    return l


def sample_rows_uniform(A, cfg: SketchConfig, rng: np.random.Generator, size: Optional[int] = None) -> Sketch:
    """l rows drawn uniformly; i.i.d. with replacement unless cfg.without_replacement."""
    A = as_dense(A)
    m = A.shape[0]
    l = _size(A, cfg, size)
    if cfg.without_replacement:
        indices = rng.choice(m, size=l, replace=False)
    else:
        indices = rng.integers(0, m, size=l)
    return Sketch(a1=A[indices], strategy=SketchStrategy.uniform, indices=indices)


def leverage_probabilities(Q) -> np.ndarray:
    """Row sampling probabilities ||q_i||^2 / n of an orthogonal factor."""
    Q = as_dense(Q, "Q")
    probs = np.einsum("ij,ij->i", Q, Q) / Q.shape[1]
    total = probs.sum()
    if abs(total - 1.0) > 1e-10:
        raise ValueError(f"Leverage probabilities sum to {total!r}; Q is not orthogonal enough.")
    return probs


def sample_rows_leverage(A, Q, cfg: SketchConfig, rng: np.random.Generator, size: Optional[int] = None) -> Sketch:
    """
    l rows drawn i.i.d. with probability ||q_i||^2 / n, each rescaled by 1/||q_i||.

    Q must be an accurate orthogonal factor of A, so this is an oracle strategy for
    validating the leverage-score bound, not a production path.
    """
    A = as_dense(A)
    m = A.shape[0]
    if Q.shape != A.shape:
        raise ValueError(f"Q must have the shape of A {A.shape}, got {Q.shape}.")
    probs = leverage_probabilities(Q)
    l = _size(A, cfg, size)
    indices = rng.choice(m, size=l, replace=True, p=probs)
    picked = probs[indices]
    zero = np.flatnonzero(picked == 0.0)
    if zero.size:
        raise ZeroLeverageRow(int(indices[zero[0]]))
    weights = 1.0 / np.sqrt(picked * Q.shape[1])
    return Sketch(a1=A[indices] * weights[:, None], strategy=SketchStrategy.leverage, indices=indices, weights=weights)


def gaussian_project(A: np.ndarray, l: int, seed: int) -> np.ndarray:
    """Omega @ A for an l x m standard Gaussian Omega regenerated from `seed` block by block."""
    m, n = A.shape
    omega_rng = make_rng(seed)
    a1 = np.zeros((l, n))
    for start in range(0, m, GAUSSIAN_BLOCK):
        stop = min(m, start + GAUSSIAN_BLOCK)
        a1 += omega_rng.standard_normal((l, stop - start)) @ A[start:stop]
    return a1


def sketch_gaussian(A, cfg: SketchConfig, rng: np.random.Generator, size: Optional[int] = None) -> Sketch:
    A = as_dense(A)
    l = _size(A, cfg, size)
    seed = int(rng.integers(0, 2**62))
    return Sketch(a1=gaussian_project(A, l, seed), strategy=SketchStrategy.gaussian, seed=seed)


def draw_sketch(A, cfg: SketchConfig, rng: np.random.Generator, size: Optional[int] = None,
                leverage_q: Optional[np.ndarray] = None) -> Sketch:
    if cfg.strategy == SketchStrategy.uniform:
        return sample_rows_uniform(A, cfg, rng, size)
    if cfg.strategy == SketchStrategy.gaussian:
        return sketch_gaussian(A, cfg, rng, size)
    if leverage_q is None:
        raise ValueError("Leverage sampling needs the orthogonal factor Q (leverage_q).")
    return sample_rows_leverage(A, leverage_q, cfg, rng, size)


def reconstruct(A, sketch: Sketch) -> np.ndarray:
    """Rebuild a1 from A and the sketch provenance."""
    A = as_dense(A)
    if sketch.strategy == SketchStrategy.gaussian:
        return gaussian_project(A, sketch.a1.shape[0], sketch.seed)
    a1 = A[sketch.indices]
    if sketch.weights is not None:
        a1 = a1 * sketch.weights[:, None]
    return a1
