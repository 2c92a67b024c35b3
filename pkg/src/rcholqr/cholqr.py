"""
The CholeskyQR family: CholeskyQR, CholeskyQR2, shifted CholeskyQR3 and the
sketch-preconditioned framework with its LU and QR preconditioners.

Every Grammian, triangular solve and sketch draw goes through an engine. The
sequential engine calls the kernels directly; parexec.ParallelEngine swaps in the
row-block implementations without touching the algorithms.
"""
import time
from typing import Callable, List, Optional

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from .diagnostics import cond_estimate
from .errors import CholeskyBreakdown, CholQRError, SingularTriangular
from .kernels import UNIT_ROUNDOFF, as_dense, cholesky_upper, gram, lu_upper, qr_rless, right_trisolve
from .log_context import log_retry_attempt, log_to_active_run
from .models import (
    Method,
    QRFactorization,
    ShiftKind,
    ShiftMode,
    Sketch,
    SketchConfig,
    SketchStrategy,
    Stage,
    StageName,
    StageReport,
)
from .rng import make_rng
from .sketch import draw_sketch

# R~ is degenerate when a diagonal entry falls below this fraction of the largest.
# Sketches of matrices with cond(A) near 1e15 legitimately reach ratios around 1e-16.
DEGENERATE_RATIO = 1e-20

Preconditioner = Callable[[np.ndarray], np.ndarray]


class SequentialEngine:
    """Kernel dispatch for single-process runs."""
    p = 1

    def gram(self, A: np.ndarray) -> np.ndarray:
        return gram(A)

    def trisolve(self, A: np.ndarray, R: np.ndarray) -> np.ndarray:
        return right_trisolve(A, R)

    def draw_sketch(self, A, cfg: SketchConfig, rng, size: int, leverage_q=None) -> Sketch:
        return draw_sketch(A, cfg, rng, size, leverage_q)


SEQUENTIAL = SequentialEngine()


def _check_tall(A) -> np.ndarray:
    A = as_dense(A)
    m, n = A.shape
    if m < n:
        raise ValueError(f"CholeskyQR needs a tall matrix (m >= n), got {m} x {n}.")
    return A


def _cond_or_none(X: np.ndarray) -> Optional[float]:
    try:
        return cond_estimate(X)
    except (CholQRError, ValueError):
        return None


def _cholesky_pass(A: np.ndarray, engine, diagnostics: bool, shift: float = 0.0):
    """One Grammian -> Cholesky -> solve pass. Returns (Q, R, Stage)."""
    start = time.perf_counter()
    G = engine.gram(A)
    if shift:
        G[np.diag_indices_from(G)] += shift
    try:
        R = cholesky_upper(G)
    except CholeskyBreakdown as e:
        log_to_active_run(f"[BREAKDOWN] Cholesky pivot {e.pivot_index} nonpositive (shift={shift:g})")
        raise
    Q = engine.trisolve(A, R)
    elapsed = (time.perf_counter() - start) * 1e3
    stage = Stage(
        name=StageName.shifted_cholesky if shift else StageName.cholesky_qr,
        shift=shift or None,
        cond_estimate=_cond_or_none(Q) if diagnostics else None,
        wall_ms=elapsed,
    )
    return Q, R, stage


def _factorization(Q, R, stages: List[Stage], r_less: bool) -> QRFactorization:
    return QRFactorization(q=Q, r=None if r_less else R, report=StageReport(stages=stages, r_less=r_less))


def cholesky_qr(A, *, engine=None, diagnostics: bool = False, r_less: bool = False) -> QRFactorization:
    """Q = A R^-1 with R the Cholesky factor of A^T A. Orthogonality degrades like cond(A)^2 u."""
    A = _check_tall(A)
    Q, R, stage = _cholesky_pass(A, engine or SEQUENTIAL, diagnostics)
    return _factorization(Q, R, [stage], r_less)


def cholesky_qr2(A, *, engine=None, diagnostics: bool = False, r_less: bool = False) -> QRFactorization:
    """Two chained CholeskyQR passes; R = R2 R1."""
    A = _check_tall(A)
    engine = engine or SEQUENTIAL
    Q1, R1, s1 = _cholesky_pass(A, engine, diagnostics)
    Q, R2, s2 = _cholesky_pass(Q1, engine, diagnostics)
    return _factorization(Q, None if r_less else R2 @ R1, [s1, s2], r_less)


def theory_shift(A: np.ndarray) -> float:
    """11 (mn + n(n+1)) u ||A||_F^2, with ||A||_F^2 standing in for ||A||_2^2."""
    m, n = A.shape
    return 11.0 * (m * n + n * (n + 1)) * UNIT_ROUNDOFF * float(np.linalg.norm(A)) ** 2


def shifted_cholesky_qr3(A, shift_mode: ShiftMode = None, *, engine=None, diagnostics: bool = False,
                         r_less: bool = False) -> QRFactorization:
    """Cholesky of A^T A + eps I, then CholeskyQR2 on the result; R = R3 R2 R1."""
    A = _check_tall(A)
    engine = engine or SEQUENTIAL
    shift_mode = shift_mode or ShiftMode.theory()
    shift = theory_shift(A) if shift_mode.kind == ShiftKind.theory else shift_mode.value
    Q1, R1, s1 = _cholesky_pass(A, engine, diagnostics, shift=shift)
    Q2, R2, s2 = _cholesky_pass(Q1, engine, diagnostics)
    Q, R3, s3 = _cholesky_pass(Q2, engine, diagnostics)
    return _factorization(Q, None if r_less else R3 @ R2 @ R1, [s1, s2, s3], r_less)


def _check_preconditioner(R_tilde, n: int) -> np.ndarray:
    R_tilde = np.asarray(R_tilde, dtype=np.float64)
    if R_tilde.shape != (n, n):
        raise ValueError(f"Preconditioner must return an {n} x {n} upper triangle, got {R_tilde.shape}.")
    d = np.abs(np.diag(R_tilde))
    small = np.flatnonzero(d < DEGENERATE_RATIO * d.max())
    if small.size or d.max() == 0.0:
        raise SingularTriangular(int(small[0]) if small.size else 0, "degenerate sketch preconditioner")
    return R_tilde


def _check_distinct_rows(sketch: Sketch, n: int):
    # with-replacement draws repeat rows; fewer than n distinct rows leave a1 rank deficient
    if sketch.indices is None:
        return
    distinct = np.unique(sketch.indices).size
    if distinct < n:
        raise SingularTriangular(distinct, f"sketch holds {distinct} distinct rows, needs {n}")


def sketch_preconditioner(A, precond: Preconditioner = qr_rless, cfg: SketchConfig = None, engine=None,
                         leverage_q=None):
    """Draw sketches until the preconditioner is nondegenerate. Returns (R~, Sketch, retries)."""
    A = as_dense(A)
    cfg = cfg or SketchConfig()
    engine = engine or SEQUENTIAL
    m, n = A.shape
    rng = make_rng(cfg.seed)
    l0 = cfg.resolve_size(m, n)
    retrying = Retrying(
        stop=stop_after_attempt(cfg.max_retries + 1),
        retry=retry_if_exception_type(SingularTriangular),
        reraise=True,
        before_sleep=log_retry_attempt,
    )
    for attempt in retrying:
        with attempt:
            number = attempt.retry_state.attempt_number
            size = cfg.grown_size(l0, number - 1, m)
            sketch = engine.draw_sketch(A, cfg, rng, size, leverage_q)
            _check_distinct_rows(sketch, n)
            R_tilde = _check_preconditioner(precond(sketch.a1), n)
    return R_tilde, sketch, number - 1


def precond_cholesky_qr(A, precond: Preconditioner, cfg: SketchConfig = None, *, leverage_q=None, engine=None,
                        diagnostics: bool = False, r_less: bool = False) -> QRFactorization:
    """
    Preconditioned CholeskyQR.

    R~ comes from `precond` applied to a sketch of A, X = A R~^-1, then one CholeskyQR
    pass on X gives Q and R = R^ R~. A degenerate R~ triggers a redraw with a larger
    sample (cfg.max_retries times at most) before SingularTriangular propagates.
    """
    A = _check_tall(A)
    engine = engine or SEQUENTIAL
    cfg = cfg or SketchConfig()
    start = time.perf_counter()
    R_tilde, sketch, retries = sketch_preconditioner(A, precond, cfg, engine, leverage_q)
    sketch_stage = Stage(
        name=StageName.sketch,
        retries=retries,
        sketch_size=sketch.a1.shape[0],
        wall_ms=(time.perf_counter() - start) * 1e3,
    )
    log_to_active_run(f"[SKETCH] {cfg.strategy.value} l={sketch.a1.shape[0]} retries={retries}")

    start = time.perf_counter()
    X = engine.trisolve(A, R_tilde)
    precond_stage = Stage(
        name=StageName.precondition,
        cond_estimate=_cond_or_none(X) if diagnostics else None,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )

    Q, R_hat, chol_stage = _cholesky_pass(X, engine, diagnostics)

    # LU preconditioners may leave negative pivots; move the signs into Q
    signs = np.where(np.diag(R_tilde) < 0.0, -1.0, 1.0)
    if np.any(signs < 0.0):
        Q = Q * signs
    R = None if r_less else np.triu(R_hat @ R_tilde) * signs[:, None]
    return _factorization(Q, R, [sketch_stage, precond_stage, chol_stage], r_less)


def rqr_cholesky_qr(A, cfg: SketchConfig = None, **kwargs) -> QRFactorization:
    """Preconditioner: R factor of a Q-less Householder QR of the sketch."""
    return precond_cholesky_qr(A, qr_rless, cfg, **kwargs)


def rlu_cholesky_qr(A, cfg: SketchConfig = None, **kwargs) -> QRFactorization:
    """Preconditioner: U of a partially pivoted LU of the sketch."""
    return precond_cholesky_qr(A, lu_upper, cfg, **kwargs)


def householder_qr(A, *, r_less: bool = False) -> QRFactorization:
    """Economic Householder QR with a nonnegative diagonal in R; the stable baseline."""
    A = _check_tall(A)
    start = time.perf_counter()
    q, r = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    q, r = q * signs, r * signs[:, None]
    stage = Stage(name=StageName.householder, wall_ms=(time.perf_counter() - start) * 1e3)
    return _factorization(q, np.triu(r), [stage], r_less)


def run_method(method: Method, A, cfg: SketchConfig = None, shift_mode: ShiftMode = None, *, engine=None,
               diagnostics: bool = False, r_less: bool = False, leverage_q=None) -> QRFactorization:
    """
    Dispatch by Method. rqr_gauss forces the Gaussian sketch; rlu and rqr use cfg as given
    (leverage_q is only read by the leverage strategy).
    """
    method = Method(method)
    cfg = cfg or SketchConfig()
    opts = dict(engine=engine, diagnostics=diagnostics, r_less=r_less)
    if method == Method.householder:
        if engine is not None and getattr(engine, "p", 1) != 1:
            raise ValueError("HouseholderQR has no parallel variant.")
        return householder_qr(A, r_less=r_less)
    if method == Method.cholqr:
        return cholesky_qr(A, **opts)
    if method == Method.cholqr2:
        return cholesky_qr2(A, **opts)
    if method == Method.scholqr3:
        return shifted_cholesky_qr3(A, shift_mode, **opts)
    if method == Method.rlu:
        return rlu_cholesky_qr(A, cfg, leverage_q=leverage_q, **opts)
    if method == Method.rqr:
        return rqr_cholesky_qr(A, cfg, leverage_q=leverage_q, **opts)
    return rqr_cholesky_qr(A, cfg.model_copy(update={"strategy": SketchStrategy.gaussian}), **opts)
