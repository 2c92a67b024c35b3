"""
Simulated multi-process execution of the CholeskyQR family.

A is split into p contiguous row blocks, each owned by one worker thread. Local
Grammians are combined by a fixed pairwise tree, R is shared read-only (the
broadcast) and every block is solved in place. The collectives of a message-passing
run are not performed, only counted: ParallelEngine tallies each reduce, broadcast
and sketch gather with its volume in float64 values.
"""
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from . import settings
from .cholqr import run_method
from .diagnostics import broadcast_volume, reduce_volume
from .errors import DimensionMismatch, SingularTriangular
from .kernels import _back_substitute_into, as_dense, check_upper, gram
from .log_context import log_to_active_run
from .models import PARALLEL_METHODS, Method, QRFactorization, ShiftMode, Sketch, SketchConfig, SketchStrategy
from .sketch import draw_sketch


@dataclass
class BlockedMatrix:
    blocks: List[np.ndarray]
    offsets: List[int]
    p: int

    @property
    def shape(self) -> Tuple[int, int]:
        return sum(b.shape[0] for b in self.blocks), self.blocks[0].shape[1]

    def concatenate(self) -> np.ndarray:
        return np.concatenate(self.blocks, axis=0)


@dataclass
class TimingBreakdown:
    stage_ms: Dict[str, float] = field(default_factory=dict)
    total_ms: float = 0.0
    messages: int = 0
    volume: float = 0.0


class PoolManager:
    def __init__(self):
        # Map worker count -> executor, created on first use and reused by later runs
        self.pools: Dict[int, ThreadPoolExecutor] = {}
        self.lock = threading.Lock()

    def get(self, workers: int) -> ThreadPoolExecutor:
        """Executor with `workers` threads."""
        with self.lock:
            if workers not in self.pools:
                self.pools[workers] = ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"rcholqr-p{workers}")
            return self.pools[workers]

    def shutdown(self):
        """Stop every cached executor."""
        with self.lock:
            for pool in self.pools.values():
                pool.shutdown(wait=True)
            self.pools.clear()


POOLS = PoolManager()


def _pool_for(p: int) -> ThreadPoolExecutor:
    return POOLS.get(max(1, min(p, settings.MAX_WORKERS)))


def partition_rows(A, p: int) -> BlockedMatrix:
    """
    Contiguous near-equal row blocks (views, no copy). The first m mod p blocks get
    one extra row, so m=10, p=3 splits as (4, 3, 3).
    """
    A = as_dense(A)
    m = A.shape[0]
    if not 1 <= p <= m:
        raise ValueError(f"Worker count p={p} must satisfy 1 <= p <= m={m}.")
    blocks = np.array_split(A, p, axis=0)
    offsets = [0]
    for b in blocks[:-1]:
        offsets.append(offsets[-1] + b.shape[0])
    return BlockedMatrix(blocks=blocks, offsets=offsets, p=p)


def tree_sum(parts: List[np.ndarray]) -> np.ndarray:
    """Pairwise sums level by level: ((0+1)+(2+3))+... for a fixed summation order."""
    while len(parts) > 1:
        paired = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            paired.append(parts[-1])
        parts = paired
    return parts[0]


def parallel_gram(B: BlockedMatrix, pool: ThreadPoolExecutor = None) -> np.ndarray:
    cols = {b.shape[1] for b in B.blocks}
    if len(cols) != 1:
        raise DimensionMismatch(f"Blocks disagree on the column count: {sorted(cols)}.")
    pool = pool or _pool_for(B.p)
    return tree_sum(list(pool.map(gram, B.blocks)))


def _solve_blocks(B: BlockedMatrix, R, pool: ThreadPoolExecutor = None) -> np.ndarray:
    R = check_upper(R)
    m, n = B.shape
    if n != R.shape[0]:
        raise DimensionMismatch(f"Blocks have {n} columns but R has order {R.shape[0]}.")
    zero = np.flatnonzero(np.diag(R) == 0.0)
    if zero.size:
        raise SingularTriangular(int(zero[0]))
    out = np.empty((m, n), order="F")
    pool = pool or _pool_for(B.p)
    # every worker writes only its own row range of `out`
    futures = [
        pool.submit(_back_substitute_into, block, R, out[offset:offset + block.shape[0]])
        for block, offset in zip(B.blocks, B.offsets)
    ]
    for f in futures:
        f.result()
    return out


def parallel_trisolve(B: BlockedMatrix, R, pool: ThreadPoolExecutor = None) -> BlockedMatrix:
    """Per-block X R = A; concatenated, bitwise equal to kernels.right_trisolve for any p."""
    out = _solve_blocks(B, R, pool)
    return partition_rows(out, B.p)


class ParallelEngine:
    """Routes cholqr's Grammians, solves and sketch draws through p row blocks and counts the collectives."""

    def __init__(self, p: int, pool: ThreadPoolExecutor = None):
        self.p = p
        self.pool = pool or _pool_for(p)
        self.messages = 0
        self.volume = 0.0

    def _count(self, volume: float):
        self.messages += 1
        self.volume += volume

    def gram(self, A: np.ndarray) -> np.ndarray:
        G = parallel_gram(partition_rows(A, self.p), self.pool)
        self._count(reduce_volume(A.shape[1], self.p))
        return G

    def trisolve(self, A: np.ndarray, R: np.ndarray) -> np.ndarray:
        self._count(broadcast_volume(A.shape[1], self.p))
        return _solve_blocks(partition_rows(A, self.p), R, self.pool)

    def draw_sketch(self, A, cfg: SketchConfig, rng, size: int, leverage_q=None) -> Sketch:
        sketch = draw_sketch(A, cfg, rng, size, leverage_q)
        l, n = sketch.a1.shape
        # a Gaussian sketch is a reduce of p partial projections, the others a gather of l rows
        self._count(float(self.p * l * n) if sketch.strategy == SketchStrategy.gaussian else float(l * n))
        return sketch


def run_parallel(method: Method, A, p: int, cfg: SketchConfig = None, shift_mode: ShiftMode = None, *,
                 diagnostics: bool = False, r_less: bool = False,
                 leverage_q=None) -> Tuple[QRFactorization, TimingBreakdown]:
    method = Method(method)
    if method not in PARALLEL_METHODS:
        raise ValueError(f"Invalid method for parallel execution: {method.value}. Must be one of {[m.value for m in PARALLEL_METHODS]}")
    A = as_dense(A)
    if not 1 <= p <= A.shape[0]:
        raise ValueError(f"Worker count p={p} must satisfy 1 <= p <= m={A.shape[0]}.")

    engine = ParallelEngine(p)
    log_to_active_run(f"[PAREXEC] {method.value} m={A.shape[0]} n={A.shape[1]} p={p}")
    start = time.perf_counter()
    fact = run_method(method, A, cfg, shift_mode, engine=engine, diagnostics=diagnostics, r_less=r_less,
                      leverage_q=leverage_q)
    timing = TimingBreakdown(
        stage_ms=fact.report.wall_ms_by_stage(),
        total_ms=(time.perf_counter() - start) * 1e3,
        messages=engine.messages,
        volume=engine.volume,
    )
    log_to_active_run(f"[PAREXEC] {method.value} done: {timing.messages} messages, {timing.volume:g} values")
    return fact, timing
