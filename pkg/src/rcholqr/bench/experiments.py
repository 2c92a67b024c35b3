"""
The experiment families of the bench CLI. Each takes the BenchRunner first and
returns a DataFrame in the CSV schema of its command.
"""
from typing import List, Optional

import numpy as np
import pandas as pd

from ..apps import Orthogonalizer, random_sparse, read_matrix_market, rsvd_power
from ..cholqr import householder_qr
from ..diagnostics import rsvd_consistency
from ..log_context import log_to_active_run
from ..matgen import synthesize
from ..models import PARALLEL_METHODS, Method, MatrixSpec, RunRecord, ShiftMode, SketchConfig, SketchStrategy
from ..rng import derive_seed
from .grid import UsageError
from .runner import BenchRunner, records_to_frame


def _sketch_config(strategy: SketchStrategy, seed: int, l: Optional[int] = None, rate: Optional[float] = None,
                   max_retries: int = 2) -> SketchConfig:
    return SketchConfig(strategy=strategy, size=l, rate=rate, seed=derive_seed(seed, 1), max_retries=max_retries)


def _leverage_q(A: np.ndarray, strategy: SketchStrategy) -> Optional[np.ndarray]:
    # leverage sampling is an oracle strategy: it needs an accurate Q of A
    return householder_qr(A).q if strategy == SketchStrategy.leverage else None


def accuracy(runner: BenchRunner, *, m: int, n: int, kappas: List[float], methods: List[Method], seeds: int,
             seed0: int = 0, l: Optional[int] = None, rate: Optional[float] = None,
             strategy: SketchStrategy = SketchStrategy.uniform, shift_mode: Optional[ShiftMode] = None,
             p: int = 1, diagnostics: bool = False) -> pd.DataFrame:
    """One record per (kappa, seed, method)."""
    records: List[RunRecord] = []
    for kappa in kappas:
        for i in range(seeds):
            seed = seed0 + i
            A = synthesize(MatrixSpec(m=m, n=n, kappa=kappa, seed=seed))
            leverage_q = _leverage_q(A, strategy)
            for method in methods:
                cfg = _sketch_config(strategy, seed, l, rate)
                records.append(runner.run_cell(method, A, kappa=kappa, seed=seed, p=1 if method == Method.householder else p,
                                               cfg=cfg, shift_mode=shift_mode, diagnostics=diagnostics,
                                               leverage_q=leverage_q))
            print(f"✓ kappa={kappa:g} seed={seed}")
    return records_to_frame(records)


def _median_record(runs: List[RunRecord]) -> RunRecord:
    """The run with the median total time (the upper median for even counts)."""
    ok = [r for r in runs if "total" in r.wall_ms]
    if not ok:
        return runs[0]
    ok.sort(key=lambda r: r.wall_ms["total"])
    return ok[len(ok) // 2]


def _timed_cell(runner: BenchRunner, method: Method, A, *, kappa, seed, p, cfg, shift_mode, repeats) -> RunRecord:
    runs = [
        runner.run_cell(method, A, kappa=kappa, seed=seed, p=p, cfg=cfg, shift_mode=shift_mode)
        for _ in range(repeats)
    ]
    return _median_record(runs)


def runtime(runner: BenchRunner, *, ms: List[int], n: int, kappa: float, methods: List[Method], p: int = 1,
            seed0: int = 0, l: Optional[int] = None, rate: Optional[float] = None,
            strategy: SketchStrategy = SketchStrategy.uniform, shift_mode: Optional[ShiftMode] = None,
            repeats: int = 3) -> pd.DataFrame:
    """Median wall time over `repeats` runs per (m, method), with the per-stage split."""
    records: List[RunRecord] = []
    for m in ms:
        A = synthesize(MatrixSpec(m=m, n=n, kappa=kappa, seed=seed0))
        for method in methods:
            cell_p = 1 if method == Method.householder else p
            records.append(_timed_cell(runner, method, A, kappa=kappa, seed=seed0, p=cell_p,
                                       cfg=_sketch_config(strategy, seed0, l, rate), shift_mode=shift_mode,
                                       repeats=repeats))
        print(f"✓ m={m}")
    return records_to_frame(records)


def scaling(runner: BenchRunner, *, m: int, n: int, kappa: float, ps: List[int], methods: List[Method],
            mode: str = "strong", seed0: int = 0, l: Optional[int] = None, rate: Optional[float] = None,
            strategy: SketchStrategy = SketchStrategy.uniform, shift_mode: Optional[ShiftMode] = None,
            repeats: int = 3) -> pd.DataFrame:
    """
    strong: fixed m x n, varying p. weak: m rows per worker, so p workers see m*p rows.
    speedup = t(p=1) / t(p) in both modes.
    """
    if mode not in ("strong", "weak"):
        raise ValueError(f"Invalid scaling mode: {mode}. Must be 'strong' or 'weak'.")
    skipped = [mt.value for mt in methods if mt not in PARALLEL_METHODS]
    if skipped:
        print(f"Skipping methods without a parallel variant: {skipped}")
    methods = [mt for mt in methods if mt in PARALLEL_METHODS]
    ps = sorted(set(ps) | {1})
    matrices = {}
    records: List[RunRecord] = []
    for method in methods:
        baseline = None
        for p in ps:
            rows = m if mode == "strong" else m * p
            if rows not in matrices:
                matrices[rows] = synthesize(MatrixSpec(m=rows, n=n, kappa=kappa, seed=seed0))
            record = _timed_cell(runner, method, matrices[rows], kappa=kappa, seed=seed0, p=p,
                                 cfg=_sketch_config(strategy, seed0, l, rate), shift_mode=shift_mode,
                                 repeats=repeats)
            total = record.wall_ms.get("total")
            if p == 1:
                baseline = total
            if baseline and total:
                record.speedup = baseline / total
            records.append(record)
        print(f"✓ {method.value}")
    return records_to_frame(records)


def sampling(runner: BenchRunner, *, m: int, n: int, kappa: float, rates: List[float], seeds: int, seed0: int = 0,
             strategy: SketchStrategy = SketchStrategy.uniform) -> pd.DataFrame:
    """
    cond(X) across sampling rates l/n for one matrix and `seeds` sketch draws per rate.
    Redraws are disabled so degenerate sketches show up as status=singular.
    """
    A = synthesize(MatrixSpec(m=m, n=n, kappa=kappa, seed=seed0))
    leverage_q = _leverage_q(A, strategy)
    records: List[RunRecord] = []
    for rate in rates:
        for i in range(seeds):
            cfg = _sketch_config(strategy, seed0 + i, rate=rate, max_retries=0)
            records.append(runner.run_cell(Method.rqr, A, kappa=kappa, seed=seed0 + i, cfg=cfg, diagnostics=True,
                                           leverage_q=leverage_q))
        print(f"✓ rate={rate:g}")
    return records_to_frame(records)


RSVD_COLUMNS = ["orth", "m", "n", "k", "power", "iteration", "orth_ms", "total_orth_ms", "ratio_vs_qr",
                "total_ratio_vs_qr", "sigma_rel_diff", "consistency"]


def rsvd(runner: BenchRunner, *, k: int, power: int, orths: List[Orthogonalizer], seed0: int = 0,
         mm: Optional[str] = None, sparse_m: int = 50000, sparse_n: int = 5000, density: float = 1e-4,
         strategy: SketchStrategy = SketchStrategy.gaussian) -> pd.DataFrame:
    """One row per (orthogonalizer, iteration); iteration 0 is the initial orthogonalization."""
    if mm:
        A = read_matrix_market(mm)
        if k > min(A.shape):
            raise UsageError(f"--k {k} exceeds min(m, n)={min(A.shape)} of {mm}.")
        log_to_active_run(f"[RSVD] loaded {mm}: {A.shape[0]} x {A.shape[1]}, nnz={A.nnz}")
    else:
        A = random_sparse(sparse_m, sparse_n, density, seed0)
    results = {orth: rsvd_power(A, k, power, orth, seed0, strategy) for orth in orths}

    reference = results[orths[0]].sigma
    qr = results.get(Orthogonalizer.qr)
    rows = []
    for orth, result in results.items():
        total = sum(result.per_iteration_orth_time)
        qr_total = sum(qr.per_iteration_orth_time) if qr else None
        sigma_rel_diff = float(np.max(np.abs(result.sigma - reference) / reference))
        consistency = rsvd_consistency(result)
        for i, t in enumerate(result.per_iteration_orth_time):
            rows.append({
                "orth": orth.value,
                "m": A.shape[0],
                "n": A.shape[1],
                "k": k,
                "power": power,
                "iteration": i,
                "orth_ms": 1e3 * t,
                "total_orth_ms": 1e3 * total,
                "ratio_vs_qr": qr.per_iteration_orth_time[i] / t if qr and t > 0 else None,
                "total_ratio_vs_qr": qr_total / total if qr and total > 0 else None,
                "sigma_rel_diff": sigma_rel_diff,
                "consistency": consistency,
            })
        print(f"✓ {orth.value}: total orth {1e3 * total:.1f} ms")
    return pd.DataFrame(rows, columns=RSVD_COLUMNS)


def median_cond_by_rate(df: pd.DataFrame) -> pd.DataFrame:
    """Distribution summary of cond_x per sample size, for the sampling command."""
    grouped = df.groupby("l")["cond_x"]
    summary = grouped.agg(["median", "max"]).reset_index()
    summary["singular"] = df.groupby("l")["status"].apply(lambda s: int((s != "ok").sum())).values
    return summary

