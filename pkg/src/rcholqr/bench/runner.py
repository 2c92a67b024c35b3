import datetime
import math
import os
import time
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from .. import settings
from ..cholqr import run_method
from ..diagnostics import orthogonality_error, residual_error
from ..errors import CholeskyBreakdown, NoConvergence, RankDeficient, SingularTriangular, ZeroLeverageRow
from ..log_context import active_log_path, log_to_active_run
from ..models import RANDOMIZED, Method, RunRecord, RunStatus, ShiftMode, SketchConfig, StageName
from ..parexec import run_parallel

RECORD_COLUMNS = [
    "method", "m", "n", "l", "p", "kappa", "seed", "status",
    "orth_err", "res_err", "cond_x", "retries", "messages", "volume", "speedup",
    "wall_ms_total", *[f"wall_ms_{s.value}" for s in StageName], "error",
]
# optional integer columns keep integer formatting in the CSV
NULLABLE_INT_COLUMNS = ["l", "messages"]


def records_to_frame(records: List[RunRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row = r.model_dump(exclude={"wall_ms"})
        row["status"] = r.status.value
        row["wall_ms_total"] = r.wall_ms.get("total")
        for s in StageName:
            row[f"wall_ms_{s.value}"] = r.wall_ms.get(s.value)
        rows.append(row)
    df = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    for column in NULLABLE_INT_COLUMNS:
        df[column] = df[column].astype("Int64")
    return df


def write_csv(df: pd.DataFrame, path: str):
    """RFC-4180 CSV: header always present, CRLF line endings."""
    df.to_csv(path, index=False, lineterminator="\r\n")


def _cond_x(report) -> Optional[float]:
    # the preconditioned X for randomized methods, the first CholeskyQR output otherwise
    stage = report.stage(StageName.precondition) or report.stages[0]
    return stage.cond_estimate


class BenchRunner:
    def __init__(self, log_root: Optional[str] = None):
        # Create a unique timestamped folder for this entire run
        timestamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S")
        self.run_log_dir = os.path.join(log_root or settings.LOG_DIR, f"run_{timestamp}")
        os.makedirs(self.run_log_dir, exist_ok=True)

    def _get_log_path(self, command: str) -> str:
        return os.path.join(self.run_log_dir, f"{command}.log")

    def run_command(self, command: str, fn: Callable, *args, **kwargs):
        """Run one experiment command with its own log file as the active run log."""
        print(f"Executing benchmark: {command}")
        token = active_log_path.set(self._get_log_path(command))

        try:
            log_to_active_run(f"\n--- START COMMAND: {command} ---\nParameters: {sorted(kwargs.keys())}")
            try:
                result = fn(self, *args, **kwargs)
                log_to_active_run("\n--- SUCCESS ---\n")
                return result
            except Exception as e:
                log_to_active_run(f"\n--- FATAL ERROR ---\n{type(e).__name__}: {e}")
                raise e
        finally:
            # Reset context var so later library calls stay silent
            active_log_path.reset(token)

    def run_cell(self, method: Method, A: np.ndarray, *, kappa: float, seed: int, p: int = 1,
                 cfg: Optional[SketchConfig] = None, shift_mode: Optional[ShiftMode] = None,
                 diagnostics: bool = False, leverage_q: Optional[np.ndarray] = None) -> RunRecord:
        """One factorization measured into a RunRecord; breakdowns become data, not crashes."""
        method = Method(method)
        m, n = A.shape
        cfg = cfg or SketchConfig()
        fields = dict(method=method.value, m=m, n=n, p=p, kappa=kappa, seed=seed)
        if method in RANDOMIZED:
            fields["l"] = cfg.resolve_size(m, n)
        log_to_active_run(f"[CELL] {method.value} m={m} n={n} kappa={kappa:g} seed={seed} p={p}")

        try:
            start = time.perf_counter()
            if p == 1:
                fact = run_method(method, A, cfg, shift_mode, diagnostics=diagnostics, leverage_q=leverage_q)
                total_ms = (time.perf_counter() - start) * 1e3
                wall_ms = fact.report.wall_ms_by_stage()
            else:
                fact, timing = run_parallel(method, A, p, cfg, shift_mode, diagnostics=diagnostics,
                                            leverage_q=leverage_q)
                total_ms, wall_ms = timing.total_ms, dict(timing.stage_ms)
                fields.update(messages=timing.messages, volume=timing.volume)
        except CholeskyBreakdown as e:
            log_to_active_run(f"[CELL] {method.value}: breakdown ({e})")
            return RunRecord(status=RunStatus.breakdown, error=str(e), **fields)
        except (SingularTriangular, RankDeficient, ZeroLeverageRow, NoConvergence) as e:
            log_to_active_run(f"[CELL] {method.value}: singular ({e})")
            return RunRecord(status=RunStatus.singular, error=str(e), **fields)

        wall_ms["total"] = total_ms
        sketch = fact.report.stage(StageName.sketch)
        if sketch is not None:
            fields["l"] = sketch.sketch_size
        orth_err = orthogonality_error(fact.q)
        res_err = residual_error(A, fact.q, fact.r)
        if not (math.isfinite(orth_err) and math.isfinite(res_err)):
            return RunRecord(status=RunStatus.singular, error="non-finite factor", wall_ms=wall_ms, **fields)
        return RunRecord(
            orth_err=orth_err,
            res_err=res_err,
            cond_x=_cond_x(fact.report) if diagnostics else None,
            retries=fact.report.retries,
            wall_ms=wall_ms,
            **fields,
        )
