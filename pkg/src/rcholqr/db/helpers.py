from typing import Any, Dict, List, Optional
from uuid import UUID

from sqlalchemy.orm import Session

from ..models import RunRecord
from .connection import get_engine
from .models import BenchRun, RunRow


def _session(url: Optional[str]) -> Session:
    engine = get_engine(url)
    if engine is None:
        raise ValueError("No database configured. Set RCHOLQR_DATABASE_URL or pass --db.")
    return Session(engine)


def create_bench_run(command: str, argv: List[str], url: Optional[str] = None) -> str:
    """Create a bench run and return its UUID."""
    session = _session(url)

    try:
        run = BenchRun(command=command, argv=" ".join(argv))
        session.add(run)
        session.commit()
        return str(run.id)
    finally:
        session.close()


def insert_run_records(bench_run_id: str, records: List[RunRecord], url: Optional[str] = None) -> int:
    """Insert the records of a bench run; returns how many were written."""
    session = _session(url)

    try:
        run = session.get(BenchRun, _as_uuid(bench_run_id))
        if not run:
            raise ValueError(f"Bench run with id {bench_run_id} does not exist.")
        for record in records:
            fields = record.model_dump()
            fields["status"] = record.status.value
            session.add(RunRow(bench_run_id=run.id, **fields))
        session.commit()
        return len(records)
    finally:
        session.close()


def get_run_records(bench_run_id: str, url: Optional[str] = None) -> List[RunRecord]:
    """All records of a bench run, in insertion order."""
    session = _session(url)

    try:
        rows = session.query(RunRow).filter_by(bench_run_id=_as_uuid(bench_run_id)).order_by(RunRow.id.asc()).all()
        return [
            RunRecord(**{name: getattr(row, name) for name in RunRecord.model_fields})
            for row in rows
        ]
    finally:
        session.close()


def get_all_bench_runs(url: Optional[str] = None) -> List[Dict[str, Any]]:
    """All bench runs with their metadata, newest first."""
    session = _session(url)

    try:
        runs = session.query(BenchRun).order_by(BenchRun.started_at.desc()).all()
        return [
            {
                "bench_run_id": str(run.id),
                "command": run.command,
                "argv": run.argv,
                "started_at": run.started_at.isoformat(),
                "rows": len(run.rows),
            }
            for run in runs
        ]
    finally:
        session.close()


def _as_uuid(value) -> UUID:
    return value if isinstance(value, UUID) else UUID(str(value))
