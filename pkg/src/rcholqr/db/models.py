from datetime import datetime
from typing import List
from uuid import UUID, uuid4

from sqlalchemy import JSON, BigInteger, CheckConstraint, Float, ForeignKey, String, Text
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


# Every table must share one DeclarativeBase so relationships resolve
class Base(DeclarativeBase):
    pass


# one `bench` invocation
class BenchRun(Base):
    __tablename__ = "bench_runs"

    id: Mapped[UUID] = mapped_column(primary_key=True, default=uuid4)
    command: Mapped[str] = mapped_column(String)
    argv: Mapped[str] = mapped_column(Text)
    started_at: Mapped[datetime] = mapped_column(default=datetime.now)

    rows: Mapped[List["RunRow"]] = relationship(back_populates="bench_run", cascade="all, delete-orphan")


# one RunRecord of a bench run
class RunRow(Base):
    __tablename__ = "run_rows"

    id: Mapped[int] = mapped_column(primary_key=True, autoincrement=True)
    bench_run_id: Mapped[UUID] = mapped_column(ForeignKey("bench_runs.id", ondelete="CASCADE"))
    method: Mapped[str] = mapped_column(String)
    m: Mapped[int] = mapped_column(BigInteger)
    n: Mapped[int] = mapped_column(BigInteger)
    l: Mapped[int | None] = mapped_column(BigInteger, nullable=True)
    p: Mapped[int] = mapped_column(default=1)
    kappa: Mapped[float] = mapped_column(Float)
    seed: Mapped[int] = mapped_column(BigInteger)
    status: Mapped[str] = mapped_column(String)
    orth_err: Mapped[float | None] = mapped_column(Float, nullable=True)
    res_err: Mapped[float | None] = mapped_column(Float, nullable=True)
    cond_x: Mapped[float | None] = mapped_column(Float, nullable=True)
    retries: Mapped[int] = mapped_column(default=0)
    wall_ms: Mapped[dict] = mapped_column(JSON, default=dict)
    messages: Mapped[int | None] = mapped_column(nullable=True)
    volume: Mapped[float | None] = mapped_column(Float, nullable=True)
    speedup: Mapped[float | None] = mapped_column(Float, nullable=True)
    error: Mapped[str | None] = mapped_column(Text, nullable=True)

    bench_run: Mapped["BenchRun"] = relationship(back_populates="rows")

    __table_args__ = (
        CheckConstraint("status IN ('ok', 'breakdown', 'singular')", name="check_status"),
    )
