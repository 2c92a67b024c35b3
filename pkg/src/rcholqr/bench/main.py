"""
bench {accuracy|runtime|scaling|sampling|rsvd} [flags] --out FILE

Exit codes: 0 success (breakdowns are data), 2 usage error, 3 I/O error.
"""
import argparse
import sys
from typing import List, Optional

import pandas as pd

from .. import settings
from ..db.helpers import create_bench_run, insert_run_records
from ..errors import DmatFormatError, MatrixMarketFormatError
from ..models import BENCH_SHIFT, RANDOMIZED, MatrixSpec, RunRecord, ShiftMode, SketchConfig, SketchStrategy
from ..parexec import POOLS
from . import experiments
from .grid import UsageError, argtype, count, parse_count_grid, parse_grid, parse_methods, parse_orths
from .runner import BenchRunner, write_csv

EXIT_USAGE = 2
EXIT_IO = 3


def _add_common(sub: argparse.ArgumentParser, *, seeds: int = 1):
    sub.add_argument("--out", required=True, help="CSV output path")
    sub.add_argument("--seeds", type=argtype(count), default=seeds, help="number of seeds")
    sub.add_argument("--seed0", type=int, default=0, help="first seed")
    sub.add_argument("--db", default=None, help="SQLAlchemy URL of the results store (overrides RCHOLQR_DATABASE_URL)")
    sub.add_argument("--log-dir", default=None, help="root folder of the run logs (default RCHOLQR_LOG_DIR)")


def _add_sketch(sub: argparse.ArgumentParser, *, rate: bool = True):
    sub.add_argument("--strategy", type=argtype(SketchStrategy), default=SketchStrategy.uniform,
                     help="uniform | leverage | gaussian")
    sub.add_argument("--l", type=argtype(count), default=None, help="sketch size (default 2n)")
    if rate:
        sub.add_argument("--rate", type=float, default=None, help="sampling rate l/n")


def _add_methods(sub: argparse.ArgumentParser):
    sub.add_argument("--methods", type=argtype(parse_methods), default=parse_methods("all"),
                     help="'all' or a comma list of methods")
    sub.add_argument("--shift-mode", type=argtype(ShiftMode.parse), default=BENCH_SHIFT,
                     help="sCholeskyQR3 shift: theory | fixed | fixed:<eps>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="CholeskyQR family benchmarks")
    subs = parser.add_subparsers(dest="command", required=True)

    acc = subs.add_parser("accuracy", help="orthogonality and residual across a kappa grid")
    acc.add_argument("--m", type=argtype(count), default=10000)
    acc.add_argument("--n", type=argtype(count), default=50)
    acc.add_argument("--kappa", type=argtype(parse_grid), default=parse_grid("1e3:1e15:log10"))
    acc.add_argument("--p", type=argtype(count), default=1)
    acc.add_argument("--diag", action="store_true", help="record cond(X)")
    _add_common(acc, seeds=3)
    _add_sketch(acc)
    _add_methods(acc)

    rt = subs.add_parser("runtime", help="wall time across an m grid")
    rt.add_argument("--m", type=argtype(parse_count_grid), default=parse_count_grid("1e5:1e6"))
    rt.add_argument("--n", type=argtype(count), default=100)
    rt.add_argument("--kappa", type=float, default=1e5)
    rt.add_argument("--p", type=argtype(count), default=1)
    rt.add_argument("--repeats", type=argtype(count), default=3)
    _add_common(rt)
    _add_sketch(rt)
    _add_methods(rt)

    sc = subs.add_parser("scaling", help="strong or weak scaling across worker counts")
    sc.add_argument("--m", type=argtype(count), default=200000, help="total rows (strong) or rows per worker (weak)")
    sc.add_argument("--n", type=argtype(count), default=50)
    sc.add_argument("--kappa", type=float, default=1e5)
    sc.add_argument("--p", type=argtype(parse_count_grid), default=[1, 2, 4, 8])
    sc.add_argument("--mode", choices=["strong", "weak"], default="strong")
    sc.add_argument("--repeats", type=argtype(count), default=3)
    _add_common(sc)
    _add_sketch(sc)
    _add_methods(sc)

    sa = subs.add_parser("sampling", help="cond(X) distribution across sampling rates")
    sa.add_argument("--m", type=argtype(count), default=10000)
    sa.add_argument("--n", type=argtype(count), default=100)
    sa.add_argument("--kappa", type=float, default=1e5)
    sa.add_argument("--rate", type=argtype(parse_grid), default=parse_grid("1.0:3.0:0.1"))
    _add_common(sa, seeds=20)
    _add_sketch(sa, rate=False)

    rs = subs.add_parser("rsvd", help="RSVD with power iteration per orthogonalizer")
    rs.add_argument("--mm", default=None, help="Matrix Market file (default: synthetic sparse input)")
    rs.add_argument("--sparse-m", type=argtype(count), default=50000)
    rs.add_argument("--sparse-n", type=argtype(count), default=5000)
    rs.add_argument("--density", type=float, default=1e-4)
    rs.add_argument("--k", type=argtype(count), default=20)
    rs.add_argument("--power", type=int, default=3)
    rs.add_argument("--orth", type=argtype(parse_orths), default=parse_orths("qr,rqr"))
    rs.add_argument("--strategy", choices=[SketchStrategy.uniform.value, SketchStrategy.gaussian.value],
                    default=SketchStrategy.gaussian.value, help="sketch of the rQR orthogonalizer")
    _add_common(rs)
    return parser


def _workloads(args):
    """(rows, p) pairs of a factorization command."""
    if args.command == "scaling":
        return [(args.m if args.mode == "strong" else args.m * p, p) for p in args.p]
    if args.command == "runtime":
        return [(m, args.p) for m in args.m]
    if args.command == "accuracy":
        return [(args.m, args.p)]
    return [(args.m, 1)]


def check_args(args):
    """Flag combinations argparse cannot express, checked before any matrix is built."""
    try:
        if args.command == "rsvd":
            if args.power < 0:
                raise ValueError(f"--power must be nonnegative, got {args.power}.")
            if args.mm is None:
                if not 0.0 < args.density <= 1.0:
                    raise ValueError(f"--density must lie in (0, 1], got {args.density}.")
                if args.k > min(args.sparse_m, args.sparse_n):
                    raise ValueError(f"--k {args.k} exceeds min(m, n)={min(args.sparse_m, args.sparse_n)}.")
            return
        kappas = args.kappa if isinstance(args.kappa, list) else [args.kappa]
        if args.command == "sampling":
            configs = [SketchConfig(strategy=args.strategy, rate=rate) for rate in args.rate]
        elif any(method in RANDOMIZED for method in args.methods):
            configs = [SketchConfig(strategy=args.strategy, size=args.l, rate=args.rate)]
        else:
            configs = []
        for rows, p in _workloads(args):
            for kappa in kappas:
                MatrixSpec(m=rows, n=args.n, kappa=kappa)
            for cfg in configs:
                cfg.resolve_size(rows, args.n)
            if p > rows:
                raise ValueError(f"Worker count p={p} must not exceed m={rows}.")
    except ValueError as e:
        raise UsageError(str(e)) from e


def _run(runner: BenchRunner, args) -> pd.DataFrame:
    shared = dict(seed0=args.seed0)
    if args.command == "accuracy":
        return runner.run_command("accuracy", experiments.accuracy, m=args.m, n=args.n, kappas=args.kappa,
                                  methods=args.methods, seeds=args.seeds, l=args.l, rate=args.rate,
                                  strategy=args.strategy, shift_mode=args.shift_mode, p=args.p,
                                  diagnostics=args.diag, **shared)
    if args.command == "runtime":
        return runner.run_command("runtime", experiments.runtime, ms=args.m, n=args.n, kappa=args.kappa,
                                  methods=args.methods, p=args.p, l=args.l, rate=args.rate, strategy=args.strategy,
                                  shift_mode=args.shift_mode, repeats=args.repeats, **shared)
    if args.command == "scaling":
        return runner.run_command("scaling", experiments.scaling, m=args.m, n=args.n, kappa=args.kappa, ps=args.p,
                                  methods=args.methods, mode=args.mode, l=args.l, rate=args.rate,
                                  strategy=args.strategy, shift_mode=args.shift_mode, repeats=args.repeats, **shared)
    if args.command == "sampling":
        return runner.run_command("sampling", experiments.sampling, m=args.m, n=args.n, kappa=args.kappa,
                                  rates=args.rate, seeds=args.seeds, strategy=args.strategy, **shared)
    return runner.run_command("rsvd", experiments.rsvd, k=args.k, power=args.power, orths=args.orth, mm=args.mm,
                              sparse_m=args.sparse_m, sparse_n=args.sparse_n, density=args.density,
                              strategy=SketchStrategy(args.strategy), **shared)


def _summary(command: str, df: pd.DataFrame) -> pd.DataFrame:
    if command == "rsvd":
        return df.groupby("orth", sort=False)[["total_orth_ms", "total_ratio_vs_qr", "sigma_rel_diff"]].first().reset_index()
    if command == "sampling":
        return experiments.median_cond_by_rate(df)
    columns = ["orth_err", "res_err", "wall_ms_total"]
    summary = df.groupby("method", sort=False)[columns].max().reset_index()
    summary["breakdowns"] = df.groupby("method", sort=False)["status"].apply(lambda s: int((s != "ok").sum())).values
    return summary


def _plain(value):
    # numpy scalars to Python numbers, missing values to None
    if pd.isna(value):
        return None
    return value.item() if hasattr(value, "item") else value


def frame_to_records(df: pd.DataFrame) -> List[RunRecord]:
    records = []
    for row in df.to_dict(orient="records"):
        row = {k: _plain(v) for k, v in row.items()}
        wall_ms = {k[len("wall_ms_"):]: v for k, v in row.items() if k.startswith("wall_ms_") and v is not None}
        fields = {k: v for k, v in row.items() if k in RunRecord.model_fields and k != "wall_ms" and v is not None}
        records.append(RunRecord(wall_ms=wall_ms, **fields))
    return records


def _persist(url: str, command: str, argv: List[str], df: pd.DataFrame):
    bench_run_id = create_bench_run(command, argv, url)
    if command == "rsvd":
        print(f"✓ Bench run {bench_run_id} stored (rsvd rows are CSV only)")
        return
    records = frame_to_records(df)
    insert_run_records(bench_run_id, records, url)
    print(f"✓ Stored {len(records)} records in bench run {bench_run_id}")


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        check_args(args)
        runner = BenchRunner(args.log_dir)
        df = _run(runner, args)
        write_csv(df, args.out)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"bench: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DmatFormatError, MatrixMarketFormatError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    finally:
        POOLS.shutdown()
    print(f"✓ Wrote {len(df)} rows to {args.out}")
    print(_summary(args.command, df).to_markdown(index=False))

    url = args.db or settings.DATABASE_URL
    if url:
        _persist(url, args.command, argv, df)
    return 0


if __name__ == "__main__":
    sys.exit(main())
