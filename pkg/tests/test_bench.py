import numpy as np
import pandas as pd
import pytest
from scipy import io

from rcholqr.apps import random_sparse
from rcholqr.bench import experiments
from rcholqr.bench import runner as runner_module
from rcholqr.bench.grid import count, parse_count_grid, parse_grid, parse_methods, parse_orths
from rcholqr.bench.main import EXIT_IO, EXIT_USAGE, main
from rcholqr.bench.runner import RECORD_COLUMNS, BenchRunner
from rcholqr.db.helpers import get_all_bench_runs, get_run_records
from rcholqr.errors import DimensionMismatch, NoConvergence, ZeroLeverageRow
from rcholqr.matgen import synthesize
from rcholqr.models import Method, MatrixSpec, RunStatus, SketchConfig
from rcholqr.parexec import POOLS


@pytest.fixture
def bench(tmp_path):
    """Runs the CLI with logs under tmp_path; returns (exit code, output path)."""
    def run(*argv, out="out.csv"):
        path = tmp_path / out
        code = main([*argv, "--out", str(path), "--log-dir", str(tmp_path / "logs")])
        return code, path
    return run


def test_log10_grid():
    assert parse_grid("1e3:1e15:log10") == parse_grid("1e3:1e15")
    values = parse_grid("1e3:1e15")
    assert len(values) == 13
    assert values[0] == 1e3
    assert values[-1] == pytest.approx(1e15)


def test_step_grid_is_inclusive():
    values = parse_grid("1.0:3.0:0.1")
    assert len(values) == 21
    assert 1.2 in values
    assert values[-1] == 3.0


def test_lists_and_single_values():
    assert parse_grid("1,2.5,4") == [1.0, 2.5, 4.0]
    assert parse_grid("7") == [7.0]
    assert parse_count_grid("1e5:1e6") == [100000, 1000000]
    assert count("1e5") == 100000


@pytest.mark.parametrize("text", ["1:2:3:4", "5:1", "0:10:log10", "1:2:-0.5"])
def test_invalid_grids(text):
    with pytest.raises(ValueError):
        parse_grid(text)


def test_method_and_orth_lists():
    assert parse_methods("all") == list(Method)
    assert parse_methods("cholqr, rqr") == [Method.cholqr, Method.rqr]
    with pytest.raises(ValueError):
        parse_methods("cholqr,qr3")
    with pytest.raises(ValueError):
        parse_orths("qr,svd")
    with pytest.raises(ValueError):
        count("2.5")


def test_run_cell_records_breakdown_as_data(tmp_path):
    runner = BenchRunner(str(tmp_path))
    A = synthesize(MatrixSpec(m=400, n=30, kappa=1e12, seed=0))
    record = runner.run_cell(Method.cholqr, A, kappa=1e12, seed=0)
    assert record.status == RunStatus.breakdown
    assert record.orth_err is None and "breakdown" in record.error.lower()


def test_run_cell_fills_sketch_fields(tmp_path):
    runner = BenchRunner(str(tmp_path))
    A = synthesize(MatrixSpec(m=400, n=10, kappa=1e5, seed=0))
    record = runner.run_cell(Method.rqr, A, kappa=1e5, seed=0, cfg=SketchConfig(rate=1.5), diagnostics=True)
    assert record.status == RunStatus.ok
    assert record.l == 15
    assert record.cond_x is not None
    assert set(record.wall_ms) >= {"total", "sketch", "precondition", "cholesky_qr"}


@pytest.mark.parametrize("error", [ZeroLeverageRow(3), NoConvergence("SVD did not converge")])
def test_run_cell_records_sampling_and_svd_failures(tmp_path, monkeypatch, error):
    def fail(*args, **kwargs):
        raise error

    monkeypatch.setattr(runner_module, "run_method", fail)
    A = synthesize(MatrixSpec(m=400, n=10, kappa=1e5, seed=0))
    record = BenchRunner(str(tmp_path)).run_cell(Method.rqr, A, kappa=1e5, seed=0)
    assert record.status == RunStatus.singular
    assert record.error == str(error)


def test_accuracy_csv(bench):
    code, path = bench("accuracy", "--m", "400", "--n", "30", "--kappa", "1e3,1e12", "--methods", "cholqr,rqr",
                       "--seeds", "2")
    assert code == 0
    raw = path.read_bytes()
    assert raw.startswith((",".join(RECORD_COLUMNS) + "\r\n").encode())
    df = pd.read_csv(path)
    assert len(df) == 8
    assert set(df[(df.method == "cholqr") & (df.kappa == 1e12)].status) == {"breakdown"}
    rqr = df[df.method == "rqr"]
    assert set(rqr.status) == {"ok"}
    assert rqr.orth_err.max() <= 1e-12
    assert set(rqr.l) == {60}


def _without_timings(path):
    df = pd.read_csv(path)
    return df[[c for c in df.columns if not c.startswith("wall_ms")]]


def test_accuracy_rows_are_deterministic(tmp_path, bench):
    args = ("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3:1e6", "--methods", "cholqr2,rqr,rlu", "--seeds", "2")
    assert bench(*args, out="a.csv")[0] == 0
    assert bench(*args, out="b.csv")[0] == 0
    pd.testing.assert_frame_equal(_without_timings(tmp_path / "a.csv"), _without_timings(tmp_path / "b.csv"))


def test_runtime_with_workers(bench):
    code, path = bench("runtime", "--m", "200,400", "--n", "5", "--kappa", "1e3", "--methods", "cholqr2,rqr",
                       "--repeats", "1", "--p", "2")
    assert code == 0
    df = pd.read_csv(path)
    assert len(df) == 4
    assert (df.p == 2).all()
    assert df.messages.notna().all()
    assert (df.wall_ms_total > 0).all()


@pytest.mark.parametrize("mode", ["strong", "weak"])
def test_scaling(bench, mode):
    code, path = bench("scaling", "--m", "400", "--n", "5", "--kappa", "1e3", "--p", "2", "--mode", mode,
                       "--methods", "rqr,householder", "--repeats", "1")
    assert code == 0
    df = pd.read_csv(path)
    assert list(df.p) == [1, 2]
    assert set(df.method) == {"rqr"}
    assert df.speedup.iloc[0] == 1.0
    expected_rows = [400, 400] if mode == "strong" else [400, 800]
    assert list(df.m) == expected_rows


def test_sampling(bench):
    code, path = bench("sampling", "--m", "500", "--n", "10", "--kappa", "1e5", "--rate", "1.0,2.0", "--seeds", "5")
    assert code == 0
    df = pd.read_csv(path)
    assert len(df) == 10
    assert set(df.l) == {10, 20}
    assert df[df.status == "ok"].cond_x.notna().all()


def test_rsvd_synthetic(bench):
    code, path = bench("rsvd", "--sparse-m", "300", "--sparse-n", "100", "--density", "0.05", "--k", "5",
                       "--power", "1", "--orth", "qr,rqr")
    assert code == 0
    df = pd.read_csv(path)
    assert len(df) == 4
    assert list(df.iteration) == [0, 1, 0, 1]
    assert df.sigma_rel_diff.max() <= 1e-6


def test_rsvd_matrix_market(tmp_path, bench):
    mm = tmp_path / "a.mtx"
    io.mmwrite(str(mm), random_sparse(60, 20, 0.2, seed=1))
    code, path = bench("rsvd", "--mm", str(mm), "--k", "5", "--power", "1", "--orth", "qr")
    assert code == 0
    assert len(pd.read_csv(path)) == 2


def test_usage_errors(bench):
    with pytest.raises(SystemExit) as err:
        bench("accuracy", "--methods", "qr3")
    assert err.value.code == EXIT_USAGE
    code, _ = bench("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3", "--l", "10", "--rate", "2.0")
    assert code == EXIT_USAGE
    code, _ = bench("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3", "--methods", "rqr", "--l", "1000")
    assert code == EXIT_USAGE


def test_io_errors(tmp_path, bench):
    code, _ = bench("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3", "--methods", "cholqr",
                    out="missing/dir/out.csv")
    assert code == EXIT_IO
    code, _ = bench("rsvd", "--mm", str(tmp_path / "nope.mtx"))
    assert code == EXIT_IO
    garbled = tmp_path / "garbled.mtx"
    garbled.write_text("not a matrix\n")
    code, _ = bench("rsvd", "--mm", str(garbled))
    assert code == EXIT_IO


def test_argument_combinations_are_usage_errors(tmp_path, bench):
    mm = tmp_path / "a.mtx"
    io.mmwrite(str(mm), random_sparse(30, 10, 0.3, seed=2))
    assert bench("rsvd", "--mm", str(mm), "--k", "20")[0] == EXIT_USAGE
    assert bench("rsvd", "--sparse-m", "50", "--sparse-n", "10", "--density", "2.0")[0] == EXIT_USAGE
    assert bench("scaling", "--m", "4", "--n", "2", "--p", "1,8", "--methods", "cholqr2")[0] == EXIT_USAGE
    assert bench("sampling", "--m", "100", "--n", "10", "--rate", "1.0,20.0")[0] == EXIT_USAGE
    assert bench("accuracy", "--m", "5", "--n", "8", "--kappa", "1e3", "--methods", "cholqr")[0] == EXIT_USAGE


def test_numerical_failures_are_not_usage_errors(monkeypatch, bench):
    def fail(spec):
        raise DimensionMismatch("generator failed")

    monkeypatch.setattr(experiments, "synthesize", fail)
    with pytest.raises(DimensionMismatch):
        bench("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3", "--methods", "cholqr")


def test_worker_pools_are_released_on_exit(bench):
    assert bench("runtime", "--m", "200", "--n", "5", "--methods", "cholqr2", "--repeats", "1", "--p", "2")[0] == 0
    assert POOLS.pools == {}


def test_run_log_is_written(tmp_path, bench):
    assert bench("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3", "--methods", "rqr")[0] == 0
    logs = list((tmp_path / "logs").glob("run_*/accuracy.log"))
    assert len(logs) == 1
    text = logs[0].read_text()
    assert "START COMMAND: accuracy" in text and "SUCCESS" in text


def test_results_are_persisted(bench, sqlite_url):
    code, path = bench("accuracy", "--m", "300", "--n", "8", "--kappa", "1e3,1e6", "--methods", "cholqr2,rqr",
                       "--seeds", "1", "--db", sqlite_url)
    assert code == 0
    runs = get_all_bench_runs(sqlite_url)
    assert len(runs) == 1 and runs[0]["command"] == "accuracy"
    records = get_run_records(runs[0]["bench_run_id"], sqlite_url)
    df = pd.read_csv(path)
    assert len(records) == len(df) == 4
    assert [r.method for r in records] == list(df.method)
    assert np.allclose([r.orth_err for r in records], df.orth_err)
