import numpy as np
import pytest

from rcholqr.log_context import active_log_path
from rcholqr.matgen import synthesize
from rcholqr.models import MatrixSpec


@pytest.fixture
def make_matrix():
    """Seeded m x n matrix with ||A||_2 = 1 and cond(A) = kappa."""
    def build(m: int, n: int, kappa: float, seed: int = 0) -> np.ndarray:
        return synthesize(MatrixSpec(m=m, n=n, kappa=kappa, seed=seed))
    return build


@pytest.fixture
def orthogonal(make_matrix):
    return make_matrix(500, 10, 1.0, seed=3)


@pytest.fixture
def sqlite_url(tmp_path):
    return f"sqlite:///{tmp_path / 'bench.db'}"


@pytest.fixture
def run_log(tmp_path):
    """Points the active run log at a temporary file for the duration of a test."""
    path = tmp_path / "run.log"
    token = active_log_path.set(str(path))
    yield path
    active_log_path.reset(token)
