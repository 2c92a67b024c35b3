import numpy as np


class CholQRError(Exception):
    """Base class for every failure raised by rcholqr."""


class CholeskyBreakdown(CholQRError, np.linalg.LinAlgError):
    """A Cholesky pivot came out nonpositive: cond(A)^2 is beyond working precision."""

    def __init__(self, pivot_index: int):
        self.pivot_index = pivot_index
        super().__init__(f"Cholesky breakdown at pivot {pivot_index}")


class SingularTriangular(CholQRError, np.linalg.LinAlgError):
    def __init__(self, index: int, detail: str = "zero diagonal entry"):
        self.index = index
        super().__init__(f"Singular triangular factor at index {index}: {detail}")


class NoConvergence(CholQRError, np.linalg.LinAlgError):
    pass


class RankDeficient(CholQRError, np.linalg.LinAlgError):
    def __init__(self, sigma_min: float, sigma_max: float):
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        super().__init__(f"Numerically rank deficient: sigma_min={sigma_min:.3e}, sigma_max={sigma_max:.3e}")


class ZeroLeverageRow(CholQRError, ValueError):
    def __init__(self, row: int):
        self.row = row
        super().__init__(f"Sampled row {row} has zero leverage probability")


class ZeroMatrix(CholQRError, ValueError):
    pass


class DimensionMismatch(CholQRError, ValueError):
    pass


class HypothesisViolated(CholQRError, ValueError):
    """The stability bound does not apply; the algorithm itself did not fail."""

    def __init__(self, which: str):
        self.which = which
        super().__init__(f"Hypothesis violated: {which}")


class DmatFormatError(CholQRError, ValueError):
    pass


class MatrixMarketFormatError(CholQRError, ValueError):
    pass
