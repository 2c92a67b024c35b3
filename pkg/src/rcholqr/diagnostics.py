"""
Error metrics, condition and coherence measures, the probabilistic condition-number
bounds for sketched preconditioners, and the cost models of the CholeskyQR family.
"""
import math
from typing import Optional

import numpy as np

from .errors import HypothesisViolated, RankDeficient, ZeroMatrix
from .kernels import UNIT_ROUNDOFF, as_dense, gram, qr_rless, svd_values
from .models import BoundReport, CommunicationCost, FlopEstimate, Method, RSVDResult, StabilityBound

RANK_TOLERANCE = 1e3 * UNIT_ROUNDOFF


def orthogonality_error(Q) -> float:
    """||Q^T Q - I||_F"""
    Q = as_dense(Q, "Q")
    return float(np.linalg.norm(gram(Q) - np.eye(Q.shape[1])))


def residual_error(A, Q, R) -> float:
    """||A - QR||_F / ||A||_F"""
    A = as_dense(A)
    norm_a = np.linalg.norm(A)
    if norm_a == 0.0:
        raise ZeroMatrix("Relative residual is undefined for a zero matrix.")
    return float(np.linalg.norm(A - np.asarray(Q) @ np.asarray(R)) / norm_a)


def _extreme_singular_values(M: np.ndarray):
    rows, cols = M.shape
    # tall inputs only need the singular values of their n x n R factor
    s = svd_values(qr_rless(M) if rows > cols else M)
    return float(s[0]), float(s[-1])


def cond2(M) -> float:
    """sigma_max / sigma_min, refusing numerically rank-deficient inputs."""
    M = as_dense(M, "M")
    s_max, s_min = _extreme_singular_values(M)
    if s_min < RANK_TOLERANCE * s_max or s_max == 0.0:
        raise RankDeficient(s_min, s_max)
    return s_max / s_min


def cond_estimate(M) -> float:
    """cond2 without the rank check: inf for a singular input."""
    s_max, s_min = _extreme_singular_values(as_dense(M, "M"))
    return math.inf if s_min == 0.0 else s_max / s_min


def theta(Q) -> float:
    """Coherence: the largest squared row norm of an orthogonal Q."""
    Q = as_dense(Q, "Q")
    return float(np.max(np.einsum("ij,ij->i", Q, Q)))


def _chernoff_logs(eps: float, delta: float):
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}.")
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}.")
    log_lower = -eps - (1.0 - eps) * math.log1p(-eps)
    log_upper = delta - (1.0 + delta) * math.log1p(delta)
    return log_lower, log_upper


def _chernoff_report(n: int, exponent: float, eps: float, delta: float) -> BoundReport:
    log_lower, log_upper = _chernoff_logs(eps, delta)
    # evaluated in log space; the terms underflow gracefully to zero for large exponents
    lower = math.exp(exponent * log_lower)
    upper = math.exp(exponent * log_upper)
    tail = math.exp(math.log(n) + np.logaddexp(exponent * log_lower, exponent * log_upper))
    return BoundReport(
        epsilon=eps,
        delta=delta,
        tail_probability=tail,
        cond_threshold=math.sqrt((1.0 + delta) / (1.0 - eps)),
        lower_term=lower,
        upper_term=upper,
    )


def chernoff_tail_uniform(n: int, l: int, m: int, thetaQ: float, eps: float, delta: float) -> BoundReport:
    """
    Tail bound for uniform row sampling:
    P[cond(X) >= sqrt((1+delta)/(1-eps))] <= n [ (e^-eps/(1-eps)^(1-eps))^t + (e^delta/(1+delta)^(1+delta))^t ]
    with t = l / (m theta(Q)).
    """
    if not 0.0 < thetaQ <= 1.0:
        raise ValueError(f"theta(Q) must lie in (0, 1], got {thetaQ}.")
    return _chernoff_report(n, l / (m * thetaQ), eps, delta)


def chernoff_tail_leverage(n: int, l: int, eps: float, delta: float) -> BoundReport:
    """The same bound for leverage-score sampling, with exponent t = l / n."""
    return _chernoff_report(n, l / n, eps, delta)


def gaussian_tail(n: int, l: int) -> BoundReport:
    """P[cond(X) >= (3 + sqrt(n/l)) / (1 - sqrt(n/l))] <= 2 exp(-(sqrt(l) - sqrt(n))^2 / 8)"""
    if not l > n:
        raise ValueError(f"The Gaussian bound needs l > n, got l={l}, n={n}.")
    r = math.sqrt(n / l)
    return BoundReport(
        tail_probability=2.0 * math.exp(-((math.sqrt(l) - math.sqrt(n)) ** 2) / 8.0),
        cond_threshold=(3.0 + r) / (1.0 - r),
    )


def gaussian_extreme_sv_tails(n: int, l: int, eps: float):
    """
    Tail bounds on the extreme singular values of Omega Q / sqrt(l):
    P[sigma_max > 1 + eps + sqrt(n/l)] and P[sigma_min < 1 - eps - sqrt(n/l)] are each <= exp(-l eps^2 / 2).
    Returns (upper_threshold, lower_threshold, tail).
    """
    r = math.sqrt(n / l)
    return 1.0 + eps + r, 1.0 - eps - r, math.exp(-l * eps * eps / 2.0)


def flop_estimate(method: Method, m: int, n: int, l: Optional[int] = None, p: int = 1) -> FlopEstimate:
    """Leading-order flop counts; lower-order terms are omitted on purpose."""
    method = Method(method)
    l = 2 * n if l is None else l
    n2 = float(n) * n
    if method == Method.householder:
        return FlopEstimate(total=n2 * (4 * m - 4 * n / 3), critical_path=None)
    if method == Method.cholqr:
        return FlopEstimate(total=n2 * (2 * m + n / 3), critical_path=n2 * (2 * m / p + n / 3))
    if method == Method.cholqr2:
        return FlopEstimate(total=n2 * (4 * m + 2 * n / 3), critical_path=n2 * (4 * m / p + 2 * n / 3))
    if method == Method.scholqr3:
        return FlopEstimate(total=n2 * (6 * m + n), critical_path=n2 * (6 * m / p + n))
    if method == Method.rlu:
        return FlopEstimate(total=n2 * (3 * m + l), critical_path=n2 * (3 * m / p + l))
    # rqr and its Gaussian-sketch variant share the preconditioning cost (projection excluded)
    return FlopEstimate(total=n2 * (3 * m + 4 * l - n), critical_path=n2 * (3 * m / p + 4 * l - n))


# A Grammian reduce moves p n^2/2 values (one symmetric triangle per process), an R
# broadcast another p n^2/2, and a row gather of the sketch n l.
def reduce_volume(n: int, p: int) -> float:
    return p * n * n / 2.0


def broadcast_volume(n: int, p: int) -> float:
    return p * n * n / 2.0


def communication_cost(method: Method, n: int, p: int, l: Optional[int] = None) -> CommunicationCost:
    """
    Collective operations and values moved by one run without sketch redraws.

    CholeskyQR: 2 and p n^2; CholeskyQR2: 4 and 2 p n^2; sCholeskyQR3: 6 and 3 p n^2;
    rLU/rQR: 4 and 3/2 p n^2 + n l (gather, broadcast of the preconditioner, reduce,
    broadcast). The Gaussian sketch replaces the gather with a reduce of p l x n
    partial projections. Each redraw adds one gather of the larger sample.
    """
    method = Method(method)
    l = 2 * n if l is None else l
    passes = {Method.cholqr: 1, Method.cholqr2: 2, Method.scholqr3: 3}
    if method in passes:
        k = passes[method]
        return CommunicationCost(times=2 * k, volume=k * (reduce_volume(n, p) + broadcast_volume(n, p)))
    if method == Method.householder:
        raise ValueError("HouseholderQR is not distributed by this model.")
    sketch_volume = float(n * l) if method != Method.rqr_gauss else float(p * n * l)
    volume = broadcast_volume(n, p) + reduce_volume(n, p) + broadcast_volume(n, p) + sketch_volume
    return CommunicationCost(times=4, volume=volume)


def stability_constants(m: int, n: int, l: int, c: float = 1.0):
    """(alpha, beta) of the inexact rQR analysis: alpha = c l n u (Householder QR), beta = c m sqrt(n) u."""
    return c * l * n * UNIT_ROUNDOFF, c * m * math.sqrt(n) * UNIT_ROUNDOFF


def stability_gamma(alpha: float, beta: float, condA: float, condA1: float, condX: float) -> StabilityBound:
    """
    cond(X_hat) <= (1+gamma)/(1-gamma) cond(X) with gamma = 2(beta cond(A) + alpha cond(A1)),
    valid when beta cond(A) < 1/2, alpha cond(A1) < 1/2 and gamma cond(X) < 1.
    """
    if not beta * condA < 0.5:
        raise HypothesisViolated("beta*cond(A) < 1/2")
    if not alpha * condA1 < 0.5:
        raise HypothesisViolated("alpha*cond(A1) < 1/2")
    gamma = 2.0 * (beta * condA + alpha * condA1)
    if not gamma * condX < 1.0:
        raise HypothesisViolated("gamma*cond(X) < 1")
    factor = (1.0 + gamma) / (1.0 - gamma)
    return StabilityBound(gamma=gamma, factor=factor, cond_inflation=factor * condX)


def rsvd_consistency(result: RSVDResult) -> float:
    """||U^T U - Sigma^2||_F / ||Sigma^2||_F for the unnormalized U = A U~ of RSVD."""
    s2 = np.diag(result.sigma ** 2)
    return float(np.linalg.norm(result.u.T @ result.u - s2) / np.linalg.norm(s2))
