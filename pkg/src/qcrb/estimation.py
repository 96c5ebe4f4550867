"""Exact estimator statistics for n-copy binomial experiments, and error bounds.

Each copy of ``diag(1 - q, q)`` is measured in the computational basis; the
count ``t`` of 1-outcomes is sufficient, so every expectation below is an
exact finite sum over ``t = 0..n``.

Bounds audited against the estimator error:

* unbiased QCRB          ``var >= 1 / (n F)``
* biased QCRB            ``var >= (d mean / d theta)^2 / (n F)``
* Yang-Chiribella-Hayashi, unbiased and biased two-point forms
* purification bound     ``mse >= beta^2 / (4 ||A' - A||_2^2)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy
from scipy.stats import binom

from .models import builtin_flip, builtin_trig
from .numlin import bhattacharyya, fidelity, mat_sqrt
from .qfi import qfi_report

BIASED_TOL = 1e-9
UNBIASED_TOL = 1e-9
MODEL_MATCH_ATOL = 1e-12


@dataclass(frozen=True)
class OutcomeDistribution:
    n: int
    q: float
    pmf: np.ndarray
    dpmf_dq: np.ndarray

    @property
    def support(self):
        return np.arange(self.n + 1)


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


def _binom_pmf(t, n, q):
    if 0.0 < q < np.finfo(float).tiny:
        # scipy's pmf overflows internally for subnormal q; log form is exact enough here
        t = np.asarray(t)
        inside = (t >= 0) & (t <= n)
        tc = np.clip(t, 0, n)
        logp = gammaln(n + 1) - gammaln(tc + 1) - gammaln(n - tc + 1) + xlogy(tc, q) + xlog1py(n - tc, -q)
        return np.where(inside, np.exp(logp), 0.0)
    return binom.pmf(t, n, q)


def pmf_family(n, q):
    """Binomial law of the count t and its q-derivative.

    The derivative uses ``n [b(t-1; n-1, q) - b(t; n-1, q)]``, which stays
    exact at q = 0 and q = 1.
    """
    n = _check_n(n)
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q!r}")
    t = np.arange(n + 1)
    pmf = _binom_pmf(t, n, q)
    lower = _binom_pmf(t - 1, n - 1, q)
    upper = _binom_pmf(t, n - 1, q)
    return OutcomeDistribution(n, q, pmf, n * (lower - upper))


def mle_q(t, n):
    return np.asarray(t, dtype=float) / n


def mle_theta(t, n):
    return np.arcsin(np.sqrt(mle_q(t, n)))


@dataclass(frozen=True)
class Estimator:
    """An estimator of either q or theta (with q = sin^2 theta) from the count t."""

    name: str
    func: Callable[[np.ndarray, int], np.ndarray]
    parameterization: str = "q"
    unbiased: bool = False

    def __post_init__(self):
        if self.parameterization not in ("q", "theta"):
            raise ValueError(f"parameterization must be 'q' or 'theta', got {self.parameterization!r}")

    def estimate(self, t, n):
        return self.func(t, n)

    def to_q(self, theta):
        if self.parameterization == "q":
            return float(theta)
        return math.sin(theta) ** 2

    def dq_dtheta(self, theta):
        if self.parameterization == "q":
            return 1.0
        return math.sin(2 * theta)

    def domain(self):
        return (0.0, 1.0) if self.parameterization == "q" else (0.0, math.pi / 2)

    def model(self):
        return builtin_flip() if self.parameterization == "q" else builtin_trig()


MLE_Q = Estimator("mle_q", mle_q, "q", unbiased=True)
MLE_THETA = Estimator("mle_theta", mle_theta, "theta", unbiased=False)
ESTIMATORS = {e.name: e for e in (MLE_Q, MLE_THETA)}


@dataclass(frozen=True)
class EstimatorStats:
    theta: float
    n: int
    mean: float
    bias: float
    variance: float
    mse: float
    dmean: float


def exact_stats(est, n, theta):
    """Mean, bias, variance, MSE and d(mean)/d(theta) by exact summation."""
    n = _check_n(n)
    dist = pmf_family(n, est.to_q(theta))
    values = est.estimate(dist.support, n)
    p = dist.pmf
    mean = float(np.sum(values * p))
    variance = float(np.sum((values - mean) ** 2 * p))
    mse = float(np.sum((values - theta) ** 2 * p))
    dmean = est.dq_dtheta(theta) * float(np.sum(values * dist.dpmf_dq))
    return EstimatorStats(float(theta), n, mean, mean - theta, variance, mse, dmean)


def monte_carlo_stats(est, n, theta, draws=100_000, seed=0):
    """Sampled mean and variance; a cross-check for :func:`exact_stats` only."""
    rng = np.random.default_rng(seed)
    t = rng.binomial(_check_n(n), est.to_q(theta), size=draws)
    values = est.estimate(t, n)
    return float(values.mean()), float(values.var())


def unbiased_bound(qfi_total):
    if qfi_total <= 0:
        raise ValueError(f"QFI must be positive, got {qfi_total!r}")
    return 0.0 if math.isinf(qfi_total) else 1.0 / qfi_total


def biased_bound(stats, qfi_total):
    """``dmean^2 / F`` with F the total QFI of all copies (divergent F gives 0)."""
    if qfi_total <= 0:
        raise ValueError(f"QFI must be positive, got {qfi_total!r}")
    if math.isinf(qfi_total):
        return 0.0
    return stats.dmean**2 / qfi_total


# -- two-point bounds --------------------------------------------------------------


def nfold_fidelity(n, q1, q2):
    """Fidelity of n-copy states, as the Bhattacharyya coefficient of the count laws."""
    return bhattacharyya(pmf_family(n, q1).pmf, pmf_family(n, q2).pmf)


def nfold_fidelity_product(n, q1, q2, model=None):
    """Same quantity via the single-copy operator fidelity raised to the n-th power."""
    model = builtin_flip() if model is None else model
    return fidelity(model.rho_at(q1), model.rho_at(q2)) ** n


def nfold_bures_sq(n, q1, q2):
    """``2 (1 - B)`` computed as ``sum (sqrt p1 - sqrt p2)^2`` (no cancellation)."""
    p1 = pmf_family(n, q1).pmf
    p2 = pmf_family(n, q2).pmf
    return float(np.sum((np.sqrt(p1) - np.sqrt(p2)) ** 2))


@dataclass(frozen=True)
class YchResult:
    lhs: float
    rhs: float
    form: str  # "unbiased" or "biased"
    degenerate: bool = False

    @property
    def holds(self):
        return self.lhs >= self.rhs - 1e-12


def ych_check(n, est, theta, eps, form="auto"):
    """Both sides of the two-point (Yang-Chiribella-Hayashi) inequality.

    ``unbiased``: (mse_t + mse_{t+e} + e^2) / 2 >= e^2 / (4 d_B^2)
    ``biased``:   var_t + var_{t+e} + dmean^2 >= dmean^2 / (2 d_B^2)

    with ``dmean`` the change of the mean between the two points. ``auto``
    picks the unbiased form for estimators flagged unbiased. ``eps`` may be
    negative.
    """
    if form == "auto":
        form = "unbiased" if est.unbiased else "biased"
    if form not in ("unbiased", "biased"):
        raise ValueError(f"unknown YCH form {form!r}")
    lo, hi = est.domain()
    other = theta + eps
    if not (lo <= theta <= hi and lo <= other <= hi):
        raise ValueError(f"both {theta!r} and {other!r} must lie in [{lo}, {hi}]")
    a = exact_stats(est, n, theta)
    if eps == 0:
        lhs = a.mse if form == "unbiased" else 2 * a.variance
        return YchResult(lhs, 0.0, form, degenerate=True)
    b = exact_stats(est, n, other)
    d2 = nfold_bures_sq(n, est.to_q(theta), est.to_q(other))
    shift = b.mean - a.mean
    if form == "unbiased":
        lhs = (a.mse + b.mse + eps * eps) / 2
        num, den = eps * eps, 4 * d2
    else:
        lhs = a.variance + b.variance + shift * shift
        num, den = shift * shift, 2 * d2
    if den == 0:
        if num != 0:
            raise ValueError(f"zero Bures distance between distinct points {theta!r}, {other!r}")
        return YchResult(lhs, 0.0, form, degenerate=True)
    return YchResult(lhs, num / den, form)


@dataclass(frozen=True)
class Amplitude:
    """An operator A with A A^+ = rho."""

    op: np.ndarray

    @classmethod
    def from_density(cls, rho):
        return cls(mat_sqrt(rho))

    def density(self):
        return self.op @ self.op.conj().T

    def is_parallel(self, other, atol=1e-10):
        """``A^+ B`` Hermitian and positive semidefinite within ``atol``."""
        M = self.op.conj().T @ other.op
        if np.max(np.abs(M - M.conj().T)) > atol:
            return False
        return bool(np.linalg.eigvalsh((M + M.conj().T) / 2)[0] >= -atol)


def purification_terms(n, est, theta, theta_p, model=None):
    """``(beta, ||A' - A||_2^2)`` for square-root amplitudes of the n-copy states.

    The count projectors make the amplitudes block diagonal, so
    ``||sqrt(E_t)(A' - A)||^2 = (sqrt p'(t) - sqrt p(t))^2``.
    """
    model = est.model() if model is None else model
    for t in (theta, theta_p):
        rho = model.rho_at(t)
        if not model.diagonal or np.max(np.abs(rho - np.diag(np.diag(rho)))) > MODEL_MATCH_ATOL:
            raise ValueError("purification bound needs a diagonal (commuting) model")
    A = Amplitude.from_density(model.rho_at(theta))
    B = Amplitude.from_density(model.rho_at(theta_p))
    if not A.is_parallel(B):
        raise ValueError("square-root amplitudes are not parallel for this model")
    n = _check_n(n)
    p = pmf_family(n, est.to_q(theta)).pmf
    pp = pmf_family(n, est.to_q(theta_p)).pmf
    blocks = (np.sqrt(pp) - np.sqrt(p)) ** 2
    eta = est.estimate(np.arange(n + 1), n) - theta
    beta = theta_p - theta - float(np.sum(eta * blocks))
    return beta, float(np.sum(blocks))


def purification_bound(n, est, theta, theta_p, model=None):
    """``beta^2 / (4 ||A' - A||^2)``, a lower bound on the MSE of an unbiased
    estimator at ``theta``; 0 when the two points coincide."""
    if not est.unbiased:
        raise ValueError(f"purification bound needs an unbiased estimator; {est.name} is biased")
    beta, dist_sq = purification_terms(n, est, theta, theta_p, model)
    if dist_sq == 0:
        return 0.0
    return beta * beta / (4 * dist_sq)


# -- scans ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundRecord:
    theta: float
    n: int
    mean: float
    bias: float
    mse: float
    variance: float
    dmean: float
    qfi: float  # per copy
    unbiased_bound: float
    biased_bound: float
    violated_unbiased: bool
    holds_biased: bool
    f2_bound: float = math.nan  # 1/(n f2), the bound built on the discontinuous form
    violated_f2: bool = False
    ych_lhs: Optional[float] = None
    ych_rhs: Optional[float] = None
    purification_bound: Optional[float] = None

    @property
    def nvar(self):
        return self.n * self.variance

    @property
    def ych_holds(self):
        return self.ych_lhs is None or self.ych_lhs >= self.ych_rhs - 1e-12

    @property
    def purification_holds(self):
        return self.purification_bound is None or self.mse >= self.purification_bound - 1e-12


def _check_model_matches(model, est, theta):
    q = est.to_q(theta)
    if model.dim != 2 or np.max(np.abs(model.rho_at(theta) - np.diag([1 - q, q]))) > MODEL_MATCH_ATOL:
        raise ValueError(f"model {model.name} is not diag(1-q, q) under {est.name}'s parameterization")


def qfi_for_bounds(report):
    """Per-copy QFI used in the bounds: ||Q||^2, the continuous QFI."""
    return math.inf if report.q_divergent else report.f1_q


def audit_scan(model, est, n_list, grid, rank_tol=None, fd_eps=None, ych_eps=None, purification_thetap=None):
    """One :class:`BoundRecord` per (n, theta), ordered by n then theta.

    The unbiased bound compares with the variance, matching the rescaled
    ``n var`` against ``1/F`` picture; where the QFI diverges both bounds are 0.
    """
    kwargs = {"rank_tol": rank_tol}
    if fd_eps is not None:
        kwargs["fd_eps"] = fd_eps
    grid = [float(t) for t in grid]
    qfis, f2s = [], []
    for t in grid:
        _check_model_matches(model, est, t)
        report = qfi_report(model, t, **kwargs)
        qfis.append(qfi_for_bounds(report))
        f2s.append(report.f2)
    lo, hi = est.domain()
    records = []
    for n in n_list:
        for t, F, f2 in zip(grid, qfis, f2s):
            stats = exact_stats(est, n, t)
            total = n * F
            ub = unbiased_bound(total)
            f2b = 1.0 / (n * f2) if f2 > 0 else math.inf
            bb = biased_bound(stats, total)
            ych = (None, None)
            if ych_eps is not None:
                e = ych_eps if t + ych_eps <= hi else -ych_eps
                res = ych_check(n, est, t, e)
                ych = (res.lhs, res.rhs)
            pb = None
            if purification_thetap is not None:
                pb = purification_bound(n, est, t, purification_thetap, model)
            records.append(
                BoundRecord(
                    theta=t,
                    n=int(n),
                    mean=stats.mean,
                    bias=stats.bias,
                    mse=stats.mse,
                    variance=stats.variance,
                    dmean=stats.dmean,
                    qfi=F,
                    unbiased_bound=ub,
                    biased_bound=bb,
                    violated_unbiased=ub - stats.variance > UNBIASED_TOL,
                    holds_biased=bb - stats.variance <= BIASED_TOL,
                    f2_bound=f2b,
                    violated_f2=f2b - stats.variance > UNBIASED_TOL,
                    ych_lhs=ych[0],
                    ych_rhs=ych[1],
                    purification_bound=pb,
                )
            )
    return records
