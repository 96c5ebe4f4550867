import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qcrb.estimation import (
    MLE_Q,
    MLE_THETA,
    Amplitude,
    Estimator,
    audit_scan,
    biased_bound,
    exact_stats,
    monte_carlo_stats,
    mle_q,
    mle_theta,
    nfold_bures_sq,
    nfold_fidelity,
    nfold_fidelity_product,
    pmf_family,
    purification_bound,
    purification_terms,
    unbiased_bound,
    ych_check,
)
from qcrb.models import ParametricModel, builtin_flip, builtin_trig

QUARTER_PI = math.pi / 4


def _power(base, k):
    # base**k with the convention 0**0 = 1 and zero weight for negative k
    return np.where(k >= 0, np.power(base, np.maximum(k, 0)), 0.0)


def enumerate_stats(est, n, theta):
    """Brute force over all 2^n outcome strings, ignoring sufficiency."""
    q = est.to_q(theta)
    strings = np.arange(2**n, dtype=np.int64)
    ones = np.zeros_like(strings)
    for i in range(n):
        ones += (strings >> i) & 1
    zeros = n - ones
    prob = _power(q, ones) * _power(1 - q, zeros)
    dprob = ones * _power(q, ones - 1) * _power(1 - q, zeros) - zeros * _power(q, ones) * _power(1 - q, zeros - 1)
    values = est.estimate(ones, n)
    mean = float(np.sum(prob * values))
    var = float(np.sum(prob * (values - mean) ** 2))
    mse = float(np.sum(prob * (values - theta) ** 2))
    dmean = est.dq_dtheta(theta) * float(np.sum(dprob * values))
    return mean, var, mse, dmean


# -- distributions and estimators ------------------------------------------------------


def test_pmf_examples():
    np.testing.assert_allclose(pmf_family(1, 0.3).pmf, [0.7, 0.3], atol=1e-16)
    np.testing.assert_allclose(pmf_family(2, 0.5).pmf, [0.25, 0.5, 0.25], atol=1e-16)
    np.testing.assert_array_equal(pmf_family(10, 0.0).pmf, [1] + [0] * 10)


@pytest.mark.parametrize("n", [1, 7, 100, 10_000, 100_000])
@pytest.mark.parametrize("q", [0.0, 1.6e-308, 1e-6, 0.3, 0.5, 1.0])
def test_pmf_invariants(n, q):
    d = pmf_family(n, q)
    assert abs(d.pmf.sum() - 1) < 1e-12
    assert abs(d.dpmf_dq.sum()) < 1e-10 * max(1, n)


def test_pmf_derivative_matches_finite_difference():
    n, q, h = 12, 0.37, 1e-5
    fd = (pmf_family(n, q + h).pmf - pmf_family(n, q - h).pmf) / (2 * h)
    np.testing.assert_allclose(pmf_family(n, q).dpmf_dq, fd, atol=1e-8)


def test_pmf_rejects_bad_arguments():
    with pytest.raises(ValueError):
        pmf_family(0, 0.5)
    with pytest.raises(ValueError):
        pmf_family(3, 1.5)


def test_mle_examples():
    assert mle_q(3, 10) == 0.3
    assert mle_theta(0, 10) == 0
    assert mle_theta(10, 10) == pytest.approx(math.pi / 2, abs=1e-15)
    assert mle_theta(5, 10) == pytest.approx(QUARTER_PI, abs=1e-15)
    t = np.arange(11)
    np.testing.assert_array_equal(mle_theta(t, 10), np.arcsin(np.sqrt(mle_q(t, 10))))


def test_estimator_rejects_unknown_parameterization():
    with pytest.raises(ValueError):
        Estimator("bad", mle_q, "phi")


# -- exact statistics ------------------------------------------------------------------


@pytest.mark.parametrize("q", [0.0, 0.3, 0.5, 0.9, 1.0])
@pytest.mark.parametrize("n", [1, 10, 100])
def test_mle_q_unbiased_with_binomial_variance(q, n):
    s = exact_stats(MLE_Q, n, q)
    assert abs(s.bias) < 1e-12
    assert abs(s.variance - q * (1 - q) / n) < 1e-12
    assert abs(s.dmean - 1) < 1e-9


def test_mle_theta_examples():
    for n in (1, 10, 1000):
        s = exact_stats(MLE_THETA, n, 0.0)
        assert (s.mean, s.variance, s.dmean) == (0, 0, 0)
    s = exact_stats(MLE_THETA, 1, QUARTER_PI)
    assert abs(s.bias) < 1e-15
    assert abs(s.variance - math.pi**2 / 16) < 1e-15
    assert abs(s.dmean - math.pi / 2) < 1e-15


@pytest.mark.parametrize("est", [MLE_Q, MLE_THETA])
@pytest.mark.parametrize("n", [1, 2, 5, 13, 20])
def test_sufficient_statistic_matches_enumeration(est, n):
    lo, hi = est.domain()
    for theta in np.linspace(lo, hi, 7):
        s = exact_stats(est, n, theta)
        mean, var, mse, dmean = enumerate_stats(est, n, theta)
        assert abs(s.mean - mean) < 1e-12
        assert abs(s.variance - var) < 1e-12
        assert abs(s.mse - mse) < 1e-12
        assert abs(s.dmean - dmean) < 1e-12 * max(1, abs(dmean))


@given(st.floats(0, math.pi / 2), st.integers(1, 300))
def test_stats_invariants(theta, n):
    s = exact_stats(MLE_THETA, n, theta)
    assert abs(s.mse - (s.variance + s.bias**2)) < 1e-12
    h = 1e-5
    mean = lambda t: exact_stats(MLE_THETA, n, t).mean  # noqa: E731
    if h <= theta <= math.pi / 2 - h:
        fd = (mean(theta + h) - mean(theta - h)) / (2 * h)
    else:
        sgn = 1 if theta < h else -1
        fd = sgn * (-3 * mean(theta) + 4 * mean(theta + sgn * h) - mean(theta + 2 * sgn * h)) / (2 * h)
    assert abs(fd - s.dmean) < 1e-6 * max(1, math.sqrt(n))


@pytest.mark.parametrize("n", [1, 10, 100, 1000])
def test_bias_antisymmetry(n):
    for theta in np.linspace(0, math.pi / 2, 41):
        a = exact_stats(MLE_THETA, n, theta).bias
        b = exact_stats(MLE_THETA, n, math.pi / 2 - theta).bias
        assert abs(a + b) < 1e-12


def test_monte_carlo_agrees_with_exact_sum():
    s = exact_stats(MLE_THETA, 10, 0.4)
    mean, var = monte_carlo_stats(MLE_THETA, 10, 0.4, draws=200_000, seed=1)
    assert abs(mean - s.mean) < 5 * math.sqrt(s.variance / 200_000)
    assert abs(var - s.variance) < 0.02 * s.variance
    assert monte_carlo_stats(MLE_THETA, 10, 0.4, 100, seed=9) == monte_carlo_stats(MLE_THETA, 10, 0.4, 100, seed=9)


# -- QCRB variants -----------------------------------------------------------------------


def test_bound_examples():
    s = exact_stats(MLE_THETA, 1, QUARTER_PI)
    assert abs(biased_bound(s, 4.0) - math.pi**2 / 16) < 1e-15
    assert biased_bound(exact_stats(MLE_THETA, 10, 0.0), 40.0) == 0
    s = exact_stats(MLE_Q, 10, 0.3)
    assert abs(biased_bound(s, 10 / 0.21) - 0.021) < 1e-15
    assert unbiased_bound(math.inf) == 0 and biased_bound(s, math.inf) == 0
    with pytest.raises(ValueError):
        unbiased_bound(0.0)


def test_audit_trig_endpoints_and_centre():
    recs = audit_scan(builtin_trig(), MLE_THETA, [10], [0.0, QUARTER_PI, math.pi / 2])
    r0, rc, r1 = recs
    assert r0.nvar == 0 and r0.violated_unbiased and r0.holds_biased and r0.biased_bound == 0
    assert abs(rc.bias) < 1e-15 and not rc.violated_unbiased
    assert r1.violated_unbiased and r1.holds_biased


def test_audit_flip_saturates_interior_and_breaks_f2_bound_at_ends():
    grid = np.linspace(0, 1, 11)
    for r in audit_scan(builtin_flip(), MLE_Q, [1, 10], grid):
        if 0 < r.theta < 1:
            assert abs(r.variance - r.unbiased_bound) < 1e-12
            assert not r.violated_unbiased and r.holds_biased
        else:
            assert r.qfi == math.inf and r.unbiased_bound == 0 and not r.violated_unbiased
            assert r.violated_f2 and r.f2_bound == pytest.approx(1 / r.n)


@pytest.mark.parametrize("model, est", [(builtin_flip(), MLE_Q), (builtin_trig(), MLE_THETA)])
def test_biased_bound_holds_everywhere(model, est):
    grid = np.linspace(*model.domain, 41)
    recs = audit_scan(model, est, [1, 10, 100, 1000], grid)
    assert all(r.holds_biased for r in recs)
    assert [(r.n, r.theta) for r in recs] == [(n, float(t)) for n in (1, 10, 100, 1000) for t in grid]


def test_audit_rejects_mismatched_model():
    with pytest.raises(ValueError, match="parameterization"):
        audit_scan(builtin_flip(), MLE_THETA, [1], [0.3])


# -- two-point bounds ------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 3, 10, 50])
def test_nfold_fidelity_two_paths(n):
    for q1 in np.linspace(0, 1, 6):
        for q2 in np.linspace(0, 1, 6):
            assert abs(nfold_fidelity(n, q1, q2) - nfold_fidelity_product(n, q1, q2)) < 1e-12
            assert abs(nfold_bures_sq(n, q1, q2) - 2 * (1 - nfold_fidelity(n, q1, q2))) < 1e-12


def test_ych_examples():
    r = ych_check(10, MLE_Q, 0.3, 0.1)
    assert r.form == "unbiased" and r.holds
    r = ych_check(10, MLE_Q, 0.3, 0.0)
    assert r.rhs == 0 and r.lhs == exact_stats(MLE_Q, 10, 0.3).mse and r.degenerate
    assert ych_check(10, MLE_THETA, 0.0, 0.2).form == "biased"
    with pytest.raises(ValueError):
        ych_check(10, MLE_Q, 0.95, 0.1)


@pytest.mark.parametrize("n", [1, 10])
def test_ych_limit_is_the_qcrb(n):
    r = ych_check(n, MLE_Q, 0.3, 1e-3)
    assert abs(r.rhs * n / 0.21 - 1) < 1e-3


def test_ych_grids():
    for n in (1, 10):
        for q in np.linspace(0, 1, 21):
            for e in (0.01, 0.05, 0.1, 0.2, 0.4):
                e = e if q + e <= 1 else -e
                assert ych_check(n, MLE_Q, q, e).holds
                t = q * math.pi / 2
                e2 = e if t + abs(e) <= math.pi / 2 else -abs(e)
                assert ych_check(n, MLE_THETA, t, e2).holds


def test_amplitudes():
    A = Amplitude.from_density(builtin_flip().rho_at(0.2))
    B = Amplitude.from_density(builtin_flip().rho_at(0.5))
    np.testing.assert_allclose(A.density(), np.diag([0.8, 0.2]), atol=1e-15)
    assert A.is_parallel(B)
    assert not A.is_parallel(Amplitude(B.op @ np.array([[0, 1], [1, 0]])))


def test_purification_examples():
    assert purification_bound(5, MLE_Q, 0.2, 0.5) <= exact_stats(MLE_Q, 5, 0.2).mse + 1e-12
    assert purification_bound(5, MLE_Q, 0.2, 0.2) == 0
    b = purification_bound(1, MLE_Q, 0.3, 0.3 + 1e-4)
    assert abs(b / 0.21 - 1) < 1e-3


def test_purification_grid():
    qs = np.linspace(0, 1, 21)
    for n in (1, 5, 20):
        for q in qs:
            mse = exact_stats(MLE_Q, n, q).mse
            for qp in qs:
                assert mse >= purification_bound(n, MLE_Q, q, qp) - 1e-12


def test_purification_beta_for_unbiased_estimator():
    # for an unbiased estimator beta reduces to half the shift weighted by the overlap
    beta, dist = purification_terms(3, MLE_Q, 0.2, 0.6)
    assert dist == pytest.approx(nfold_bures_sq(3, 0.2, 0.6), abs=1e-15)
    assert 0 < beta < 0.4


def test_purification_rejects_biased_estimator_and_dense_model():
    with pytest.raises(ValueError, match="unbiased"):
        purification_bound(5, MLE_THETA, 0.2, 0.5)
    m = builtin_flip()
    c, s = math.cos(0.3), math.sin(0.3)
    U = np.array([[c, -s], [s, c]])
    dense = ParametricModel("dense", 2, (0.0, 1.0), lambda q: U @ m.rho(q) @ U.T)
    with pytest.raises(ValueError, match="diagonal"):
        purification_terms(2, MLE_Q, 0.2, 0.5, dense)
