import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from qcrb.models import ParametricModel, builtin_flip, builtin_trig, eigencurves
from qcrb.numlin import eigh
from qcrb.qfi import (
    build_q,
    delta_discrepancy,
    is_singular,
    q_residuals,
    qfi_f2,
    qfi_f3_fd,
    qfi_f3_symmetric,
    qfi_report,
    sld_bounded,
    solve_sld,
)

from .conftest import random_density, random_hermitian

FLIP, TRIG = builtin_flip(), builtin_trig()
HALF_PI = math.pi / 2


def rotated(model, U, name="rotated"):
    """Same spectrum in a fixed non-computational basis; no analytic derivatives."""
    return ParametricModel(name, model.dim, model.domain, lambda t: U @ model.rho(t) @ U.conj().T)


def rotation3():
    A = np.array([[0, 0.3, -0.5], [-0.3, 0, 0.7], [0.5, -0.7, 0]])
    return expm(A)  # antisymmetric generator, so orthogonal


def three_level():
    def rho(t):
        s = math.sin(t) ** 2 / 2
        return np.diag([math.cos(t) ** 2, s, s]) + 0j

    return ParametricModel("three", 3, (0.0, HALF_PI), rho)


# -- SLD -----------------------------------------------------------------------------


def test_sld_flip():
    sld = solve_sld(eigh(FLIP.rho_at(0.3)), FLIP.drho_at(0.3))
    np.testing.assert_allclose(sld.op, np.diag([-1 / 0.7, 1 / 0.3]), atol=1e-10)
    assert sld.defined.all()
    assert sld.residual < 1e-8


def test_sld_trig():
    t = math.pi / 4
    np.testing.assert_allclose(solve_sld(eigh(TRIG.rho_at(t)), TRIG.drho_at(t)).op, np.diag([-2, 2]), atol=1e-12)


def test_sld_pure_state_undefined_pair():
    sld = solve_sld(eigh(np.diag([1.0, 0.0])), np.diag([-1.0, 1.0]))
    # eigenbasis order: index 0 is |1> (eigenvalue 0), index 1 is |0>
    np.testing.assert_array_equal(sld.defined, [[False, True], [True, True]])
    # L00 = 2 <0|drho|0> / (1 + 1) = -1, the q -> 0 value of -1/(1-q)
    np.testing.assert_allclose(sld.op, np.diag([-1.0, 0.0]))
    assert sld.sup_element == 1
    assert sld.residual < 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_sld_residual_and_f2_identity(seed, d):
    rng = np.random.default_rng(seed)
    rank = 1 + seed % d
    rho = random_density(rng, d, rank=rank)
    drho = random_hermitian(rng, d)
    dec = eigh(rho, rank_tol=1e-9)
    sld = solve_sld(dec, drho)
    assert sld.residual < 1e-8 * max(1.0, np.abs(drho).max())
    # f2 equals sum_j lambda_j <e_j|L^2|e_j> restricted to defined entries
    Le = dec.to_eigenbasis(sld.op)
    lam = dec.eigenvalues
    restricted = sum(
        lam[j] * abs(Le[j, k]) ** 2 + lam[k] * abs(Le[j, k]) ** 2
        for j in range(d)
        for k in range(d)
        if sld.defined[j, k]
    ) / 2
    assert abs(qfi_f2(dec, drho) - restricted) < 1e-10 * max(1.0, restricted)


# -- F2 / F3 -------------------------------------------------------------------------


def test_f2_examples():
    assert qfi_f2(eigh(FLIP.rho_at(0.3)), FLIP.drho_at(0.3)) == pytest.approx(1 / 0.21, rel=1e-14)
    assert qfi_f2(eigh(FLIP.rho_at(0.0)), FLIP.drho_at(0.0)) == 1
    assert qfi_f2(eigh(TRIG.rho_at(0.0)), TRIG.drho_at(0.0)) == 0
    assert qfi_f2(eigh(TRIG.rho_at(HALF_PI)), TRIG.drho_at(HALF_PI)) == 0


def test_f3_trig_grid():
    for t in np.linspace(0, HALF_PI, 21):
        assert abs(qfi_f3_fd(TRIG, t).value - 4) < 1e-5


def test_f3_flip():
    est = qfi_f3_fd(FLIP, 0.3)
    assert abs(est.value - 1 / 0.21) < 1e-4
    for q in (0.0, 1.0):
        est = qfi_f3_fd(FLIP, q)
        assert est.divergent and est.value == math.inf
    assert qfi_f3_fd(FLIP, 1.0).direction == -1


def test_f3_step_shrinks_near_the_edge():
    est = qfi_f3_fd(FLIP, 0.01)
    assert est.shrunk and est.eps < 1e-3
    assert est.value == pytest.approx(1 / (0.01 * 0.99), rel=1e-5)


def test_f3_symmetric():
    assert qfi_f3_symmetric(TRIG, 0.3) == pytest.approx(4, abs=1e-8)
    assert math.isnan(qfi_f3_symmetric(TRIG, 0.0))


# -- Q -------------------------------------------------------------------------------


def test_q_trig_interior():
    Q = build_q(TRIG, math.pi / 4)
    assert Q.construction == "product"
    np.testing.assert_allclose(Q.op, np.diag([-math.sqrt(2), math.sqrt(2)]), atol=1e-12)
    assert Q.norm_sq == pytest.approx(4, abs=1e-12)


@pytest.mark.parametrize("t, expected", [(0.0, [0, 2]), (HALF_PI, [-2, 0])])
def test_q_trig_limit(t, expected):
    Q = build_q(TRIG, t)
    assert Q.construction == "limit" and not Q.divergent
    np.testing.assert_allclose(Q.op, np.diag(expected), atol=1e-6)
    assert abs(Q.norm_sq - 4) < 1e-5
    assert max(Q.residual_sld, Q.residual_herm, Q.probe_residual_sld, Q.probe_residual_herm) < 1e-7


def test_q_flip_endpoint_diverges():
    Q = build_q(FLIP, 0.0)
    assert Q.divergent and Q.norm_sq == math.inf


@pytest.mark.parametrize("model", [FLIP, TRIG])
def test_q_residuals_on_grid(model):
    for t in np.linspace(*model.domain, 31):
        Q = build_q(model, t)
        if Q.divergent:
            continue
        assert Q.residual_sld < 1e-7 and Q.residual_herm < 1e-7


def test_q_residuals_helper_exact_for_product_form(rng):
    rho = random_density(rng, 4)
    drho = random_hermitian(rng, 4)
    from qcrb.qfi import q_product

    Q = q_product(eigh(rho), drho)
    assert max(q_residuals(Q, rho, drho)) < 1e-10


# -- singular points, delta and SLD growth -------------------------------------------


def test_singularity_detection():
    assert is_singular(TRIG, 0.0) and is_singular(TRIG, HALF_PI)
    assert not is_singular(TRIG, 0.3)
    assert is_singular(FLIP, 1.0)


def test_delta_examples():
    d0 = delta_discrepancy(eigencurves(TRIG, 0.0), 1e-12, TRIG)
    assert d0.value == 4 and d0.consistent
    assert delta_discrepancy(eigencurves(TRIG, math.pi / 4), 1e-12, TRIG).value == 0
    dq = delta_discrepancy(eigencurves(FLIP, 0.0), 1e-12, FLIP)
    assert dq.value == 0 and dq.limit_value == math.inf


def test_sld_bounded():
    assert sld_bounded(TRIG, 0.3)
    assert not sld_bounded(TRIG, 0.0)
    assert not sld_bounded(FLIP, 0.0)


# -- reports -------------------------------------------------------------------------


def test_report_examples():
    r = qfi_report(TRIG, 0.3)
    for v in (r.f1_q, r.f2, r.f3):
        assert abs(v - 4) < 1e-5
    assert r.delta == 0 and r.sld_bounded_verdict and not r.is_singular
    r = qfi_report(TRIG, 0.0)
    assert (r.f2, r.delta, r.rank) == (0, 4, 1)
    assert abs(r.f3 - 4) < 1e-5 and not r.sld_bounded_verdict
    r = qfi_report(FLIP, 0.0)
    assert r.f2 == 1 and r.f3_divergent and r.q_divergent and not r.sld_bounded_verdict


def check_report_invariants(r):
    if not r.is_singular:
        assert abs(r.f2 - r.f3) < 1e-4 * max(1, r.f3)
        assert abs(r.f1_q - r.f2) < 1e-6 * max(1, r.f2)
    elif math.isfinite(r.f3):
        assert abs(r.f3 - r.f2 - r.delta) < 1e-4 * max(1, r.f3)
    assert r.delta >= -1e-8
    if r.delta > 1e-6:
        assert not r.sld_bounded_verdict


@pytest.mark.parametrize("model", [FLIP, TRIG])
def test_report_invariants_builtin(model):
    for t in np.linspace(*model.domain, 51):
        r = qfi_report(model, t)
        check_report_invariants(r)
        # converse for the built-ins: every singular point has an unbounded SLD
        assert r.sld_bounded_verdict == (not r.is_singular)


def test_numeric_path_matches_analytic_trig():
    c, s = math.cos(0.7), math.sin(0.7)
    U = np.array([[c, -s * 1j], [-s * 1j, c]])
    model = rotated(TRIG, U)
    for t in (0.0, 0.4, HALF_PI):
        r = qfi_report(model, t)
        assert r.drho_source == "numeric" and r.eigencurve_source == "numeric"
        check_report_invariants(r)
        ref = qfi_report(TRIG, t)
        assert abs(r.f2 - ref.f2) < 1e-6
        assert abs(r.f3 - ref.f3) < 1e-5
        assert abs(r.delta - ref.delta) < 1e-4
        assert abs(r.f1_q - ref.f1_q) < 1e-5


@pytest.mark.parametrize("basis", ["diagonal", "rotated"])
def test_two_dimensional_kernel(basis):
    model = three_level() if basis == "diagonal" else rotated(three_level(), rotation3())
    r = qfi_report(model, 0.0)
    assert r.rank == 1 and r.is_singular
    assert abs(r.f2) < 1e-8
    assert abs(r.f3 - 4) < 1e-5
    assert abs(r.delta - 4) < 1e-4
    assert not r.sld_bounded_verdict
    check_report_invariants(r)


def test_random_full_rank_diagonal_models():
    rng = np.random.default_rng(3)
    for _ in range(5):
        d = int(rng.integers(2, 5))
        a, b, c, p = (rng.uniform(lo, hi, d) for lo, hi in ((0.2, 1), (0.1, 1), (0.5, 3), (0, 3)))

        def rho(t, a=a, b=b, c=c, p=p):
            w = a + b * np.sin(c * t + p) ** 2
            return np.diag(w / w.sum()) + 0j

        model = ParametricModel("random", d, (0.0, 1.0), rho)
        for t in np.linspace(0.05, 0.95, 4):
            check_report_invariants(qfi_report(model, t))
