"""Quantum Fisher information in its three forms, and where they disagree.

``f2``   the eigenbasis sum over pairs with a nonzero eigenvalue sum;
``f3``   the fidelity (Bures metric) limit, one-sided from the point;
``f1_q`` the squared Hilbert-Schmidt norm of Q, the bounded stand-in for
         ``L sqrt(rho)``; at rank-changing points Q is a one-sided limit.

``f2`` jumps at rank-changing points while ``f3`` and ``f1_q`` stay
continuous. The jump equals ``delta``, twice the summed curvature of the
eigenvalues that vanish there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .models import eigencurves, split_degenerate
from .numlin import bures_distance_sq, eigh, mat_sqrt

log = logging.getLogger(__name__)

DEFAULT_FD_EPS = 1e-3
DEFAULT_PROBE = 1e-4
LIMIT_STEPS = (1e-3, 1e-4, 1e-5)
# smallest growth ratio between successive probes counted as divergence
F3_GROWTH = 1.5
SLD_GROWTH = 2.0
# fraction of the local curvature scale of sqrt(lambda) allowed as fd step
F3_SCALE_FRACTION = 0.01


@dataclass(frozen=True)
class SldOperator:
    """SLD in the computational basis.

    Elements on eigenvector pairs whose eigenvalue sum is at most the rank
    tolerance are undetermined; they are stored as 0 and flagged false in
    ``defined`` (indexed in the eigenbasis).
    """

    op: np.ndarray
    defined: np.ndarray
    sup_element: float
    residual: float


@dataclass(frozen=True)
class QOperator:
    op: np.ndarray
    construction: str  # "product" or "limit"
    divergent: bool = False
    residual_sld: float = 0.0  # ||(Q r + r Q^+)/2 - drho||_2 with r = sqrt(rho)
    residual_herm: float = 0.0  # ||r Q - Q^+ r||_2
    probe_residual_sld: float = 0.0
    probe_residual_herm: float = 0.0

    @property
    def norm_sq(self):
        if self.divergent:
            return math.inf
        return float(np.sum(np.abs(self.op) ** 2))


@dataclass(frozen=True)
class F3Estimate:
    value: float
    divergent: bool
    eps: float  # first step of the extrapolated sequence
    direction: int  # +1 forward, -1 backward
    shrunk: bool
    sequence: tuple = ()


@dataclass(frozen=True)
class DeltaResult:
    value: float
    kernel_curves: tuple
    limit_value: float  # sum of lambda'^2 / lambda next to the point
    consistent: bool
    reliable: bool


@dataclass(frozen=True)
class QfiReport:
    theta: float
    rank: int
    is_singular: bool
    f1_q: float
    f2: float
    f3: float
    f3_symmetric: float
    delta: float
    sld_sup_element: float
    sld_bounded_verdict: bool
    f3_divergent: bool
    q_divergent: bool
    q_construction: str
    f3_eps: float
    drho_source: str
    eigencurve_source: str
    warnings: tuple = field(default=())


# -- pieces on a fixed decomposition ----------------------------------------------


def _pair_sums(decomp):
    lam = decomp.eigenvalues
    return lam[:, None] + lam[None, :]


def _defined_pairs(decomp, rank_tol=None):
    # pair sum above tol, and not both eigenvalues in the kernel
    tol = decomp.rank_tol if rank_tol is None else rank_tol
    support = decomp.eigenvalues > tol
    return (_pair_sums(decomp) > tol) & (support[:, None] | support[None, :])


def solve_sld(decomp, drho, rank_tol=None):
    d = decomp.to_eigenbasis(np.asarray(drho, dtype=complex))
    mask = _defined_pairs(decomp, rank_tol)
    sums = _pair_sums(decomp)
    L_eig = np.zeros_like(d)
    L_eig[mask] = 2.0 * d[mask] / sums[mask]
    L = decomp.from_eigenbasis(L_eig)
    rho = decomp.reconstruct()
    target = decomp.from_eigenbasis(np.where(mask, d, 0.0))
    residual = float(np.linalg.norm((L @ rho + rho @ L) / 2 - target))
    sup = float(np.max(np.abs(L_eig[mask]), initial=0.0))
    return SldOperator(L, mask, sup, residual)


def qfi_f2(decomp, drho, rank_tol=None):
    d = decomp.to_eigenbasis(np.asarray(drho, dtype=complex))
    mask = _defined_pairs(decomp, rank_tol)
    sums = _pair_sums(decomp)
    return float(np.sum(2.0 * np.abs(d[mask]) ** 2 / sums[mask]))


def q_product(decomp, drho, rank_tol=None):
    """Q = L sqrt(rho) from its eigenbasis elements (undefined pairs -> 0)."""
    d = decomp.to_eigenbasis(np.asarray(drho, dtype=complex))
    mask = _defined_pairs(decomp, rank_tol)
    sums = _pair_sums(decomp)
    root = np.sqrt(np.clip(decomp.eigenvalues, 0.0, None))
    Q_eig = np.zeros_like(d)
    coef = 2.0 * root[None, :] / np.where(mask, sums, 1.0)
    Q_eig[mask] = (coef * d)[mask]
    return decomp.from_eigenbasis(Q_eig)


def q_residuals(Q, rho, drho):
    r = mat_sqrt(rho)
    res_sld = np.linalg.norm((Q @ r + r @ Q.conj().T) / 2 - drho)
    res_herm = np.linalg.norm(r @ Q - Q.conj().T @ r)
    return float(res_sld), float(res_herm)


# -- model-level quantities ---------------------------------------------------------


def _probe_point(model, theta, h):
    lo, hi = model.domain
    if theta + h <= hi:
        return theta + h
    if theta - h >= lo:
        return theta - h
    return None


def rank_at(model, theta, rank_tol=None):
    return eigh(model.rho_at(theta), rank_tol).rank


def is_singular(model, theta, rank_tol=None, probe=DEFAULT_PROBE):
    """True when the rank at ``theta`` differs from the rank at a neighbour."""
    h = probe * max(1.0, abs(theta))
    lo, hi = model.domain
    r0 = rank_at(model, theta, rank_tol)
    for t in (theta - h, theta + h):
        if lo <= t <= hi and rank_at(model, t, rank_tol) != r0:
            return True
    return False


def _local_step_cap(curves, rank_tol):
    """Step cap from the curvature scale |sqrt(l) / sqrt(l)''|^(1/2) of each
    nonvanishing eigenvalue curve."""
    cap = math.inf
    for c in curves.curves:
        if c.value <= rank_tol:
            continue
        den = math.sqrt(abs(2 * c.value * c.d2 - c.d1 * c.d1))
        if den > 0:
            cap = min(cap, F3_SCALE_FRACTION * 2 * c.value / den)
    return cap


def _richardson(values, ratio, orders):
    vals = list(values)
    for p in orders:
        f = ratio**p
        vals = [(f * b - a) / (f - 1) for a, b in zip(vals, vals[1:])]
    return vals[0]


def qfi_f3_fd(model, theta, eps0=DEFAULT_FD_EPS, curves=None, rank_tol=None):
    """One-sided Bures limit ``4 d_B(rho_t, rho_{t+e})^2 / e^2 = 8 (1 - F) / e^2``.

    Evaluated at e, e/2, e/4 and Richardson-extrapolated. The step is
    shrunk to stay inside the domain and below the local curvature scale of
    the square-root eigenvalues; steps backwards from the right end.
    Growth by more than 1.5x per halving is reported as divergence.
    """
    theta = model.check_theta(theta)
    lo, hi = model.domain
    eps = eps0
    if curves is None:
        curves = eigencurves(model, theta, rank_tol)
    tol = eigh(model.rho_at(theta), rank_tol).rank_tol if rank_tol is None else rank_tol
    cap = _local_step_cap(curves, tol)
    shrunk = False
    if cap < eps:
        eps, shrunk = cap, True
    if theta + eps <= hi:
        direction = 1
    elif theta - eps >= lo:
        direction = -1
    else:
        direction = 1 if hi - theta >= theta - lo else -1
        eps = max(hi - theta, theta - lo)
        shrunk = True
    if shrunk:
        log.debug("f3 step at theta=%r shrunk from %r to %r", theta, eps0, eps)
    rho = model.rho_at(theta)
    seq = []
    for e in (eps, eps / 2, eps / 4):
        seq.append(4.0 * bures_distance_sq(rho, model.rho_at(theta + direction * e)) / (e * e))
    g1, g2, g3 = seq
    divergent = g1 > 0 and g2 > F3_GROWTH * g1 and g3 > F3_GROWTH * g2
    value = math.inf if divergent else _richardson(seq, 2.0, (1, 2))
    return F3Estimate(value, divergent, eps, direction, shrunk, tuple(seq))


def qfi_f3_symmetric(model, theta, eps0=DEFAULT_FD_EPS):
    """Symmetric variant ``4 d_B(rho_{t-e/2}, rho_{t+e/2})^2 / e^2``; NaN at the ends."""
    lo, hi = model.domain
    seq = []
    for e in (eps0, eps0 / 2):
        a, b = theta - e / 2, theta + e / 2
        if a < lo or b > hi:
            return math.nan
        seq.append(4.0 * bures_distance_sq(model.rho_at(a), model.rho_at(b)) / (e * e))
    return _richardson(seq, 2.0, (2,))


def build_q(model, theta, rank_tol=None, singular=None):
    """Q at ``theta``: the product form, or its one-sided limit at a singular point.

    The limit extrapolates the product form at theta +/- h for h in
    (1e-3, 1e-4, 1e-5). If the differences between successive probes do not
    shrink entrywise, Q is reported divergent.
    """
    theta = model.check_theta(theta)
    rho = model.rho_at(theta)
    drho = model.drho_at(theta)
    if singular is None:
        singular = is_singular(model, theta, rank_tol)
    if not singular:
        Q = q_product(eigh(rho, rank_tol), drho, rank_tol)
        r17, r18 = q_residuals(Q, rho, drho)
        return QOperator(Q, "product", False, r17, r18, r17, r18)

    probes = []
    probe_res = [0.0, 0.0]
    for h in LIMIT_STEPS:
        t = _probe_point(model, theta, h)
        if t is None:
            raise ValueError(f"domain too small to probe Q next to theta={theta!r}")
        r_t, d_t = model.rho_at(t), model.drho_at(t)
        Q_t = q_product(eigh(r_t, rank_tol), d_t, rank_tol)
        res = q_residuals(Q_t, r_t, d_t)
        scale = max(1.0, float(np.max(np.abs(Q_t))))
        probe_res = [max(probe_res[0], res[0] / scale), max(probe_res[1], res[1] / scale)]
        probes.append(Q_t)
    d1 = np.abs(probes[1] - probes[0])
    d2 = np.abs(probes[2] - probes[1])
    floor = 1e-9 * (1.0 + np.abs(probes[2]))
    if np.any((d2 > d1) & (d2 > floor)):
        nan = np.full_like(probes[0], np.nan)
        return QOperator(nan, "limit", True, math.inf, math.inf, probe_res[0], probe_res[1])
    Q = _richardson(probes, 10.0, (1, 2))
    r17, r18 = q_residuals(Q, rho, drho)
    return QOperator(Q, "limit", False, r17, r18, probe_res[0], probe_res[1])


def _sld_sup(model, t, rank_tol):
    return solve_sld(eigh(model.rho_at(t), rank_tol), model.drho_at(t), rank_tol).sup_element


def sld_bounded(model, theta, rank_tol=None, singular=None):
    """Growth test: the SLD is unbounded when its largest defined element keeps
    growing (by at least 2x per decade) as probes approach a singular point."""
    if singular is None:
        singular = is_singular(model, theta, rank_tol)
    if not singular:
        return True
    sups = []
    for h in LIMIT_STEPS:
        t = _probe_point(model, theta, h)
        if t is None:
            return True
        sups.append(_sld_sup(model, t, rank_tol))
    s1, s2, s3 = sups
    return not (s2 > SLD_GROWTH * s1 and s3 > SLD_GROWTH * s2)


def _matched_curves(model, theta, target, rank_tol):
    """Curves at ``target`` in the same order as those at ``theta``."""
    there = eigencurves(model, target, rank_tol)
    if model.eigencurves is not None:
        return there
    V0 = split_degenerate(model, theta, eigh(model.rho(theta), rank_tol))
    V1 = split_degenerate(model, target, eigh(model.rho(target), rank_tol))
    order = np.argmax(np.abs(V0.conj().T @ V1) ** 2, axis=1)
    return type(there)(there.theta, tuple(there.curves[k] for k in order), there.policy)


def delta_discrepancy(curves, rank_tol, model=None, probe=DEFAULT_PROBE):
    """``sum 2 lambda''`` over curves vanishing at the point.

    With ``model`` given, also evaluates ``sum lambda'^2 / lambda`` at two
    points next to it; if that grows (by 2x between the probes) the limit is
    infinite, otherwise it should match the second-derivative form.
    """
    kernel = tuple(k for k, c in enumerate(curves.curves) if c.value <= rank_tol)
    value = float(sum(2.0 * curves.curves[k].d2 for k in kernel))
    reliable = all(curves.curves[k].reliable for k in kernel)
    if model is None or not kernel:
        return DeltaResult(value, kernel, value, True, reliable)
    theta = curves.theta
    limits = []
    for h in (probe, probe / 10):
        t = _probe_point(model, theta, h * max(1.0, abs(theta)))
        if t is None:
            return DeltaResult(value, kernel, math.nan, False, reliable)
        near = _matched_curves(model, theta, t, rank_tol)
        total = 0.0
        for k in kernel:
            c = near.curves[k]
            total += c.d1 * c.d1 / c.value if c.value > 0 else math.inf
        limits.append(total)
    a, b = limits
    if not math.isfinite(b) or (a > 0 and b > SLD_GROWTH * a):
        return DeltaResult(value, kernel, math.inf, False, reliable)
    consistent = abs(b - value) <= 1e-3 * max(1.0, abs(value))
    return DeltaResult(value, kernel, b, consistent, reliable)


def qfi_report(model, theta, rank_tol=None, fd_eps=DEFAULT_FD_EPS, probe=DEFAULT_PROBE):
    """All QFI diagnostics at one parameter point."""
    theta = model.check_theta(theta)
    rho = model.rho_at(theta)
    drho = model.drho_at(theta)
    decomp = eigh(rho, rank_tol)
    tol = decomp.rank_tol
    singular = is_singular(model, theta, rank_tol, probe)
    warnings = []

    curves = eigencurves(model, theta, rank_tol)
    if not curves.reliable:
        warnings.append("eigenvalue curve matching ambiguous; delta unreliable")
    f2 = qfi_f2(decomp, drho, tol)
    f3 = qfi_f3_fd(model, theta, fd_eps, curves, tol)
    if f3.shrunk:
        warnings.append(f"f3 step shrunk to {f3.eps:.3e}")
    Q = build_q(model, theta, rank_tol, singular)
    delta = delta_discrepancy(curves, tol, model, probe)
    if delta.kernel_curves and math.isfinite(delta.limit_value) and not delta.consistent:
        warnings.append(f"delta limit form {delta.limit_value!r} disagrees with {delta.value!r}")
    sld = solve_sld(decomp, drho, tol)
    return QfiReport(
        theta=theta,
        rank=decomp.rank,
        is_singular=singular,
        f1_q=Q.norm_sq,
        f2=f2,
        f3=f3.value,
        f3_symmetric=qfi_f3_symmetric(model, theta, f3.eps),
        delta=delta.value,
        sld_sup_element=sld.sup_element,
        sld_bounded_verdict=sld_bounded(model, theta, rank_tol, singular),
        f3_divergent=f3.divergent,
        q_divergent=Q.divergent,
        q_construction=Q.construction,
        f3_eps=f3.eps,
        drho_source=model.drho_source,
        eigencurve_source=model.eigencurve_source,
        warnings=tuple(warnings),
    )
